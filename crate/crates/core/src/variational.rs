//! Composite delta-nabla functionals and their Euler–Lagrange residuals.
//!
//! A [`CompositeProblem`] describes
//!
//! ```text
//! L[y] = H( ∫_a^b f_1(t, y^σ, y^Δ) Δt, .., ∫_a^b f_k(t, y^σ, y^Δ) Δt,
//!           ∫_a^b f_{k+1}(t, y^ρ, y^∇) ∇t, .., ∫_a^b f_{k+n}(t, y^ρ, y^∇) ∇t )
//! ```
//!
//! with `y(a) = y_a`, `y(b) = y_b`. Two residual evaluators are provided:
//! [`CompositeProblem::theorem_main_residual`] works on any isolated scale
//! and any `k, n`; [`CompositeProblem::corollary_z_residual`] is the explicit
//! `k = n = 1` integer-scale form written with `t ± 1` shifts. On integer
//! scales the two must agree.
//!
//! The operators `Δ/Δt` and `∇/∇t` applied to a composed expression such as
//! `f_v[ŷ]` are evaluated as difference quotients of that expression viewed
//! as a grid function.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::solver::{EvalError, ResidualSystem};
use crate::timescale::{GridFunction, TimeScale, TimeScaleError};

/// Maximum mismatch tolerated between a grid function and the boundary data.
pub const BOUNDARY_TOLERANCE: f64 = 1e-12;

/// Raised by an integrand when its arguments leave the region where it is
/// defined (square-root argument, vanishing denominator, ...).
#[derive(Debug, Clone, PartialEq, Error)]
#[error("domain guard `{guard}` violated: {detail}")]
pub struct GuardViolation {
    pub guard: &'static str,
    pub detail: String,
}

impl GuardViolation {
    pub fn new(guard: &'static str, detail: impl Into<String>) -> Self {
        Self {
            guard,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VariationalError {
    #[error(transparent)]
    TimeScale(#[from] TimeScaleError),
    #[error(transparent)]
    Guard(#[from] GuardViolation),
    #[error("{kind:?} integrand placed in the {slot} list")]
    MisplacedIntegrand { kind: IntegralKind, slot: &'static str },
    #[error("a composite problem needs at least one integrand")]
    NoIntegrands,
    #[error("outer function has arity {arity} but the problem has {integrands} integrands")]
    ArityMismatch { arity: usize, integrands: usize },
    #[error("outer function lists {partials} partials for arity {arity}")]
    PartialsMismatch { arity: usize, partials: usize },
    #[error("grid function is not defined on the problem's time scale")]
    ScaleMismatch,
    #[error("boundary value at t = {t} is {found}, expected {expected}")]
    BoundaryMismatch { t: f64, expected: f64, found: f64 },
    #[error("{0}")]
    Unsupported(&'static str),
    #[error("{what} undefined at t = {t} under the strict endpoint policy")]
    EndpointDerivative { what: &'static str, t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IntegralKind {
    /// Integrated with `Δt`, consuming `(t, y^σ(t), y^Δ(t))`.
    Delta,
    /// Integrated with `∇t`, consuming `(t, y^ρ(t), y^∇(t))`.
    Nabla,
}

/// How derivatives are treated where a formula reaches past the ends of the
/// scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum EndpointPolicy {
    /// `y^Δ(max)`, `y^∇(min)` and differences of expressions there are errors.
    #[default]
    Strict,
    /// `σ(max) = max` and `ρ(min) = min` are used as-is, so every difference
    /// at the clamped endpoint is zero.
    Clamped,
}

/// Which of the two Euler–Lagrange equations to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ResidualForm {
    Delta,
    Nabla,
}

/// Scalar function of `(t, y, v)` that may refuse its arguments.
pub type PointFn = Arc<dyn Fn(f64, f64, f64) -> Result<f64, GuardViolation> + Send + Sync>;

/// Scalar function of a vector argument.
pub type VectorFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// One integrand `f_i` together with its partials `f_{iy}`, `f_{iv}`.
#[derive(Clone)]
pub struct Integrand {
    kind: IntegralKind,
    label: String,
    value: PointFn,
    partial_y: PointFn,
    partial_v: PointFn,
}

impl fmt::Debug for Integrand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Integrand")
            .field("kind", &self.kind)
            .field("label", &self.label)
            .finish_non_exhaustive()
    }
}

/// Outcome of comparing supplied partials with central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartialsCheck {
    pub err_y: f64,
    pub err_v: f64,
}

impl PartialsCheck {
    pub fn max_error(&self) -> f64 {
        self.err_y.max(self.err_v)
    }
}

/// `|a - b| / max(1, |a|, |b|)`: relative error with a unit floor so that
/// partials that vanish at the sample point are compared absolutely.
pub fn scaled_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

/// Central-difference step `1e-6 · max(1, |x|)`.
fn fd_step(x: f64) -> f64 {
    1e-6 * 1f64.max(x.abs())
}

impl Integrand {
    pub fn new<F, Fy, Fv>(kind: IntegralKind, value: F, partial_y: Fy, partial_v: Fv) -> Self
    where
        F: Fn(f64, f64, f64) -> Result<f64, GuardViolation> + Send + Sync + 'static,
        Fy: Fn(f64, f64, f64) -> Result<f64, GuardViolation> + Send + Sync + 'static,
        Fv: Fn(f64, f64, f64) -> Result<f64, GuardViolation> + Send + Sync + 'static,
    {
        Self {
            kind,
            label: String::new(),
            value: Arc::new(value),
            partial_y: Arc::new(partial_y),
            partial_v: Arc::new(partial_v),
        }
    }

    /// Infallible convenience constructor for smooth integrands.
    pub fn smooth<F, Fy, Fv>(kind: IntegralKind, value: F, partial_y: Fy, partial_v: Fv) -> Self
    where
        F: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        Fy: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        Fv: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self::new(
            kind,
            move |t, y, v| Ok(value(t, y, v)),
            move |t, y, v| Ok(partial_y(t, y, v)),
            move |t, y, v| Ok(partial_v(t, y, v)),
        )
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn kind(&self) -> IntegralKind {
        self.kind
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn value(&self, t: f64, y: f64, v: f64) -> Result<f64, GuardViolation> {
        (self.value)(t, y, v)
    }

    pub fn partial_y(&self, t: f64, y: f64, v: f64) -> Result<f64, GuardViolation> {
        (self.partial_y)(t, y, v)
    }

    pub fn partial_v(&self, t: f64, y: f64, v: f64) -> Result<f64, GuardViolation> {
        (self.partial_v)(t, y, v)
    }

    /// Compares the supplied partials with central finite differences of
    /// the value at `(t, y, v)`.
    pub fn check_partials(&self, t: f64, y: f64, v: f64) -> Result<PartialsCheck, GuardViolation> {
        let hy = fd_step(y);
        let hv = fd_step(v);
        let fd_y = (self.value(t, y + hy, v)? - self.value(t, y - hy, v)?) / (2.0 * hy);
        let fd_v = (self.value(t, y, v + hv)? - self.value(t, y, v - hv)?) / (2.0 * hv);
        Ok(PartialsCheck {
            err_y: scaled_error(self.partial_y(t, y, v)?, fd_y),
            err_v: scaled_error(self.partial_v(t, y, v)?, fd_v),
        })
    }
}

/// The outer function `H : ℝ^{k+n} → ℝ` and its partials `H'_i`.
#[derive(Clone)]
pub struct OuterFunction {
    arity: usize,
    value: VectorFn,
    partials: Vec<VectorFn>,
}

impl fmt::Debug for OuterFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OuterFunction")
            .field("arity", &self.arity)
            .finish_non_exhaustive()
    }
}

impl OuterFunction {
    pub fn new(arity: usize, value: VectorFn, partials: Vec<VectorFn>) -> Result<Self, VariationalError> {
        if arity == 0 || partials.len() != arity {
            return Err(VariationalError::PartialsMismatch {
                arity,
                partials: partials.len(),
            });
        }
        Ok(Self { arity, value, partials })
    }

    /// `H(u) = u`.
    pub fn identity() -> Self {
        Self {
            arity: 1,
            value: Arc::new(|x| x[0]),
            partials: vec![Arc::new(|_| 1.0)],
        }
    }

    /// `H(u, v) = u · v`, with `H'_1 = v` and `H'_2 = u`.
    pub fn product() -> Self {
        Self {
            arity: 2,
            value: Arc::new(|x| x[0] * x[1]),
            partials: vec![Arc::new(|x| x[1]), Arc::new(|x| x[0])],
        }
    }

    /// `H(x) = Σ x_i`.
    pub fn sum(arity: usize) -> Self {
        Self {
            arity,
            value: Arc::new(|x| x.iter().sum()),
            partials: (0..arity).map(|_| Arc::new(|_: &[f64]| 1.0) as VectorFn).collect(),
        }
    }

    /// `c · H`.
    pub fn scaled(self, c: f64) -> Self {
        let value = self.value;
        Self {
            arity: self.arity,
            value: Arc::new(move |x| c * value(x)),
            partials: self
                .partials
                .into_iter()
                .map(|p| Arc::new(move |x: &[f64]| c * p(x)) as VectorFn)
                .collect(),
        }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    pub fn partial(&self, i: usize, x: &[f64]) -> f64 {
        (self.partials[i])(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.partials.iter().map(|p| p(x)).collect()
    }

    /// Largest scaled error between the partials and central differences.
    pub fn check_partials(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        let mut probe = x.to_vec();
        for i in 0..self.arity {
            let h = fd_step(x[i]);
            probe[i] = x[i] + h;
            let up = self.value(&probe);
            probe[i] = x[i] - h;
            let down = self.value(&probe);
            probe[i] = x[i];
            worst = worst.max(scaled_error(self.partial(i, x), (up - down) / (2.0 * h)));
        }
        worst
    }
}

/// Residual values on `T_κ^κ`; each point may fail independently.
#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseResidual {
    pub times: Vec<f64>,
    pub values: Vec<Result<f64, VariationalError>>,
}

impl PointwiseResidual {
    /// All values, or the first per-point error.
    pub fn into_values(self) -> Result<Vec<f64>, VariationalError> {
        self.values.into_iter().collect()
    }

    pub fn at(&self, t: f64) -> Option<&Result<f64, VariationalError>> {
        self.times.iter().position(|&s| s == t).map(|i| &self.values[i])
    }
}

/// Which difference equation of the integer-scale corollary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CorollaryEquation {
    First,
    Second,
}

type Cell = Result<f64, VariationalError>;

/// `H(∫f_1Δt, .., ∫f_{k+n}∇t)` with two-point boundary data.
#[derive(Debug, Clone)]
pub struct CompositeProblem {
    scale: TimeScale,
    delta: Vec<Integrand>,
    nabla: Vec<Integrand>,
    outer: OuterFunction,
    boundary: (f64, f64),
}

impl CompositeProblem {
    pub fn new(
        scale: TimeScale,
        delta: Vec<Integrand>,
        nabla: Vec<Integrand>,
        outer: OuterFunction,
        boundary: (f64, f64),
    ) -> Result<Self, VariationalError> {
        if let Some(f) = delta.iter().find(|f| f.kind != IntegralKind::Delta) {
            return Err(VariationalError::MisplacedIntegrand {
                kind: f.kind,
                slot: "delta",
            });
        }
        if let Some(f) = nabla.iter().find(|f| f.kind != IntegralKind::Nabla) {
            return Err(VariationalError::MisplacedIntegrand {
                kind: f.kind,
                slot: "nabla",
            });
        }
        let integrands = delta.len() + nabla.len();
        if integrands == 0 {
            return Err(VariationalError::NoIntegrands);
        }
        if outer.arity != integrands {
            return Err(VariationalError::ArityMismatch {
                arity: outer.arity,
                integrands,
            });
        }
        Ok(Self {
            scale,
            delta,
            nabla,
            outer,
            boundary,
        })
    }

    pub fn scale(&self) -> &TimeScale {
        &self.scale
    }

    pub fn delta_integrands(&self) -> &[Integrand] {
        &self.delta
    }

    pub fn nabla_integrands(&self) -> &[Integrand] {
        &self.nabla
    }

    pub fn outer(&self) -> &OuterFunction {
        &self.outer
    }

    pub fn boundary(&self) -> (f64, f64) {
        self.boundary
    }

    /// Number of interior unknowns.
    pub fn interior_len(&self) -> usize {
        self.scale.len() - 2
    }

    /// Full grid function from interior values, with boundary data at the ends.
    pub fn with_interior(&self, interior: &[f64]) -> Result<GridFunction<'_>, VariationalError> {
        let mut values = Vec::with_capacity(interior.len() + 2);
        values.push(self.boundary.0);
        values.extend_from_slice(interior);
        values.push(self.boundary.1);
        Ok(GridFunction::new(&self.scale, values)?)
    }

    fn check_state(&self, y: &GridFunction<'_>) -> Result<(), VariationalError> {
        if y.scale() != &self.scale {
            return Err(VariationalError::ScaleMismatch);
        }
        let ends = [
            (self.scale.min(), self.boundary.0, y.at_index(0)),
            (self.scale.max(), self.boundary.1, y.at_index(self.scale.last_index())),
        ];
        for (t, expected, found) in ends {
            if (found - expected).abs() > BOUNDARY_TOLERANCE {
                return Err(VariationalError::BoundaryMismatch { t, expected, found });
            }
        }
        Ok(())
    }

    /// Entry `i` is `∫ f_i Δt` for delta integrands and `∫ f_i ∇t` for
    /// nabla integrands, delta entries first.
    pub fn eval_component_integrals(&self, y: &GridFunction<'_>) -> Result<Vec<f64>, VariationalError> {
        self.check_state(y)?;
        let s = &self.scale;
        let (a, b) = (s.min(), s.max());
        let last = s.last_index();
        let ydelta = y.delta_derivative();
        let ynabla = y.nabla_derivative();
        let mut out = Vec::with_capacity(self.delta.len() + self.nabla.len());
        for f in &self.delta {
            // the value at max never enters a delta integral
            let mut vals = vec![0.0; s.len()];
            for i in s.kappa_upper() {
                vals[i] = f.value(s.point(i), y.at_index(i + 1), ydelta.at_index(i)?)?;
            }
            out.push(GridFunction::new(s, vals)?.delta_integral(a, b)?);
        }
        for f in &self.nabla {
            let mut vals = vec![0.0; s.len()];
            for (i, slot) in vals.iter_mut().enumerate().take(last + 1).skip(1) {
                *slot = f.value(s.point(i), y.at_index(i - 1), ynabla.at_index(i)?)?;
            }
            out.push(GridFunction::new(s, vals)?.nabla_integral(a, b)?);
        }
        Ok(out)
    }

    /// `L[y]`.
    pub fn eval_functional(&self, y: &GridFunction<'_>) -> Result<f64, VariationalError> {
        Ok(self.outer.value(&self.eval_component_integrals(y)?))
    }

    /// Left-hand side of the delta-nabla Euler–Lagrange equation in delta
    /// or nabla form, on `T_κ^κ`. `H'_i` are evaluated once at the
    /// component integrals of `y`.
    pub fn theorem_main_residual(
        &self,
        y: &GridFunction<'_>,
        form: ResidualForm,
        policy: EndpointPolicy,
    ) -> Result<PointwiseResidual, VariationalError> {
        let integrals = self.eval_component_integrals(y)?;
        let h = self.outer.gradient(&integrals);
        let (h_delta, h_nabla) = h.split_at(self.delta.len());
        let ops = GridOps::new(&self.scale, y.values(), policy);

        // [ŷ]-compositions of f_{iy}, f_{iv} for delta integrands and
        // {ŷ}-compositions for nabla integrands
        let fy_d: Vec<Vec<Cell>> = self
            .delta
            .iter()
            .map(|f| ops.square(|t, a, v| f.partial_y(t, a, v)))
            .collect();
        let fv_d: Vec<Vec<Cell>> = self
            .delta
            .iter()
            .map(|f| ops.square(|t, a, v| f.partial_v(t, a, v)))
            .collect();
        let fy_n: Vec<Vec<Cell>> = self
            .nabla
            .iter()
            .map(|f| ops.curly(|t, a, v| f.partial_y(t, a, v)))
            .collect();
        let fv_n: Vec<Vec<Cell>> = self
            .nabla
            .iter()
            .map(|f| ops.curly(|t, a, v| f.partial_v(t, a, v)))
            .collect();

        let s = &self.scale;
        let n = s.len();
        let times: Vec<f64> = s.kappa_both().map(|i| s.point(i)).collect();
        let values = match form {
            ResidualForm::Delta => {
                // r(j) = Σ H'_i ν(j) (f_{iy}{ŷ}(j) - ∇ f_{iv}{ŷ}(j))
                let r: Vec<Cell> = (0..n)
                    .map(|j| {
                        let mut acc = 0.0;
                        for (q, hq) in h_nabla.iter().enumerate() {
                            acc += hq * s.nu_at(j) * (fy_n[q][j].clone()? - ops.nabla_of(&fv_n[q], j)?);
                        }
                        Ok(acc)
                    })
                    .collect();
                s.kappa_both()
                    .map(|i| {
                        let si = s.sigma_index(i);
                        let mut acc = 0.0;
                        for (p, hp) in h_delta.iter().enumerate() {
                            acc += hp * (fy_d[p][i].clone()? - ops.delta_of(&fv_d[p], i)?);
                        }
                        for (q, hq) in h_nabla.iter().enumerate() {
                            acc += hq * (fy_n[q][si].clone()? - ops.delta_of(&fv_n[q], i)?);
                        }
                        // Δ of the function j ↦ r(σ(j)), at i
                        let r_sigma: Vec<Cell> = (0..n).map(|j| r[s.sigma_index(j)].clone()).collect();
                        acc += ops.delta_of(&r_sigma, i)?;
                        Ok(acc)
                    })
                    .collect()
            }
            ResidualForm::Nabla => {
                // q(j) = Σ H'_i μ(j) (f_{iy}[ŷ](j) - Δ f_{iv}[ŷ](j))
                let q: Vec<Cell> = (0..n)
                    .map(|j| {
                        let mut acc = 0.0;
                        for (p, hp) in h_delta.iter().enumerate() {
                            acc += hp * s.mu_at(j) * (fy_d[p][j].clone()? - ops.delta_of(&fv_d[p], j)?);
                        }
                        Ok(acc)
                    })
                    .collect();
                s.kappa_both()
                    .map(|i| {
                        let ri = s.rho_index(i);
                        let mut acc = 0.0;
                        for (p, hp) in h_delta.iter().enumerate() {
                            acc += hp * (fy_d[p][ri].clone()? - ops.nabla_of(&fv_d[p], i)?);
                        }
                        for (k, hk) in h_nabla.iter().enumerate() {
                            acc += hk * (fy_n[k][i].clone()? - ops.nabla_of(&fv_n[k], i)?);
                        }
                        let q_rho: Vec<Cell> = (0..n).map(|j| q[s.rho_index(j)].clone()).collect();
                        acc -= ops.nabla_of(&q_rho, i)?;
                        Ok(acc)
                    })
                    .collect()
            }
        };
        Ok(PointwiseResidual { times, values })
    }

    /// The two Euler–Lagrange difference equations for `k = n = 1` on a
    /// contiguous integer scale `{a, .., b}`, evaluated at `{a+1, .., b-1}`.
    ///
    /// Written directly with the shifts `t ± 1`, `t ± 2`; on the finite
    /// slice `t + 1` saturates at `b` and `t - 1` at `a`.
    pub fn corollary_z_residual(
        &self,
        y: &GridFunction<'_>,
        which: CorollaryEquation,
        policy: EndpointPolicy,
    ) -> Result<PointwiseResidual, VariationalError> {
        if self.delta.len() != 1 || self.nabla.len() != 1 {
            return Err(VariationalError::Unsupported(
                "the integer-scale corollary needs exactly one delta and one nabla integrand",
            ));
        }
        if !self.scale.is_integer_range() {
            return Err(VariationalError::Unsupported(
                "the integer-scale corollary needs a contiguous integer time scale",
            ));
        }
        self.check_state(y)?;
        let f = &self.delta[0];
        let g = &self.nabla[0];
        let yv = y.values();
        let b = self.scale.last_index();
        let time = |s: usize| self.scale.point(s);
        let up = |s: usize| (s + 1).min(b);
        let down = |s: usize| s.saturating_sub(1);
        let forward = |s: usize| -> Cell {
            if s < b {
                Ok(yv[s + 1] - yv[s])
            } else {
                match policy {
                    EndpointPolicy::Clamped => Ok(0.0),
                    EndpointPolicy::Strict => Err(VariationalError::EndpointDerivative {
                        what: "Δy", t: time(s)
                    }),
                }
            }
        };
        let backward = |s: usize| -> Cell {
            if s > 0 {
                Ok(yv[s] - yv[s - 1])
            } else {
                match policy {
                    EndpointPolicy::Clamped => Ok(0.0),
                    EndpointPolicy::Strict => Err(VariationalError::EndpointDerivative {
                        what: "∇y", t: time(s)
                    }),
                }
            }
        };

        // F = Σ_{t=a}^{b-1} f(t, y(t+1), Δy(t)),  G = Σ_{t=a+1}^{b} g(t, y(t-1), ∇y(t))
        let mut big_f = 0.0;
        for s in 0..b {
            big_f += f.value(time(s), yv[s + 1], yv[s + 1] - yv[s])?;
        }
        let mut big_g = 0.0;
        for s in 1..=b {
            big_g += g.value(time(s), yv[s - 1], yv[s] - yv[s - 1])?;
        }
        let h1 = self.outer.partial(0, &[big_f, big_g]);
        let h2 = self.outer.partial(1, &[big_f, big_g]);

        // ∂2 f(s, y(s+1), Δy(s)), ∂3 f(..), ∂2 g(s, y(s-1), ∇y(s)), ∂3 g(..)
        let d2f = |s: usize| -> Cell { Ok(f.partial_y(time(s), yv[up(s)], forward(s)?)?) };
        let d3f = |s: usize| -> Cell { Ok(f.partial_v(time(s), yv[up(s)], forward(s)?)?) };
        let d2g = |s: usize| -> Cell { Ok(g.partial_y(time(s), yv[down(s)], backward(s)?)?) };
        let d3g = |s: usize| -> Cell { Ok(g.partial_v(time(s), yv[down(s)], backward(s)?)?) };

        let eq_first = |t: usize| -> Cell {
            let t1 = up(t);
            let t2 = up(t1);
            let a_term = d2f(t)? - (d3f(t1)? - d3f(t)?);
            let b_term = d2g(t1)? - (d3g(t1)? - d3g(t)?);
            // E(s) = ∂2 g(s, y(s-1), ∇y(s)) - ∇ ∂3 g(s, y(s-1), ∇y(s))
            let e = |s: usize| -> Cell { Ok(d2g(s)? - (d3g(s)? - d3g(down(s))?)) };
            let c_term = if t1 == t2 { 0.0 } else { e(t2)? - e(t1)? };
            Ok(h1 * a_term + h2 * b_term + h2 * c_term)
        };
        let eq_second = |t: usize| -> Cell {
            let tm1 = down(t);
            let tm2 = down(tm1);
            let a_term = d2f(tm1)? - (d3f(t)? - d3f(tm1)?);
            // D(s) = ∂2 f(s, y(s+1), Δy(s)) - Δ ∂3 f(s, y(s+1), Δy(s))
            let d = |s: usize| -> Cell { Ok(d2f(s)? - (d3f(up(s))? - d3f(s)?)) };
            let c_term = if tm1 == tm2 { 0.0 } else { d(tm1)? - d(tm2)? };
            let b_term = d2g(t)? - (d3g(t)? - d3g(tm1)?);
            Ok(h1 * a_term - h1 * c_term + h2 * b_term)
        };

        let times = (1..b).map(time).collect();
        let values = (1..b)
            .map(|t| match which {
                CorollaryEquation::First => eq_first(t),
                CorollaryEquation::Second => eq_second(t),
            })
            .collect();
        Ok(PointwiseResidual { times, values })
    }

    /// Packages [`Self::theorem_main_residual`] as a square system in the
    /// interior values, with the functional attached.
    pub fn into_residual_system(self, form: ResidualForm, policy: EndpointPolicy) -> ResidualSystem {
        let problem = Arc::new(self);
        let m = problem.interior_len();
        let label = format!("theorem-main {form:?} ({policy:?})");
        let for_functional = Arc::clone(&problem);
        ResidualSystem::new(m, label, move |x: &[f64]| -> Result<Vec<f64>, EvalError> {
            let y = problem.with_interior(x)?;
            Ok(problem.theorem_main_residual(&y, form, policy)?.into_values()?)
        })
        .with_functional(move |x: &[f64]| -> Result<f64, EvalError> {
            let y = for_functional.with_interior(x)?;
            Ok(for_functional.eval_functional(&y)?)
        })
    }
}

/// Grid compositions and difference quotients under an endpoint policy.
struct GridOps<'a> {
    scale: &'a TimeScale,
    y: &'a [f64],
    policy: EndpointPolicy,
}

impl<'a> GridOps<'a> {
    fn new(scale: &'a TimeScale, y: &'a [f64], policy: EndpointPolicy) -> Self {
        Self { scale, y, policy }
    }

    fn endpoint(&self, what: &'static str, i: usize) -> Cell {
        match self.policy {
            EndpointPolicy::Clamped => Ok(0.0),
            EndpointPolicy::Strict => Err(VariationalError::EndpointDerivative {
                what,
                t: self.scale.point(i),
            }),
        }
    }

    fn y_delta(&self, i: usize) -> Cell {
        if i < self.scale.last_index() {
            Ok((self.y[i + 1] - self.y[i]) / self.scale.mu_at(i))
        } else {
            self.endpoint("y^Δ", i)
        }
    }

    fn y_nabla(&self, i: usize) -> Cell {
        if i > 0 {
            Ok((self.y[i] - self.y[i - 1]) / self.scale.nu_at(i))
        } else {
            self.endpoint("y^∇", i)
        }
    }

    /// `j ↦ φ(t_j, y^σ(t_j), y^Δ(t_j))`.
    fn square(&self, phi: impl Fn(f64, f64, f64) -> Result<f64, GuardViolation>) -> Vec<Cell> {
        (0..self.scale.len())
            .map(|j| {
                let v = self.y_delta(j)?;
                Ok(phi(self.scale.point(j), self.y[self.scale.sigma_index(j)], v)?)
            })
            .collect()
    }

    /// `j ↦ φ(t_j, y^ρ(t_j), y^∇(t_j))`.
    fn curly(&self, phi: impl Fn(f64, f64, f64) -> Result<f64, GuardViolation>) -> Vec<Cell> {
        (0..self.scale.len())
            .map(|j| {
                let v = self.y_nabla(j)?;
                Ok(phi(self.scale.point(j), self.y[self.scale.rho_index(j)], v)?)
            })
            .collect()
    }

    fn delta_of(&self, e: &[Cell], i: usize) -> Cell {
        if i < self.scale.last_index() {
            Ok((e[i + 1].clone()? - e[i].clone()?) / self.scale.mu_at(i))
        } else {
            self.endpoint("Δ of a composed expression", i)
        }
    }

    fn nabla_of(&self, e: &[Cell], i: usize) -> Cell {
        if i > 0 {
            Ok((e[i].clone()? - e[i - 1].clone()?) / self.scale.nu_at(i))
        } else {
            self.endpoint("∇ of a composed expression", i)
        }
    }
}
