//! Firm production/investment model on the integer scale `{0, 1, .., T}`.
//!
//! The firm minimizes the product of a discounted cost functional `K` and a
//! technology functional `a`, each discretized with either delta or nabla
//! integrals. Revenue enters through the hyperbolic demand
//! `p(y) = p0 + B / (y - y_floor)`.
//!
//! Jumps are clamped at the ends of the horizon (`σ(T) = T`, `ρ(0) = 0`),
//! so `Δy(T) = 0` and `∇y(0) = 0` wherever an expression reaches past the
//! boundary.

use std::fmt;

use thiserror::Error;

use crate::solver::{EvalError, ResidualSystem};
use crate::timescale::{GridFunction, TimeScale};
use crate::variational::{CompositeProblem, GuardViolation, IntegralKind, Integrand, OuterFunction, VariationalError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EconError {
    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParam { key: &'static str, reason: String },
    #[error(transparent)]
    Guard(#[from] GuardViolation),
    #[error(transparent)]
    Variational(#[from] VariationalError),
    #[error("state must have {expected} values (y_0..y_T), got {found}")]
    StateLength { expected: usize, found: usize },
    #[error("t = {t} is outside {{0, .., {horizon}}}")]
    OutsideHorizon { t: f64, horizon: usize },
}

/// Model coefficients. `y_floor` is the sales floor in the demand hyperbola,
/// distinct from the initial sales rate `y_initial`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirmParams {
    pub rho: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub lambda: f64,
    pub beta: f64,
    pub b: f64,
    pub big_b: f64,
    pub p0: f64,
    pub y_floor: f64,
    pub horizon: usize,
    pub y_initial: f64,
    pub y_terminal: f64,
}

impl Default for FirmParams {
    fn default() -> Self {
        Self::reference()
    }
}

impl FirmParams {
    /// The reference parameter set (`ρ = 0.05`).
    pub fn reference() -> Self {
        Self {
            rho: 0.05,
            c0: 3.0,
            c1: 0.5,
            c2: 3.0,
            lambda: 0.5,
            beta: 0.25,
            b: 4.0,
            big_b: 2.0,
            p0: 1.0,
            y_floor: 1.0,
            horizon: 3,
            y_initial: 2.0,
            y_terminal: 3.0,
        }
    }

    /// The reference set with `ρ = 0.02`.
    pub fn table2() -> Self {
        Self {
            rho: 0.02,
            ..Self::reference()
        }
    }

    pub fn with_rho(self, rho: f64) -> Self {
        Self { rho, ..self }
    }

    pub fn validate(&self) -> Result<(), EconError> {
        let bad = |key: &'static str, reason: &str| {
            Err(EconError::InvalidParam {
                key,
                reason: reason.to_string(),
            })
        };
        let named = [
            ("rho", self.rho),
            ("c0", self.c0),
            ("c1", self.c1),
            ("c2", self.c2),
            ("lambda", self.lambda),
            ("beta", self.beta),
            ("b", self.b),
            ("B", self.big_b),
            ("p0", self.p0),
            ("y_floor", self.y_floor),
            ("y_initial", self.y_initial),
            ("y_terminal", self.y_terminal),
        ];
        if let Some((key, _)) = named.iter().find(|(_, v)| !v.is_finite()) {
            return bad(key, "must be finite");
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad("rho", "must lie in (0, 1)");
        }
        for (key, v) in [
            ("c0", self.c0),
            ("c1", self.c1),
            ("c2", self.c2),
            ("lambda", self.lambda),
            ("beta", self.beta),
            ("b", self.b),
            ("B", self.big_b),
        ] {
            if v <= 0.0 {
                return bad(key, "must be positive");
            }
        }
        if self.horizon < 2 {
            return bad("T", "must be at least 2");
        }
        if self.y_initial <= self.y_floor {
            return bad("y_initial", "must exceed y_floor");
        }
        if self.y_terminal <= self.y_floor {
            return bad("y_terminal", "must exceed y_floor");
        }
        Ok(())
    }

    /// Number of interior unknowns `y_1, .., y_{T-1}`.
    pub fn interior_len(&self) -> usize {
        self.horizon - 1
    }

    pub fn scale(&self) -> TimeScale {
        TimeScale::integers(0, self.horizon as i64).expect("horizon is at least 2")
    }

    /// `(y_0, interior.., y_T)`.
    pub fn full_state(&self, interior: &[f64]) -> Vec<f64> {
        let mut y = Vec::with_capacity(interior.len() + 2);
        y.push(self.y_initial);
        y.extend_from_slice(interior);
        y.push(self.y_terminal);
        y
    }

    /// Straight line between the boundary values.
    pub fn linear_interior(&self) -> Vec<f64> {
        crate::solver::linear_guess(self.y_initial, self.y_terminal, self.interior_len())
    }

    fn disc_delta(&self, t: f64) -> f64 {
        (1.0 + self.rho).powf(t - self.horizon as f64)
    }

    fn disc_nabla(&self, t: f64) -> f64 {
        (1.0 - self.rho).powf(self.horizon as f64 - t)
    }
}

/// Which functional pair `K_D · a_D` is minimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProblemKind {
    DeltaDelta,
    NablaNabla,
    DeltaNabla,
    NablaDelta,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 4] = [
        ProblemKind::DeltaDelta,
        ProblemKind::NablaNabla,
        ProblemKind::DeltaNabla,
        ProblemKind::NablaDelta,
    ];

    /// Two-letter code: `DD`, `NN`, `DN`, `ND`.
    pub fn code(self) -> &'static str {
        match self {
            ProblemKind::DeltaDelta => "DD",
            ProblemKind::NablaNabla => "NN",
            ProblemKind::DeltaNabla => "DN",
            ProblemKind::NablaDelta => "ND",
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            ProblemKind::DeltaDelta => "ΔΔ",
            ProblemKind::NablaNabla => "∇∇",
            ProblemKind::DeltaNabla => "Δ∇",
            ProblemKind::NablaDelta => "∇Δ",
        }
    }

    /// Accepts codes (`DN`) and symbols (`Δ∇`), case-insensitively for codes.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        Self::ALL
            .into_iter()
            .find(|k| k.code().eq_ignore_ascii_case(s) || k.symbol() == s)
    }

    /// Mixed problems have distinct time-scale Euler–Lagrange systems.
    pub fn is_mixed(self) -> bool {
        matches!(self, ProblemKind::DeltaNabla | ProblemKind::NablaDelta)
    }

    fn cost(self) -> IntegralKind {
        match self {
            ProblemKind::DeltaDelta | ProblemKind::DeltaNabla => IntegralKind::Delta,
            ProblemKind::NablaNabla | ProblemKind::NablaDelta => IntegralKind::Nabla,
        }
    }

    fn technology(self) -> IntegralKind {
        match self {
            ProblemKind::DeltaDelta | ProblemKind::NablaDelta => IntegralKind::Delta,
            ProblemKind::NablaNabla | ProblemKind::DeltaNabla => IntegralKind::Nabla,
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EquationKind {
    /// Stationarity of the directly discretized functional.
    DirectDiscretized,
    /// Delta-form time-scale Euler–Lagrange equation.
    TimeScaleEL1,
    /// Nabla-form time-scale Euler–Lagrange equation.
    TimeScaleEL2,
}

impl EquationKind {
    pub const ALL: [EquationKind; 3] = [
        EquationKind::DirectDiscretized,
        EquationKind::TimeScaleEL1,
        EquationKind::TimeScaleEL2,
    ];

    pub fn code(self) -> &'static str {
        match self {
            EquationKind::DirectDiscretized => "direct",
            EquationKind::TimeScaleEL1 => "EL1",
            EquationKind::TimeScaleEL2 => "EL2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        Self::ALL.into_iter().find(|e| e.code().eq_ignore_ascii_case(s))
    }

    /// For `ΔΔ` and `∇∇` every variant reduces to the direct system.
    pub fn effective(self, kind: ProblemKind) -> Self {
        if kind.is_mixed() {
            self
        } else {
            EquationKind::DirectDiscretized
        }
    }
}

impl fmt::Display for EquationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// The four integrands of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FirmIntegrand {
    CostDelta,
    CostNabla,
    TechnologyDelta,
    TechnologyNabla,
}

impl FirmIntegrand {
    pub const ALL: [FirmIntegrand; 4] = [
        FirmIntegrand::CostDelta,
        FirmIntegrand::CostNabla,
        FirmIntegrand::TechnologyDelta,
        FirmIntegrand::TechnologyNabla,
    ];

    pub fn kind(self) -> IntegralKind {
        match self {
            FirmIntegrand::CostDelta | FirmIntegrand::TechnologyDelta => IntegralKind::Delta,
            FirmIntegrand::CostNabla | FirmIntegrand::TechnologyNabla => IntegralKind::Nabla,
        }
    }
}

fn floor_guard(p: &FirmParams, y: f64) -> Result<f64, GuardViolation> {
    let d = y - p.y_floor;
    if d == 0.0 || !d.is_finite() {
        return Err(GuardViolation::new(
            "y - y_floor != 0",
            format!("y = {y}, y_floor = {}", p.y_floor),
        ));
    }
    Ok(d)
}

fn sqrt_guard(p: &FirmParams, v: f64) -> Result<f64, GuardViolation> {
    let arg = v + p.b;
    if arg.is_nan() || arg <= 0.0 {
        return Err(GuardViolation::new("v + b > 0", format!("v = {v}, b = {}", p.b)));
    }
    Ok(arg.sqrt())
}

/// One of the four integrands with analytic partials.
///
/// Delta kinds are fed `(t, y^σ, Δy)` and nabla kinds `(t, y^ρ, ∇y)`; the
/// discount factor is `(1+ρ)^{t-T}` or `(1-ρ)^{T-t}` respectively.
pub fn firm_integrand(params: &FirmParams, which: FirmIntegrand) -> Integrand {
    let p = *params;
    let disc = move |t: f64| match which.kind() {
        IntegralKind::Delta => p.disc_delta(t),
        IntegralKind::Nabla => p.disc_nabla(t),
    };
    let kind = which.kind();
    match which {
        FirmIntegrand::CostDelta | FirmIntegrand::CostNabla => Integrand::new(
            kind,
            move |t, y, v| {
                let d = floor_guard(&p, y)?;
                Ok(disc(t) * (p.c0 + p.c1 * y + p.c2 * v * v - y * p.p0 - p.big_b * y / d))
            },
            move |t, y, _| {
                let d = floor_guard(&p, y)?;
                Ok(disc(t) * (p.c1 - p.p0 + p.big_b * p.y_floor / (d * d)))
            },
            move |t, _, v| Ok(disc(t) * 2.0 * p.c2 * v),
        ),
        FirmIntegrand::TechnologyDelta | FirmIntegrand::TechnologyNabla => Integrand::new(
            kind,
            move |t, y, v| Ok(disc(t) * (p.lambda * y + p.beta * sqrt_guard(&p, v)?)),
            move |t, _, _| Ok(disc(t) * p.lambda),
            move |t, _, v| Ok(disc(t) * p.beta / (2.0 * sqrt_guard(&p, v)?)),
        ),
    }
    .with_label(format!("{which:?}"))
}

/// `K_D · a_D` as a composite problem with product outer function.
pub fn firm_problem(params: &FirmParams, kind: ProblemKind) -> Result<CompositeProblem, EconError> {
    params.validate()?;
    let cost = match kind.cost() {
        IntegralKind::Delta => FirmIntegrand::CostDelta,
        IntegralKind::Nabla => FirmIntegrand::CostNabla,
    };
    let tech = match kind.technology() {
        IntegralKind::Delta => FirmIntegrand::TechnologyDelta,
        IntegralKind::Nabla => FirmIntegrand::TechnologyNabla,
    };
    let mut delta = Vec::new();
    let mut nabla = Vec::new();
    for which in [cost, tech] {
        let f = firm_integrand(params, which);
        match which.kind() {
            IntegralKind::Delta => delta.push(f),
            IntegralKind::Nabla => nabla.push(f),
        }
    }
    Ok(CompositeProblem::new(
        params.scale(),
        delta,
        nabla,
        OuterFunction::product(),
        (params.y_initial, params.y_terminal),
    )?)
}

/// The four Euler–Lagrange kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Gamma {
    OneDelta,
    OneNabla,
    TwoDelta,
    TwoNabla,
}

/// `K_Δ`, `K_∇`, `a_Δ`, `a_∇` at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Functionals {
    pub k_delta: f64,
    pub k_nabla: f64,
    pub a_delta: f64,
    pub a_nabla: f64,
}

impl Functionals {
    /// `K_D · a_D` for the given problem.
    pub fn value(&self, kind: ProblemKind) -> f64 {
        match kind {
            ProblemKind::DeltaDelta => self.k_delta * self.a_delta,
            ProblemKind::NablaNabla => self.k_nabla * self.a_nabla,
            ProblemKind::DeltaNabla => self.k_delta * self.a_nabla,
            ProblemKind::NablaDelta => self.k_nabla * self.a_delta,
        }
    }
}

/// A full state `y_0..y_T` with its clamped differences precomputed.
struct State<'p> {
    p: &'p FirmParams,
    y: Vec<f64>,
    dy: Vec<f64>,
    ny: Vec<f64>,
    sd: Vec<f64>,
    sn: Vec<f64>,
}

impl<'p> State<'p> {
    fn new(p: &'p FirmParams, y: &[f64]) -> Result<Self, EconError> {
        let n = p.horizon;
        if y.len() != n + 1 {
            return Err(EconError::StateLength {
                expected: n + 1,
                found: y.len(),
            });
        }
        for &v in y {
            floor_guard(p, v)?;
        }
        let dy: Vec<f64> = (0..=n).map(|t| y[(t + 1).min(n)] - y[t]).collect();
        let ny: Vec<f64> = (0..=n).map(|t| y[t] - y[t.saturating_sub(1)]).collect();
        let sd = dy.iter().map(|&v| sqrt_guard(p, v)).collect::<Result<Vec<_>, _>>()?;
        let sn = ny.iter().map(|&v| sqrt_guard(p, v)).collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            p,
            y: y.to_vec(),
            dy,
            ny,
            sd,
            sn,
        })
    }

    fn s(&self, t: usize) -> usize {
        (t + 1).min(self.p.horizon)
    }

    fn r(&self, t: usize) -> usize {
        t.saturating_sub(1)
    }

    fn dd(&self, t: usize) -> f64 {
        self.p.disc_delta(t as f64)
    }

    fn dn(&self, t: usize) -> f64 {
        self.p.disc_nabla(t as f64)
    }

    /// `c1 - p0 + B·y_floor / (y_k - y_floor)²`
    fn marginal_cost(&self, k: usize) -> f64 {
        let p = self.p;
        let d = self.y[k] - p.y_floor;
        p.c1 - p.p0 + p.big_b * p.y_floor / (d * d)
    }

    fn functionals(&self) -> Functionals {
        let p = self.p;
        let n = p.horizon;
        let cost = |y: f64, v: f64| p.c0 + p.c1 * y + p.c2 * v * v - y * p.p0 - p.big_b * y / (y - p.y_floor);
        let mut f = Functionals {
            k_delta: 0.0,
            k_nabla: 0.0,
            a_delta: 0.0,
            a_nabla: 0.0,
        };
        for t in 0..n {
            let ys = self.y[self.s(t)];
            f.k_delta += self.dd(t) * cost(ys, self.dy[t]);
            f.a_delta += self.dd(t) * (p.lambda * ys + p.beta * self.sd[t]);
        }
        for t in 1..=n {
            let yr = self.y[self.r(t)];
            f.k_nabla += self.dn(t) * cost(yr, self.ny[t]);
            f.a_nabla += self.dn(t) * (p.lambda * yr + p.beta * self.sn[t]);
        }
        f
    }

    fn gamma(&self, which: Gamma, t: usize) -> f64 {
        let p = self.p;
        let (st, rt) = (self.s(t), self.r(t));
        match which {
            Gamma::OneDelta => {
                self.dd(t)
                    * (self.marginal_cost(st)
                        - 2.0 * p.c2 * (p.rho * self.dy[t] + (1.0 + p.rho) * (self.dy[st] - self.dy[t])))
            }
            Gamma::OneNabla => {
                self.dn(t)
                    * (self.marginal_cost(rt)
                        - 2.0 * p.c2 * (p.rho * self.ny[t] + (1.0 - p.rho) * (self.ny[t] - self.ny[rt])))
            }
            Gamma::TwoDelta => {
                let (sd, sds) = (self.sd[t], self.sd[st]);
                self.dd(t) * (p.lambda - p.beta * (p.rho * sd - (sds - sd)) / (2.0 * sd * sds))
            }
            Gamma::TwoNabla => {
                let (sn, snr) = (self.sn[t], self.sn[rt]);
                self.dn(t) * (p.lambda - p.beta * (p.rho * sn - (sn - snr)) / (2.0 * sn * snr))
            }
        }
    }

    /// Delta-form equation of `Δ∇`.
    fn el_delta(&self, f: &Functionals, t: usize) -> f64 {
        let p = self.p;
        let (st, sst) = (self.s(t), self.s(self.s(t)));
        let part1 = p.lambda * self.dn(st);
        let part2 = p.beta * self.dn(st) * (p.rho * self.sn[t] - (1.0 - p.rho) * (self.sn[st] - self.sn[t]))
            / (2.0 * self.sn[t] * self.sd[t]);
        let g = |s: usize| f.k_delta * self.gamma(Gamma::TwoNabla, s);
        f.a_nabla * self.gamma(Gamma::OneDelta, t) + f.k_delta * (part1 - part2) + (g(sst) - g(st))
    }

    /// Nabla-form equation of `Δ∇`.
    fn el_nabla(&self, f: &Functionals, t: usize) -> f64 {
        let p = self.p;
        let (st, rt, rrt) = (self.s(t), self.r(t), self.r(self.r(t)));
        let part3 = self.dd(rt) * self.marginal_cost(t);
        let part4 = 2.0 * p.c2 * self.dd(rt) * (p.rho * self.dy[t] + self.y[st] - 2.0 * self.y[t] + self.y[rt]);
        let g = |s: usize| f.a_nabla * self.gamma(Gamma::OneDelta, s);
        f.a_nabla * (part3 - part4) + f.k_delta * self.gamma(Gamma::TwoNabla, t) - (g(rt) - g(rrt))
    }

    /// Delta-form equation of `∇Δ`.
    fn el_delta2(&self, f: &Functionals, t: usize) -> f64 {
        let p = self.p;
        let (st, sst) = (self.s(t), self.s(self.s(t)));
        let part5 = self.dn(st) * self.marginal_cost(t);
        let part6 = 2.0 * p.c2 * self.dn(st) * (p.rho * self.ny[t] + (self.ny[st] - self.ny[t]));
        let g = |s: usize| f.a_delta * self.gamma(Gamma::OneNabla, s);
        f.k_nabla * self.gamma(Gamma::TwoDelta, t) + f.a_delta * (part5 - part6) + (g(sst) - g(st))
    }

    /// Nabla-form equation of `∇Δ`.
    fn el_nabla2(&self, f: &Functionals, t: usize) -> f64 {
        let p = self.p;
        let (rt, rrt) = (self.r(t), self.r(self.r(t)));
        let part7 = p.lambda * self.dd(rt);
        let part8 = self.dd(rt) * p.beta * (p.rho * self.sd[t] - (1.0 + p.rho) * (self.sd[t] - self.sd[rt]))
            / (2.0 * self.sd[t] * self.sn[t]);
        let g = |s: usize| f.k_nabla * self.gamma(Gamma::TwoDelta, s);
        f.k_nabla * (part7 - part8) + f.a_delta * self.gamma(Gamma::OneNabla, t) - (g(rt) - g(rrt))
    }

    fn residual(&self, kind: ProblemKind, eq: EquationKind) -> Vec<f64> {
        let f = self.functionals();
        let n = self.p.horizon;
        let eq = eq.effective(kind);
        let points = residual_points(n, kind);
        points
            .map(|t| match (kind, eq) {
                (ProblemKind::DeltaDelta, _) => {
                    f.a_delta * self.gamma(Gamma::OneDelta, t) + f.k_delta * self.gamma(Gamma::TwoDelta, t)
                }
                (ProblemKind::NablaNabla, _) => {
                    f.a_nabla * self.gamma(Gamma::OneNabla, t) + f.k_nabla * self.gamma(Gamma::TwoNabla, t)
                }
                (ProblemKind::DeltaNabla, EquationKind::DirectDiscretized) => {
                    f.a_nabla * self.gamma(Gamma::OneDelta, t) + f.k_delta * self.gamma(Gamma::TwoNabla, t)
                }
                (ProblemKind::NablaDelta, EquationKind::DirectDiscretized) => {
                    f.a_delta * self.gamma(Gamma::OneNabla, t) + f.k_nabla * self.gamma(Gamma::TwoDelta, t)
                }
                (ProblemKind::DeltaNabla, EquationKind::TimeScaleEL1) => self.el_delta(&f, t),
                (ProblemKind::DeltaNabla, EquationKind::TimeScaleEL2) => self.el_nabla(&f, t),
                (ProblemKind::NablaDelta, EquationKind::TimeScaleEL1) => self.el_delta2(&f, t),
                (ProblemKind::NablaDelta, EquationKind::TimeScaleEL2) => self.el_nabla2(&f, t),
            })
            .collect()
    }
}

/// Time points at which the equations of `kind` are imposed:
/// `{0..T-2}` for `ΔΔ`, `{2..T}` for `∇∇`, `{1..T-1}` for mixed problems.
pub fn residual_points(horizon: usize, kind: ProblemKind) -> std::ops::Range<usize> {
    match kind {
        ProblemKind::DeltaDelta => 0..horizon - 1,
        ProblemKind::NablaNabla => 2..horizon + 1,
        ProblemKind::DeltaNabla | ProblemKind::NablaDelta => 1..horizon,
    }
}

/// `K_Δ`, `K_∇`, `a_Δ`, `a_∇` at the full state `y_0..y_T`.
pub fn functionals(params: &FirmParams, y: &[f64]) -> Result<Functionals, EconError> {
    Ok(State::new(params, y)?.functionals())
}

/// `K_D · a_D` at the full state `y_0..y_T`.
pub fn functional_value(params: &FirmParams, kind: ProblemKind, y: &[f64]) -> Result<f64, EconError> {
    Ok(functionals(params, y)?.value(kind))
}

/// One Euler–Lagrange kernel at integer time `t`.
pub fn gamma_term(params: &FirmParams, which: Gamma, y: &GridFunction<'_>, t: f64) -> Result<f64, EconError> {
    let state = State::new(params, y.values())?;
    if !(t >= 0.0 && t <= params.horizon as f64 && t.fract() == 0.0) {
        return Err(EconError::OutsideHorizon {
            t,
            horizon: params.horizon,
        });
    }
    Ok(state.gamma(which, t as usize))
}

/// Residuals of the `(kind, eq)` system at the full state `y_0..y_T`.
pub fn residuals(params: &FirmParams, kind: ProblemKind, eq: EquationKind, y: &[f64]) -> Result<Vec<f64>, EconError> {
    Ok(State::new(params, y)?.residual(kind, eq))
}

/// The `(kind, eq)` system in the interior unknowns `y_1..y_{T-1}`, with
/// `K_D · a_D` attached as its functional.
pub fn residual_system(params: &FirmParams, kind: ProblemKind, eq: EquationKind) -> Result<ResidualSystem, EconError> {
    params.validate()?;
    let p = *params;
    let label = format!("{} {}", kind.symbol(), eq.effective(kind));
    Ok(ResidualSystem::new(
        p.interior_len(),
        label,
        move |x: &[f64]| -> Result<Vec<f64>, EvalError> { Ok(residuals(&p, kind, eq, &p.full_state(x))?) },
    )
    .with_functional(move |x: &[f64]| -> Result<f64, EvalError> { Ok(functional_value(&p, kind, &p.full_state(x))?) }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn technology_delta_value() {
        let p = FirmParams::reference();
        let f = firm_integrand(&p, FirmIntegrand::TechnologyDelta);
        assert_relative_eq!(f.value(0.0, 2.0, 0.0).unwrap(), 1.5 / 1.157625, max_relative = 1e-14);
        let c = firm_integrand(&p, FirmIntegrand::CostDelta);
        assert_eq!(c.partial_v(1.0, 2.5, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn guards_name_the_violation() {
        let p = FirmParams::reference();
        let f = firm_integrand(&p, FirmIntegrand::TechnologyNabla);
        assert_eq!(f.value(1.0, 2.0, -5.0).unwrap_err().guard, "v + b > 0");
        let c = firm_integrand(&p, FirmIntegrand::CostNabla);
        assert_eq!(c.partial_y(1.0, 1.0, 0.0).unwrap_err().guard, "y - y_floor != 0");
        assert!(residuals(
            &p,
            ProblemKind::DeltaDelta,
            EquationKind::DirectDiscretized,
            &[2.0, 1.0, 2.5, 3.0]
        )
        .is_err());
        // Δy = -5 < -b
        assert!(residuals(
            &p,
            ProblemKind::DeltaDelta,
            EquationKind::DirectDiscretized,
            &[2.0, 7.5, 2.5, 3.0]
        )
        .is_err());
    }

    #[test]
    fn param_validation() {
        assert!(FirmParams::reference().validate().is_ok());
        let err = FirmParams::reference().with_rho(-1.0).validate().unwrap_err();
        assert!(matches!(err, EconError::InvalidParam { key: "rho", .. }));
        let err = FirmParams {
            y_initial: 1.0,
            ..FirmParams::reference()
        }
        .validate()
        .unwrap_err();
        assert!(matches!(err, EconError::InvalidParam { key: "y_initial", .. }));
        let err = FirmParams {
            horizon: 1,
            ..FirmParams::reference()
        }
        .validate()
        .unwrap_err();
        assert!(matches!(err, EconError::InvalidParam { key: "T", .. }));
    }

    #[test]
    fn tabulated_functionals() {
        let p = FirmParams::reference();
        let cases = [
            (ProblemKind::DeltaDelta, [2.322251304, 2.679109437], -16.97843026),
            (ProblemKind::NablaNabla, [1.495415602, 2.228040364], -13.20842214),
            (ProblemKind::DeltaNabla, [2.910488556, 2.970017180], -10.11399047),
            (ProblemKind::NablaDelta, [2.183517532, 2.446990272], -19.09167089),
        ];
        for (kind, root, expected) in cases {
            let v = functional_value(&p, kind, &p.full_state(&root)).unwrap();
            assert!((v - expected).abs() < 1e-6, "{kind}: {v}");
        }
    }

    #[test]
    fn gamma_reductions() {
        let p = FirmParams::reference();
        let s = p.scale();
        let y = GridFunction::from_fn(&s, |t| 2.0 + t / 3.0);
        let dy = 1.0 / 3.0;
        // interior t keeps a constant second difference of zero
        let t = 1.0;
        let expected = p.disc_delta(t)
            * (p.c1 - p.p0 + p.big_b * p.y_floor / (y.at(2.0).unwrap() - p.y_floor).powi(2) - 2.0 * p.c2 * p.rho * dy);
        assert_relative_eq!(
            gamma_term(&p, Gamma::OneDelta, &y, t).unwrap(),
            expected,
            max_relative = 1e-13
        );
        let t = 2.0;
        let expected = p.lambda * p.disc_nabla(t) - p.disc_nabla(t) * p.beta * p.rho / (2.0 * (dy + p.b).sqrt());
        assert_relative_eq!(
            gamma_term(&p, Gamma::TwoNabla, &y, t).unwrap(),
            expected,
            max_relative = 1e-13
        );
        assert!(gamma_term(&p, Gamma::TwoNabla, &y, 4.0).is_err());
    }

    #[test]
    fn pure_kinds_ignore_equation_variant() {
        let p = FirmParams::reference();
        let y = p.full_state(&[2.2, 2.9]);
        for kind in [ProblemKind::DeltaDelta, ProblemKind::NablaNabla] {
            let direct = residuals(&p, kind, EquationKind::DirectDiscretized, &y).unwrap();
            for eq in [EquationKind::TimeScaleEL1, EquationKind::TimeScaleEL2] {
                assert_eq!(residuals(&p, kind, eq, &y).unwrap(), direct);
            }
        }
    }

    #[test]
    fn kind_parsing() {
        assert_eq!(ProblemKind::parse("dn"), Some(ProblemKind::DeltaNabla));
        assert_eq!(ProblemKind::parse("∇Δ"), Some(ProblemKind::NablaDelta));
        assert_eq!(ProblemKind::parse("xx"), None);
        assert_eq!(EquationKind::parse("el2"), Some(EquationKind::TimeScaleEL2));
    }

    #[test]
    fn firm_problem_matches_direct_functional() {
        let p = FirmParams::reference();
        let y = p.full_state(&[2.4, 2.8]);
        for kind in ProblemKind::ALL {
            let prob = firm_problem(&p, kind).unwrap();
            let grid = GridFunction::new(prob.scale(), y.clone()).unwrap();
            let generic = prob.eval_functional(&grid).unwrap();
            let direct = functional_value(&p, kind, &y).unwrap();
            assert_relative_eq!(generic, direct, max_relative = 1e-13);
        }
    }
}
