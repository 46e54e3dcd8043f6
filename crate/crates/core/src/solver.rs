//! Damped Newton iteration with a central-difference Jacobian, and a
//! parallel multistart driver.

use std::cmp::Ordering;
use std::error::Error;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

/// Error type returned by residual and functional callbacks.
pub type EvalError = Box<dyn Error + Send + Sync>;

type ResidualFn = Box<dyn Fn(&[f64]) -> Result<Vec<f64>, EvalError> + Send + Sync>;
type FunctionalFn = Box<dyn Fn(&[f64]) -> Result<f64, EvalError> + Send + Sync>;

/// Distance below which two roots count as the same root.
pub const DEDUP_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("expected a vector of length {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("residual evaluation failed: {0}")]
    Evaluation(EvalError),
    #[error("residual evaluation failed while perturbing coordinate {coordinate}: {source}")]
    Jacobian { coordinate: usize, source: EvalError },
    #[error("multistart needs at least one starting guess")]
    NoGuesses,
}

/// A square system `R : ℝ^m → ℝ^m`, optionally with the functional whose
/// stationary points it describes.
pub struct ResidualSystem {
    dimension: usize,
    label: String,
    residual: ResidualFn,
    functional: Option<FunctionalFn>,
}

impl fmt::Debug for ResidualSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ResidualSystem")
            .field("dimension", &self.dimension)
            .field("label", &self.label)
            .field("has_functional", &self.functional.is_some())
            .finish_non_exhaustive()
    }
}

impl ResidualSystem {
    pub fn new<F>(dimension: usize, label: impl Into<String>, residual: F) -> Self
    where
        F: Fn(&[f64]) -> Result<Vec<f64>, EvalError> + Send + Sync + 'static,
    {
        Self {
            dimension,
            label: label.into(),
            residual: Box::new(residual),
            functional: None,
        }
    }

    pub fn with_functional<F>(mut self, functional: F) -> Self
    where
        F: Fn(&[f64]) -> Result<f64, EvalError> + Send + Sync + 'static,
    {
        self.functional = Some(Box::new(functional));
        self
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn has_functional(&self) -> bool {
        self.functional.is_some()
    }

    pub fn residual(&self, x: &[f64]) -> Result<Vec<f64>, SolverError> {
        self.check_len(x.len())?;
        let r = (self.residual)(x).map_err(SolverError::Evaluation)?;
        self.check_len(r.len())?;
        Ok(r)
    }

    pub fn functional(&self, x: &[f64]) -> Option<Result<f64, SolverError>> {
        self.functional.as_ref().map(|f| f(x).map_err(SolverError::Evaluation))
    }

    fn check_len(&self, found: usize) -> Result<(), SolverError> {
        if found == self.dimension {
            Ok(())
        } else {
            Err(SolverError::DimensionMismatch {
                expected: self.dimension,
                found,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Convergence threshold on `‖R(x)‖_∞`.
    pub tol_residual: f64,
    /// Stop when the accepted step is below `tol_step · max(1, ‖x‖_∞)`.
    pub tol_step: f64,
    pub max_iterations: usize,
    /// Relative finite-difference step, scaled by `max(1, |x_j|)`.
    pub fd_step: f64,
    pub max_halvings: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_residual: 1e-12,
            tol_step: 1e-14,
            max_iterations: 100,
            fd_step: 1e-7,
            max_halvings: 30,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.tol_residual) {
            return Err(SolverError::InvalidConfig("tol_residual must be positive"));
        }
        if !positive(self.tol_step) {
            return Err(SolverError::InvalidConfig("tol_step must be positive"));
        }
        if !positive(self.fd_step) {
            return Err(SolverError::InvalidConfig("fd_step must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(SolverError::InvalidConfig("max_iterations must be at least 1"));
        }
        Ok(())
    }
}

/// Why an iteration stopped.
#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Converged,
    StepTolerance,
    MaxIterations,
    SingularJacobian,
    /// No damped step decreased the residual norm.
    DampingFailed,
    /// Residual or Jacobian evaluation failed at an accepted iterate.
    EvaluationFailed(String),
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Termination::Converged => f.write_str("converged"),
            Termination::StepTolerance => f.write_str("step below tolerance"),
            Termination::MaxIterations => f.write_str("iteration limit reached"),
            Termination::SingularJacobian => f.write_str("singular Jacobian"),
            Termination::DampingFailed => f.write_str("no damped step reduced the residual"),
            Termination::EvaluationFailed(msg) => write!(f, "evaluation failed: {msg}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub root: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub functional_value: Option<f64>,
    pub termination: Termination,
    /// `‖R‖_∞` at the guess and after each accepted step.
    pub residual_history: Vec<f64>,
    /// The guess followed by every accepted iterate.
    pub iterates: Vec<Vec<f64>>,
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn inf_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Central-difference Jacobian; column `j` uses `h = step · max(1, |x_j|)`.
pub fn fd_jacobian(sys: &ResidualSystem, x: &[f64], step: f64) -> Result<DMatrix<f64>, SolverError> {
    let m = sys.dimension();
    if x.len() != m {
        return Err(SolverError::DimensionMismatch {
            expected: m,
            found: x.len(),
        });
    }
    let mut jac = DMatrix::zeros(m, m);
    let mut probe = x.to_vec();
    let eval = |p: &[f64], j: usize| {
        sys.residual(p).map_err(|e| match e {
            SolverError::Evaluation(source) => SolverError::Jacobian { coordinate: j, source },
            other => other,
        })
    };
    for j in 0..m {
        let h = step * 1f64.max(x[j].abs());
        probe[j] = x[j] + h;
        let up = eval(&probe, j)?;
        probe[j] = x[j] - h;
        let down = eval(&probe, j)?;
        probe[j] = x[j];
        for i in 0..m {
            jac[(i, j)] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Newton's method with residual-norm step halving.
///
/// A trial step is accepted when the residual is evaluable there and its
/// norm decreases (or already meets the tolerance); otherwise the step is
/// halved up to `cfg.max_halvings` times.
pub fn newton_solve(sys: &ResidualSystem, guess: &[f64], cfg: &SolverConfig) -> Result<SolveReport, SolverError> {
    cfg.validate()?;
    if guess.len() != sys.dimension() {
        return Err(SolverError::DimensionMismatch {
            expected: sys.dimension(),
            found: guess.len(),
        });
    }
    let mut x = guess.to_vec();
    let mut report = SolveReport {
        root: x.clone(),
        residual_norm: f64::INFINITY,
        iterations: 0,
        converged: false,
        functional_value: None,
        termination: Termination::MaxIterations,
        residual_history: Vec::new(),
        iterates: vec![x.clone()],
    };
    let mut r = match sys.residual(&x) {
        Ok(r) => r,
        Err(e) => {
            report.termination = Termination::EvaluationFailed(e.to_string());
            return Ok(report);
        }
    };
    let mut norm = inf_norm(&r);
    report.residual_history.push(norm);

    let termination = loop {
        if norm <= cfg.tol_residual {
            break Termination::Converged;
        }
        if report.iterations >= cfg.max_iterations {
            break Termination::MaxIterations;
        }
        let jac = match fd_jacobian(sys, &x, cfg.fd_step) {
            Ok(j) => j,
            Err(e) => break Termination::EvaluationFailed(e.to_string()),
        };
        let rhs = -DVector::from_column_slice(&r);
        let dx = match jac.lu().solve(&rhs) {
            Some(dx) if dx.iter().all(|v| v.is_finite()) => dx,
            _ => break Termination::SingularJacobian,
        };

        let mut accepted = None;
        let mut scale = 1.0;
        for _ in 0..=cfg.max_halvings {
            let trial: Vec<f64> = x.iter().zip(dx.iter()).map(|(xi, di)| xi + scale * di).collect();
            if let Ok(rt) = sys.residual(&trial) {
                let nt = inf_norm(&rt);
                if nt.is_finite() && (nt < norm || nt <= cfg.tol_residual) {
                    accepted = Some((trial, rt, nt, scale));
                    break;
                }
            }
            scale *= 0.5;
        }
        let Some((trial, rt, nt, scale)) = accepted else {
            break Termination::DampingFailed;
        };
        let step = scale * dx.amax();
        x = trial;
        r = rt;
        norm = nt;
        report.iterations += 1;
        report.residual_history.push(norm);
        report.iterates.push(x.clone());
        if norm > cfg.tol_residual && step <= cfg.tol_step * 1f64.max(inf_norm(&x)) {
            break Termination::StepTolerance;
        }
    };

    report.converged = termination == Termination::Converged;
    report.termination = termination;
    report.residual_norm = norm;
    report.root = x;
    if report.converged {
        report.functional_value = match sys.functional(&report.root) {
            Some(Ok(v)) => Some(v),
            Some(Err(e)) => {
                report.converged = false;
                report.termination = Termination::EvaluationFailed(e.to_string());
                None
            }
            None => None,
        };
    }
    Ok(report)
}

/// Distinct converged roots from a set of starts.
#[derive(Debug, Clone, PartialEq)]
pub struct MultistartOutcome {
    /// Ordered by functional value when available, otherwise by root.
    pub roots: Vec<SolveReport>,
    pub starts: usize,
    pub failed: usize,
}

impl MultistartOutcome {
    pub fn best(&self) -> Option<&SolveReport> {
        self.roots.first()
    }
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

fn by_value_then_root(a: &SolveReport, b: &SolveReport) -> Ordering {
    match (a.functional_value, b.functional_value) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
    .then_with(|| lexicographic(&a.root, &b.root))
}

/// Merges reports whose roots lie within `tol` in ∞-distance, keeping the
/// lexicographically smallest member of each cluster.
pub fn dedup_roots(mut reports: Vec<SolveReport>, tol: f64) -> Vec<SolveReport> {
    reports.sort_by(|a, b| lexicographic(&a.root, &b.root));
    let mut kept: Vec<SolveReport> = Vec::new();
    for r in reports {
        if kept.iter().all(|k| inf_distance(&k.root, &r.root) > tol) {
            kept.push(r);
        }
    }
    kept.sort_by(by_value_then_root);
    kept
}

/// Runs Newton from every guess (concurrently) and returns the distinct
/// converged roots.
pub fn multistart_solve(
    sys: &ResidualSystem,
    guesses: &[Vec<f64>],
    cfg: &SolverConfig,
) -> Result<MultistartOutcome, SolverError> {
    if guesses.is_empty() {
        return Err(SolverError::NoGuesses);
    }
    cfg.validate()?;
    let reports: Vec<Result<SolveReport, SolverError>> =
        guesses.par_iter().map(|g| newton_solve(sys, g, cfg)).collect();
    let mut converged = Vec::new();
    let mut failed = 0;
    for r in reports {
        match r {
            Ok(rep) if rep.converged => converged.push(rep),
            Ok(_) => failed += 1,
            Err(e @ SolverError::DimensionMismatch { .. }) => return Err(e),
            Err(_) => failed += 1,
        }
    }
    Ok(MultistartOutcome {
        roots: dedup_roots(converged, DEDUP_TOLERANCE),
        starts: guesses.len(),
        failed,
    })
}

/// Cartesian grid `{lo, lo+step, .., hi}^m`, first coordinate varying slowest.
pub fn grid_guesses(m: usize, lo: f64, hi: f64, step: f64) -> Vec<Vec<f64>> {
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    let axis: Vec<f64> = (0..count).map(|i| lo + i as f64 * step).collect();
    let mut out = vec![Vec::with_capacity(m)];
    for _ in 0..m {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out
}

/// The default multistart grid: every coordinate in `{0.5, 1.0, .., 8.0}`.
pub fn default_grid(m: usize) -> Vec<Vec<f64>> {
    grid_guesses(m, 0.5, 8.0, 0.5)
}

/// Interior values of the straight line from `ya` to `yb` over `m + 2` points.
pub fn linear_guess(ya: f64, yb: f64, m: usize) -> Vec<f64> {
    (1..=m).map(|i| ya + (yb - ya) * i as f64 / (m + 1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn affine() -> ResidualSystem {
        // R(x) = A x - c with A = [[2, 1], [1, 3]]
        ResidualSystem::new(2, "affine", |x: &[f64]| {
            Ok(vec![2.0 * x[0] + x[1] - 1.0, x[0] + 3.0 * x[1] + 2.0])
        })
    }

    #[test]
    fn identity_jacobian() {
        let sys = ResidualSystem::new(3, "id", |x: &[f64]| Ok(x.to_vec()));
        let j = fd_jacobian(&sys, &[0.3, -7.0, 120.0], 1e-7).unwrap();
        assert!((j - DMatrix::identity(3, 3)).amax() <= 1e-9);
    }

    #[test]
    fn squares_jacobian() {
        let sys = ResidualSystem::new(2, "sq", |x: &[f64]| Ok(vec![x[0] * x[0], x[1] * x[1]]));
        let j = fd_jacobian(&sys, &[1.0, 2.0], 1e-7).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        assert!((j - expected).amax() <= 1e-8);
    }

    #[test]
    fn jacobian_reports_coordinate() {
        let sys = ResidualSystem::new(2, "guarded", |x: &[f64]| {
            if x[1] > 1.0 {
                Err("outside".into())
            } else {
                Ok(x.to_vec())
            }
        });
        match fd_jacobian(&sys, &[0.0, 1.0], 1e-7) {
            Err(SolverError::Jacobian { coordinate, .. }) => assert_eq!(coordinate, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn affine_system_in_one_step() {
        let sys = affine();
        for guess in [[0.0, 0.0], [100.0, -40.0], [-3.0, 9.5]] {
            let rep = newton_solve(&sys, &guess, &SolverConfig::default()).unwrap();
            assert!(rep.converged, "{rep:?}");
            assert!(rep.iterations <= 2);
            assert_abs_diff_eq!(rep.root[0], 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(rep.root[1], -1.0, epsilon = 1e-12);
            assert!(inf_norm(&sys.residual(&rep.root).unwrap()) <= 1e-12);
        }
    }

    #[test]
    fn singular_jacobian_is_reported() {
        let sys = ResidualSystem::new(2, "rank1", |x: &[f64]| Ok(vec![x[0] + x[1] - 1.0, 2.0 * (x[0] + x[1])]));
        let rep = newton_solve(&sys, &[0.0, 0.0], &SolverConfig::default()).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.termination, Termination::SingularJacobian);
    }

    #[test]
    fn domain_errors_trigger_damping() {
        // root at 4, but full Newton steps from 0.5 overshoot into x < 0
        let sys = ResidualSystem::new(1, "sqrt", |x: &[f64]| {
            if x[0] < 0.0 {
                Err("negative sqrt argument".into())
            } else {
                Ok(vec![x[0].sqrt() - 2.0])
            }
        });
        let rep = newton_solve(&sys, &[0.5], &SolverConfig::default()).unwrap();
        assert!(rep.converged);
        assert_abs_diff_eq!(rep.root[0], 4.0, epsilon = 1e-10);
        for w in rep.residual_history.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn bad_guess_is_a_failed_report() {
        let sys = ResidualSystem::new(1, "never", |_: &[f64]| Err("nope".into()));
        let rep = newton_solve(&sys, &[1.0], &SolverConfig::default()).unwrap();
        assert!(!rep.converged);
        assert!(matches!(rep.termination, Termination::EvaluationFailed(_)));
    }

    #[test]
    fn config_validation() {
        let cfg = SolverConfig {
            tol_residual: 0.0,
            ..SolverConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = SolverConfig {
            max_iterations: 0,
            ..SolverConfig::default()
        };
        assert!(newton_solve(&affine(), &[0.0, 0.0], &cfg).is_err());
    }

    #[test]
    fn multistart_linear_has_one_root() {
        let out = multistart_solve(&affine(), &default_grid(2), &SolverConfig::default()).unwrap();
        assert_eq!(out.starts, 256);
        assert_eq!(out.failed, 0);
        assert_eq!(out.roots.len(), 1);
        assert!(multistart_solve(&affine(), &[], &SolverConfig::default()).is_err());
    }

    #[test]
    fn multistart_orders_by_functional() {
        // roots ±1 of x² - 1, functional x
        let sys =
            ResidualSystem::new(1, "pm", |x: &[f64]| Ok(vec![x[0] * x[0] - 1.0])).with_functional(|x: &[f64]| Ok(x[0]));
        let guesses = vec![vec![3.0], vec![-2.0], vec![0.7], vec![-0.4]];
        let out = multistart_solve(&sys, &guesses, &SolverConfig::default()).unwrap();
        assert_eq!(out.roots.len(), 2);
        assert_abs_diff_eq!(out.best().unwrap().root[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.roots[1].functional_value.unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn dedup_is_idempotent() {
        let mk = |x: f64| SolveReport {
            root: vec![x, 1.0],
            residual_norm: 0.0,
            iterations: 1,
            converged: true,
            functional_value: Some(-x),
            termination: Termination::Converged,
            residual_history: vec![],
            iterates: vec![],
        };
        let reports = vec![mk(1.0), mk(1.0 + 1e-8), mk(2.0), mk(1.0 - 5e-7), mk(3.0)];
        let once = dedup_roots(reports.clone(), DEDUP_TOLERANCE);
        assert_eq!(once.len(), 3);
        assert_eq!(dedup_roots(once.clone(), DEDUP_TOLERANCE), once);
        let mut reversed = reports;
        reversed.reverse();
        assert_eq!(dedup_roots(reversed, DEDUP_TOLERANCE), once);
    }

    #[test]
    fn guess_helpers() {
        let lin = linear_guess(2.0, 3.0, 2);
        assert_abs_diff_eq!(lin[0], 7.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(lin[1], 8.0 / 3.0, epsilon = 1e-15);
        let g = grid_guesses(2, 0.5, 3.0, 0.5);
        assert_eq!(g.len(), 36);
        assert_eq!(g[0], vec![0.5, 0.5]);
        assert_eq!(g[1], vec![0.5, 1.0]);
        assert_eq!(g[35], vec![3.0, 3.0]);
    }
}
