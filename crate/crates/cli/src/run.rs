use tsvar_core::econ::residual_system;
use tsvar_core::solver::{grid_guesses, multistart_solve, SolveReport};
use tsvar_core::{EquationKind, FirmParams, ProblemKind};

use crate::config::{Admissible, ExperimentConfig};

/// One cell of a results table.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub kind: ProblemKind,
    pub equation: EquationKind,
    /// Interior values `y_1..y_{T-1}`.
    pub root: Vec<f64>,
    pub functional_value: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Requested `(kind, equation)` pairs in table order; pure problems get a
/// single row under the direct equation.
pub fn row_pairs(cfg: &ExperimentConfig) -> Vec<(ProblemKind, EquationKind)> {
    let mut pairs = Vec::new();
    for kind in ProblemKind::ALL.into_iter().filter(|k| cfg.problems.contains(k)) {
        for eq in EquationKind::ALL.into_iter().filter(|e| cfg.equations.contains(e)) {
            let pair = (kind, eq.effective(kind));
            if !pairs.contains(&pair) {
                pairs.push(pair);
            }
        }
    }
    pairs
}

/// Starting points for one row: row-specific, then shared, then the grid;
/// the straight line between the boundary values when none are given.
pub fn row_guesses(cfg: &ExperimentConfig, kind: ProblemKind, eq: EquationKind) -> Vec<Vec<f64>> {
    let m = cfg.params.interior_len();
    let mut guesses: Vec<Vec<f64>> = cfg.guesses.per_row.get(&(kind, eq)).cloned().unwrap_or_default();
    guesses.extend(cfg.guesses.explicit.iter().cloned());
    if let Some(grid) = cfg.guesses.multistart {
        guesses.extend(grid_guesses(m, grid.lo, grid.hi, grid.step));
    }
    if guesses.is_empty() {
        guesses.push(cfg.params.linear_interior());
    }
    guesses
}

fn is_admissible(params: &FirmParams, rule: Admissible, root: &[f64]) -> bool {
    match rule {
        Admissible::Any => true,
        Admissible::Increasing => params.full_state(root).windows(2).all(|w| w[0] < w[1]),
    }
}

fn failed_row(kind: ProblemKind, equation: EquationKind, guess: &[f64]) -> ResultRow {
    ResultRow {
        kind,
        equation,
        root: guess.to_vec(),
        functional_value: None,
        converged: false,
        iterations: 0,
    }
}

fn solve_row(cfg: &ExperimentConfig, kind: ProblemKind, equation: EquationKind) -> anyhow::Result<ResultRow> {
    let guesses = row_guesses(cfg, kind, equation);
    let sys = residual_system(&cfg.params, kind, equation)?;
    let outcome = multistart_solve(&sys, &guesses, &cfg.solver)?;
    let best: Option<&SolveReport> = outcome
        .roots
        .iter()
        .find(|r| is_admissible(&cfg.params, cfg.guesses.admissible, &r.root));
    Ok(match best {
        Some(rep) => ResultRow {
            kind,
            equation,
            root: rep.root.clone(),
            functional_value: rep.functional_value,
            converged: true,
            iterations: rep.iterations,
        },
        None => failed_row(kind, equation, &guesses[0]),
    })
}

/// Solves every requested row, keeping the lowest-functional admissible
/// root of each.
pub fn run_table(cfg: &ExperimentConfig) -> anyhow::Result<Vec<ResultRow>> {
    cfg.validate()?;
    row_pairs(cfg)
        .into_iter()
        .map(|(kind, eq)| solve_row(cfg, kind, eq))
        .collect()
}
