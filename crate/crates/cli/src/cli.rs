//! Command-line front end: `tsvar run`, `tsvar table1`, `tsvar table2`.

use std::fs;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use crate::config::{
    parse_config, parse_equations, parse_points, parse_problems, Admissible, ExperimentConfig, GridSpec, OutputFormat,
};
use crate::emit::emit_table;
use crate::run::run_table;

#[derive(Debug, Parser)]
#[command(
    name = "tsvar",
    version,
    about = "Delta-nabla variational firm model: reproduce the comparison tables"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment from a config file and/or flags.
    Run(RunArgs),
    /// Reference parameters (rho = 0.05).
    Table1(OutputArgs),
    /// Reference parameters with rho = 0.02.
    Table2(OutputArgs),
}

#[derive(Debug, Args, Default)]
pub struct OutputArgs {
    /// csv, json or markdown.
    #[arg(long)]
    pub format: Option<OutputFormat>,
    /// Write the table here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub rho: Option<f64>,
    /// Comma-separated problem codes (DD, NN, DN, ND); repeatable.
    #[arg(long)]
    pub problem: Vec<String>,
    /// Comma-separated equations (direct, EL1, EL2); repeatable.
    #[arg(long)]
    pub equation: Vec<String>,
    /// Residual tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Starting point "a,b"; repeatable.
    #[arg(long)]
    pub guess: Vec<String>,
    /// Add the default multistart grid (0.5..8 step 0.5).
    #[arg(long)]
    pub multistart: bool,
    /// Keep only increasing roots.
    #[arg(long)]
    pub increasing: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Resolves the configuration for `tsvar run`: file first, then flags.
pub fn resolve_run_config(args: &RunArgs) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_config(&text).with_context(|| format!("in {}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(rho) = args.rho {
        cfg.params.rho = rho;
    }
    if !args.problem.is_empty() {
        cfg.problems = parse_problems(&args.problem.join(",")).map_err(anyhow::Error::msg)?;
    }
    if !args.equation.is_empty() {
        cfg.equations = parse_equations(&args.equation.join(",")).map_err(anyhow::Error::msg)?;
    }
    if let Some(tol) = args.tol {
        cfg.solver.tol_residual = tol;
    }
    if let Some(n) = args.max_iter {
        cfg.solver.max_iterations = n;
    }
    for g in &args.guess {
        cfg.guesses
            .explicit
            .extend(parse_points(g).map_err(anyhow::Error::msg)?);
    }
    if args.multistart {
        cfg.guesses.multistart = Some(GridSpec::default());
    }
    if args.increasing {
        cfg.guesses.admissible = Admissible::Increasing;
    }
    apply_output(&mut cfg, &args.output);
    cfg.validate()?;
    Ok(cfg)
}

fn apply_output(cfg: &mut ExperimentConfig, out: &OutputArgs) {
    if let Some(f) = out.format {
        cfg.output_format = f;
    }
    if let Some(p) = &out.output {
        cfg.output_path = Some(p.clone());
    }
}

/// Runs the command; `Ok(false)` when some row did not converge.
pub fn execute(cli: &Cli) -> anyhow::Result<bool> {
    let cfg = match &cli.command {
        Command::Run(args) => resolve_run_config(args)?,
        Command::Table1(out) => {
            let mut cfg = ExperimentConfig::table1();
            apply_output(&mut cfg, out);
            cfg
        }
        Command::Table2(out) => {
            let mut cfg = ExperimentConfig::table2();
            apply_output(&mut cfg, out);
            cfg
        }
    };
    let rows = run_table(&cfg)?;
    let text = emit_table(&rows, cfg.output_format);
    match &cfg.output_path {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(rows.iter().all(|r| r.converged))
}
