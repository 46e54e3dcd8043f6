//! Flat INI-style experiment configuration.
//!
//! ```text
//! # comments start with '#'
//! [params]
//! rho = 0.02
//! [solver]
//! tol_residual = 1e-12
//! [run]
//! preset = table2
//! problems = DN, ND
//! equations = direct, EL1
//! guess = 2.3,2.7; 1.5,2.2
//! guess.ND.EL1 = 8,5
//! multistart = true
//! format = csv
//! ```
//!
//! A `preset` is applied before every other key, wherever it appears.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;
use tsvar_core::{EquationKind, FirmParams, ProblemKind, SolverConfig};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key `{key}` in [{section}]")]
    UnknownKey { line: usize, section: String, key: String },
    #[error("line {line}: invalid value for `{key}`: {message}")]
    BadValue { line: usize, key: String, message: String },
    #[error("invalid `{key}`: {message}")]
    Invalid { key: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    Csv,
    Json,
    #[default]
    Markdown,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            "markdown" | "md" => Ok(OutputFormat::Markdown),
            other => Err(format!("expected csv, json or markdown, got `{other}`")),
        }
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
            OutputFormat::Markdown => "markdown",
        })
    }
}

/// Which converged roots a row may report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Admissible {
    #[default]
    Any,
    /// `y_initial < y_1 < .. < y_{T-1} < y_terminal`.
    Increasing,
}

impl FromStr for Admissible {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "any" => Ok(Admissible::Any),
            "increasing" => Ok(Admissible::Increasing),
            other => Err(format!("expected any or increasing, got `{other}`")),
        }
    }
}

/// Multistart grid `{lo, lo+step, .., hi}^m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            lo: 0.5,
            hi: 8.0,
            step: 0.5,
        }
    }
}

impl FromStr for GridSpec {
    type Err = String;

    /// `true`, or `lo:hi:step`.
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("true") {
            return Ok(Self::default());
        }
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, step] = parts.as_slice() else {
            return Err(format!("expected true, false or lo:hi:step, got `{s}`"));
        };
        let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
        let spec = Self {
            lo: num(lo)?,
            hi: num(hi)?,
            step: num(step)?,
        };
        if !(spec.step > 0.0 && spec.hi >= spec.lo) {
            return Err("grid needs step > 0 and hi >= lo".into());
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GuessSpec {
    /// Tried for every row.
    pub explicit: Vec<Vec<f64>>,
    /// Tried only for the given row, ahead of the shared guesses.
    pub per_row: BTreeMap<(ProblemKind, EquationKind), Vec<Vec<f64>>>,
    pub multistart: Option<GridSpec>,
    pub admissible: Admissible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub params: FirmParams,
    pub problems: Vec<ProblemKind>,
    pub equations: Vec<EquationKind>,
    pub guesses: GuessSpec,
    pub solver: SolverConfig,
    pub output_format: OutputFormat,
    pub output_path: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            params: FirmParams::reference(),
            problems: ProblemKind::ALL.to_vec(),
            equations: EquationKind::ALL.to_vec(),
            guesses: GuessSpec::default(),
            solver: SolverConfig::default(),
            output_format: OutputFormat::default(),
            output_path: None,
        }
    }
}

type PresetGuess = (ProblemKind, EquationKind, [f64; 2]);

/// Named bundles of parameters and starting guesses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Table1,
    Table2,
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "table1" => Ok(Preset::Table1),
            "table2" => Ok(Preset::Table2),
            other => Err(format!("expected table1 or table2, got `{other}`")),
        }
    }
}

impl ExperimentConfig {
    /// `ρ = 0.05`, with starting points that select the tabulated roots.
    pub fn table1() -> Self {
        Self::default().with_preset(Preset::Table1)
    }

    /// `ρ = 0.02`, with starting points that select the tabulated roots.
    pub fn table2() -> Self {
        Self::default().with_preset(Preset::Table2)
    }

    pub fn with_preset(mut self, preset: Preset) -> Self {
        use EquationKind::*;
        use ProblemKind::*;
        let (params, rows): (FirmParams, &[PresetGuess]) = match preset {
            Preset::Table1 => (
                FirmParams::reference(),
                &[
                    (DeltaDelta, DirectDiscretized, [2.3, 2.7]),
                    (NablaNabla, DirectDiscretized, [1.5, 2.2]),
                    (DeltaNabla, TimeScaleEL2, [0.6, 1.1]),
                    (NablaDelta, TimeScaleEL1, [8.0, 5.0]),
                ],
            ),
            Preset::Table2 => (
                FirmParams::table2(),
                &[
                    (DeltaDelta, DirectDiscretized, [2.3, 2.7]),
                    (NablaNabla, DirectDiscretized, [1.5, 2.2]),
                    (DeltaNabla, TimeScaleEL2, [0.6, 1.1]),
                    (NablaDelta, TimeScaleEL1, [2.0, 1.4]),
                    (NablaDelta, TimeScaleEL2, [0.6, 1.1]),
                ],
            ),
        };
        self.params = params;
        self.guesses.per_row = rows.iter().map(|(k, e, g)| ((*k, *e), vec![g.to_vec()])).collect();
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key: &str, message: String| ConfigError::Invalid {
            key: key.to_string(),
            message,
        };
        self.params.validate().map_err(|e| match e {
            tsvar_core::econ::EconError::InvalidParam { key, reason } => invalid(key, reason),
            other => invalid("params", other.to_string()),
        })?;
        self.solver.validate().map_err(|e| invalid("solver", e.to_string()))?;
        if self.problems.is_empty() {
            return Err(invalid("problems", "at least one problem is required".into()));
        }
        if self.equations.is_empty() {
            return Err(invalid("equations", "at least one equation is required".into()));
        }
        let m = self.params.interior_len();
        let all = self
            .guesses
            .explicit
            .iter()
            .chain(self.guesses.per_row.values().flatten());
        for g in all {
            if g.len() != m {
                return Err(invalid(
                    "guess",
                    format!("guess has {} coordinates but T - 1 = {m} are needed", g.len()),
                ));
            }
        }
        Ok(())
    }
}

struct Entry {
    line: usize,
    section: String,
    key: String,
    value: String,
}

fn bad(entry: &Entry, message: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        line: entry.line,
        key: entry.key.clone(),
        message: message.into(),
    }
}

fn parse_num<T: FromStr>(entry: &Entry) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    entry.value.parse::<T>().map_err(|e| bad(entry, e.to_string()))
}

fn parse_with<T: FromStr<Err = String>>(entry: &Entry) -> Result<T, ConfigError> {
    entry.value.parse::<T>().map_err(|e| bad(entry, e))
}

/// `a,b; c,d` into points.
pub fn parse_points(s: &str) -> Result<Vec<Vec<f64>>, String> {
    s.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            p.split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|e| format!("`{}`: {e}", x.trim())))
                .collect()
        })
        .collect()
}

pub fn parse_problems(s: &str) -> Result<Vec<ProblemKind>, String> {
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
        let k = ProblemKind::parse(item).ok_or_else(|| format!("unknown problem `{item}`"))?;
        if !out.contains(&k) {
            out.push(k);
        }
    }
    Ok(out)
}

pub fn parse_equations(s: &str) -> Result<Vec<EquationKind>, String> {
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
        let e = EquationKind::parse(item).ok_or_else(|| format!("unknown equation `{item}`"))?;
        if !out.contains(&e) {
            out.push(e);
        }
    }
    Ok(out)
}

fn tokenize(source: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut section: Option<String> = None;
    let mut entries = Vec::new();
    for (idx, raw) in source.lines().enumerate() {
        let line = idx + 1;
        let text = raw.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        if let Some(rest) = text.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::Syntax {
                    line,
                    message: "unterminated section header".into(),
                })?
                .trim();
            if !matches!(name, "params" | "solver" | "run") {
                return Err(ConfigError::Syntax {
                    line,
                    message: format!("unknown section [{name}]"),
                });
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = text.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            message: "expected `key = value`".into(),
        })?;
        let section = section.clone().ok_or_else(|| ConfigError::Syntax {
            line,
            message: "key outside of any section".into(),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                line,
                message: "empty key".into(),
            });
        }
        entries.push(Entry {
            line,
            section,
            key: key.to_string(),
            value: value.trim().to_string(),
        });
    }
    Ok(entries)
}

fn apply_param(p: &mut FirmParams, e: &Entry) -> Result<bool, ConfigError> {
    let slot = match e.key.as_str() {
        "rho" => &mut p.rho,
        "c0" => &mut p.c0,
        "c1" => &mut p.c1,
        "c2" => &mut p.c2,
        "lambda" => &mut p.lambda,
        "beta" => &mut p.beta,
        "b" => &mut p.b,
        "B" => &mut p.big_b,
        "p0" => &mut p.p0,
        "y_floor" => &mut p.y_floor,
        "y_initial" => &mut p.y_initial,
        "y_terminal" => &mut p.y_terminal,
        "T" => {
            p.horizon = parse_num(e)?;
            return Ok(true);
        }
        _ => return Ok(false),
    };
    *slot = parse_num(e)?;
    Ok(true)
}

fn apply_solver(s: &mut SolverConfig, e: &Entry) -> Result<bool, ConfigError> {
    match e.key.as_str() {
        "tol_residual" | "tol" => s.tol_residual = parse_num(e)?,
        "tol_step" => s.tol_step = parse_num(e)?,
        "max_iterations" | "max_iter" => s.max_iterations = parse_num(e)?,
        "fd_step" => s.fd_step = parse_num(e)?,
        "max_halvings" => s.max_halvings = parse_num(e)?,
        _ => return Ok(false),
    }
    Ok(true)
}

fn apply_run(cfg: &mut ExperimentConfig, e: &Entry) -> Result<bool, ConfigError> {
    match e.key.as_str() {
        "preset" => {}
        "problems" => cfg.problems = parse_problems(&e.value).map_err(|m| bad(e, m))?,
        "equations" => cfg.equations = parse_equations(&e.value).map_err(|m| bad(e, m))?,
        "format" => cfg.output_format = parse_with(e)?,
        "output" => cfg.output_path = Some(PathBuf::from(&e.value)),
        "guess" => cfg
            .guesses
            .explicit
            .extend(parse_points(&e.value).map_err(|m| bad(e, m))?),
        "multistart" => {
            cfg.guesses.multistart = if e.value.eq_ignore_ascii_case("false") {
                None
            } else {
                Some(parse_with(e)?)
            }
        }
        "admissible" => cfg.guesses.admissible = parse_with(e)?,
        key => {
            let Some(rest) = key.strip_prefix("guess.") else {
                return Ok(false);
            };
            let (kind, eq) = rest
                .split_once('.')
                .ok_or_else(|| bad(e, "expected guess.<problem>.<equation>"))?;
            let kind = ProblemKind::parse(kind).ok_or_else(|| bad(e, format!("unknown problem `{kind}`")))?;
            let eq = EquationKind::parse(eq).ok_or_else(|| bad(e, format!("unknown equation `{eq}`")))?;
            let points = parse_points(&e.value).map_err(|m| bad(e, m))?;
            cfg.guesses.per_row.insert((kind, eq.effective(kind)), points);
        }
    }
    Ok(true)
}

/// Parses configuration text; missing keys keep the reference defaults.
pub fn parse_config(source: &str) -> Result<ExperimentConfig, ConfigError> {
    let entries = tokenize(source)?;
    let mut cfg = ExperimentConfig::default();
    for e in entries.iter().filter(|e| e.section == "run" && e.key == "preset") {
        cfg = cfg.with_preset(parse_with(e)?);
    }
    for e in &entries {
        let known = match e.section.as_str() {
            "params" => apply_param(&mut cfg.params, e)?,
            "solver" => apply_solver(&mut cfg.solver, e)?,
            _ => apply_run(&mut cfg, e)?,
        };
        if !known {
            return Err(ConfigError::UnknownKey {
                line: e.line,
                section: e.section.clone(),
                key: e.key.clone(),
            });
        }
    }
    cfg.validate()?;
    Ok(cfg)
}
