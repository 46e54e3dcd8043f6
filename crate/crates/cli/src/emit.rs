use serde::{Deserialize, Serialize};
use tsvar_core::{EquationKind, ProblemKind};

use crate::config::OutputFormat;
use crate::run::ResultRow;

pub const CSV_HEADER: &str = "kind,equation,y_values,functional,converged,iterations";

/// Ten significant digits: fixed notation for magnitudes in `[1e-4, 1e10)`,
/// otherwise scientific with a signed two-digit exponent.
pub fn format_sig10(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return "0.000000000".to_string();
    }
    let sci = format!("{v:.9e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific notation");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..10).contains(&exp) {
        let decimals = (9 - exp).max(0) as usize;
        format!("{v:.decimals$}")
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    }
}

fn row_order(r: &ResultRow) -> (ProblemKind, EquationKind) {
    (r.kind, r.equation)
}

fn sorted(rows: &[ResultRow]) -> Vec<&ResultRow> {
    let mut out: Vec<&ResultRow> = rows.iter().collect();
    out.sort_by_key(|r| row_order(r));
    out
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct JsonRow {
    pub kind: String,
    pub equation: String,
    pub y_values: Vec<f64>,
    pub functional: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
}

fn round10(v: f64) -> f64 {
    format_sig10(v).parse().unwrap_or(v)
}

fn csv(rows: &[&ResultRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let ys: Vec<String> = r.root.iter().map(|v| format_sig10(*v)).collect();
        let functional = r.functional_value.map(format_sig10).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.kind.code(),
            r.equation.code(),
            ys.join(";"),
            functional,
            r.converged,
            r.iterations
        ));
    }
    out
}

fn json(rows: &[&ResultRow]) -> String {
    let rows: Vec<JsonRow> = rows
        .iter()
        .map(|r| JsonRow {
            kind: r.kind.code().to_string(),
            equation: r.equation.code().to_string(),
            y_values: r.root.iter().map(|v| round10(*v)).collect(),
            functional: r.functional_value.map(round10),
            converged: r.converged,
            iterations: r.iterations,
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&rows).expect("rows serialize");
    s.push('\n');
    s
}

fn cell(r: Option<&&ResultRow>) -> String {
    match r {
        None => String::new(),
        Some(r) => match r.functional_value {
            Some(v) if r.converged => format_sig10(v),
            _ => "not converged".to_string(),
        },
    }
}

fn markdown(rows: &[&ResultRow]) -> String {
    let mut out = String::from("| D | (EL_P)_D | EL1 | EL2 |\n|---|---|---|---|\n");
    for kind in ProblemKind::ALL {
        let of_kind: Vec<&&ResultRow> = rows.iter().filter(|r| r.kind == kind).collect();
        if of_kind.is_empty() {
            continue;
        }
        let cells: Vec<String> = if kind.is_mixed() {
            EquationKind::ALL
                .iter()
                .map(|eq| cell(of_kind.iter().copied().find(|r| r.equation == *eq)))
                .collect()
        } else {
            // the three equations coincide for pure problems
            vec![cell(of_kind.first().copied()); 3]
        };
        out.push_str(&format!("| {} | {} |\n", kind.symbol(), cells.join(" | ")));
    }
    out
}

/// Renders rows in table order (ΔΔ, ∇∇, Δ∇, ∇Δ; direct, EL1, EL2).
pub fn emit_table(rows: &[ResultRow], format: OutputFormat) -> String {
    let rows = sorted(rows);
    match format {
        OutputFormat::Csv => csv(&rows),
        OutputFormat::Json => json(&rows),
        OutputFormat::Markdown => markdown(&rows),
    }
}

/// Reads rows back from [`emit_table`]'s CSV output.
pub fn parse_csv(text: &str) -> Result<Vec<ResultRow>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err("missing CSV header".into());
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let fields: Vec<&str> = line.split(',').collect();
            let [kind, eq, ys, functional, converged, iterations] = fields.as_slice() else {
                return Err(format!("expected 6 fields in `{line}`"));
            };
            let num = |s: &str| s.parse::<f64>().map_err(|e| format!("`{s}`: {e}"));
            Ok(ResultRow {
                kind: ProblemKind::parse(kind).ok_or_else(|| format!("unknown kind `{kind}`"))?,
                equation: EquationKind::parse(eq).ok_or_else(|| format!("unknown equation `{eq}`"))?,
                root: ys
                    .split(';')
                    .filter(|s| !s.is_empty())
                    .map(num)
                    .collect::<Result<_, _>>()?,
                functional_value: if functional.is_empty() {
                    None
                } else {
                    Some(num(functional)?)
                },
                converged: converged.parse().map_err(|e| format!("`{converged}`: {e}"))?,
                iterations: iterations.parse().map_err(|e| format!("`{iterations}`: {e}"))?,
            })
        })
        .collect()
}
