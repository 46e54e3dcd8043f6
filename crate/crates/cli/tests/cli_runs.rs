use std::fs;
use std::process::Command;

use tsvar_cli::emit::parse_csv;
use tsvar_cli::{parse_config, run_table, ExperimentConfig};
use tsvar_core::{EquationKind, ProblemKind};

fn tsvar(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_tsvar"))
        .args(args)
        .output()
        .expect("run tsvar");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn single_problem_gives_one_row() {
    let cfg = ExperimentConfig {
        problems: vec![ProblemKind::DeltaDelta],
        ..ExperimentConfig::table1()
    };
    let rows = run_table(&cfg).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].converged);
    assert!((rows[0].functional_value.unwrap() + 16.97843026).abs() < 1e-6);
}

#[test]
fn pure_value_does_not_depend_on_equation_choice() {
    let all = run_table(&ExperimentConfig {
        problems: vec![ProblemKind::NablaNabla],
        ..ExperimentConfig::table1()
    })
    .unwrap();
    let el2 = run_table(&ExperimentConfig {
        problems: vec![ProblemKind::NablaNabla],
        equations: vec![EquationKind::TimeScaleEL2],
        ..ExperimentConfig::table1()
    })
    .unwrap();
    assert_eq!(all, el2);
}

#[test]
fn increasing_multistart_at_low_discount() {
    let (code, stdout, stderr) = tsvar(&[
        "run",
        "--rho",
        "0.02",
        "--multistart",
        "--increasing",
        "--problem",
        "DN",
        "--equation",
        "direct,EL1",
        "--format",
        "csv",
    ]);
    assert_eq!(code, 0, "{stderr}");
    let rows = parse_csv(&stdout).unwrap();
    assert_eq!(rows.len(), 2);
    let direct = rows[0].functional_value.unwrap();
    let el1 = rows[1].functional_value.unwrap();
    assert!((direct + 10.62044023).abs() < 1e-6, "{direct}");
    assert!((el1 + 10.70908681).abs() < 1e-6, "{el1}");
}

#[test]
fn table_commands_exit_cleanly() {
    let (code, stdout, _) = tsvar(&["table1"]);
    assert_eq!(code, 0);
    assert!(stdout.starts_with("| D | (EL_P)_D | EL1 | EL2 |"));
    assert_eq!(stdout.lines().count(), 6);

    let (code, stdout, _) = tsvar(&["table2", "--format", "json"]);
    assert_eq!(code, 0);
    let rows: Vec<serde_json::Value> = serde_json::from_str(&stdout).unwrap();
    assert_eq!(rows.len(), 8);
}

#[test]
fn invalid_input_exits_with_status_two() {
    let (code, _, stderr) = tsvar(&["run", "--rho=-0.5"]);
    assert_eq!(code, 2);
    assert!(stderr.contains("rho"), "{stderr}");
    let (code, _, _) = tsvar(&["run", "--problem", "XY"]);
    assert_eq!(code, 2);
}

#[test]
fn non_convergence_exits_with_status_one() {
    let (code, stdout, _) = tsvar(&[
        "run",
        "--problem",
        "DD",
        "--guess",
        "2.3,2.7",
        "--max-iter",
        "1",
        "--format",
        "csv",
    ]);
    assert_eq!(code, 1);
    let rows = parse_csv(&stdout).unwrap();
    assert!(!rows[0].converged);
    assert_eq!(rows[0].functional_value, None);
}

#[test]
fn config_file_and_output_path() {
    let dir = std::env::temp_dir().join(format!("tsvar-cli-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    let config = dir.join("run.conf");
    let output = dir.join("out.csv");
    fs::write(
        &config,
        format!(
            "[params]\nrho = 0.02\n\n[solver]\ntol = 1e-12\n\n[run]\nproblems = DD, NN\nformat = csv\noutput = {}\nguess.DD.direct = 2.3, 2.7\nguess.NN.direct = 1.5, 2.2\n",
            output.display()
        ),
    )
    .unwrap();
    let (code, stdout, stderr) = tsvar(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.is_empty());
    let rows = parse_csv(&fs::read_to_string(&output).unwrap()).unwrap();
    assert_eq!(rows.len(), 2);
    assert!((rows[0].functional_value.unwrap() + 19.03571446).abs() < 1e-6);
    assert!((rows[1].functional_value.unwrap() + 14.19294557).abs() < 1e-6);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn config_text_matches_preset() {
    let cfg = parse_config("[run]\npreset = table2\n").unwrap();
    assert_eq!(cfg, ExperimentConfig::table2());
}
