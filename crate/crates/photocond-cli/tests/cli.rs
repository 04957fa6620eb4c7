//! Exit codes and output contracts of the command-line interface.

use std::process::Command;

fn run(args: &[&str]) -> (i32, String, String) {
    let output = Command::new(env!("CARGO_BIN_EXE_photocond"))
        .args(args)
        .output()
        .expect("spawn photocond");
    (
        output.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&output.stdout).into_owned(),
        String::from_utf8_lossy(&output.stderr).into_owned(),
    )
}

#[test]
fn config_errors_exit_with_one() {
    // Degenerate single-point grid.
    let (code, _, _) = run(&[
        "sweep", "--process", "subtract", "--state", "thermal:1", "--detector", "n:1",
        "--reflectivity", "0.01", "--grid", "1,10,1",
    ]);
    assert_eq!(code, 1);
    // Unknown process.
    let (code, _, _) = run(&["sweep", "--process", "transmogrify", "--state", "thermal:1"]);
    assert_eq!(code, 1);
    // Reflectivity outside (0, 1).
    let (code, _, _) = run(&[
        "sweep", "--process", "subtract", "--state", "thermal:1", "--reflectivity", "1.5",
    ]);
    assert_eq!(code, 1);
    // Number states have no intensity to sweep.
    let (code, _, _) = run(&[
        "sweep", "--process", "subtract", "--state", "fock:3", "--reflectivity", "0.01",
    ]);
    assert_eq!(code, 1);
    // Unknown flags are parse errors.
    let (code, _, _) = run(&["sweep", "--bogus"]);
    assert_eq!(code, 1);
}

#[test]
fn help_exits_cleanly() {
    let (code, stdout, _) = run(&["--help"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("sweep"));
    assert!(stdout.contains("validate"));
    assert!(stdout.contains("point"));
}

#[test]
fn sweep_csv_has_the_documented_header() {
    let (code, stdout, _) = run(&[
        "sweep", "--process", "subtract", "--state", "thermal:1", "--detector", "n:1",
        "--reflectivity", "0.01", "--grid", "0.5,50,5", "--models", "exact,A,E",
    ]);
    assert_eq!(code, 0);
    let mut lines = stdout.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n0,n0_times_R_or_r,P,mean_n,mean_n_over_n0,second_factorial,second_factorial_over_n0sq,model,detector"
    );
    // 5 grid points x (exact n + exact r + A + E).
    assert_eq!(lines.count(), 20);
}

#[test]
fn sweep_json_mirrors_the_csv_columns() {
    let (code, stdout, _) = run(&[
        "sweep", "--process", "add", "--state", "thermal:2", "--detector", "r:1",
        "--gain", "0.1", "--grid", "0.5,5,3", "--models", "exact", "--format", "json",
    ]);
    assert_eq!(code, 0);
    let rows: serde_json::Value = serde_json::from_str(&stdout).expect("json rows");
    let rows = rows.as_array().expect("array");
    assert_eq!(rows.len(), 6);
    for key in [
        "n0",
        "n0_times_R_or_r",
        "P",
        "mean_n",
        "mean_n_over_n0",
        "second_factorial",
        "second_factorial_over_n0sq",
        "model",
        "detector",
    ] {
        assert!(rows[0].get(key).is_some(), "missing column {key}");
    }
}

#[test]
fn impossible_outcomes_are_rows_not_errors() {
    // Subtracting from the vacuum cannot click; the point report carries
    // probability zero and null moments.
    let (code, stdout, _) = run(&[
        "point", "--process", "subtract", "--state", "fock:0", "--detector", "n:1",
        "--reflectivity", "0.5",
    ]);
    assert_eq!(code, 0);
    let report: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(report["probability"], 0.0);
    assert!(report["mean_n"].is_null());
}

#[test]
fn point_posterior_round_trips_through_the_record_format() {
    let (code, stdout, _) = run(&[
        "point", "--process", "add", "--state", "thermal:1", "--detector", "n:1",
        "--gain", "0.1",
    ]);
    assert_eq!(code, 0);
    let report: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    let record: photocond::states::DistributionRecord =
        serde_json::from_value(report["posterior"].clone()).expect("posterior record");
    assert_eq!(record.probs.len(), record.cutoff + 1);
    let rebuilt = record.to_distribution().expect("rebuild");
    assert!((rebuilt.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    // Addition never leaves the vacuum populated.
    assert_eq!(record.probs[0], 0.0);
}

#[test]
fn sequential_point_matches_the_sequential_model() {
    let (code, stdout, _) = run(&[
        "point", "--process", "sequential", "--state", "coherent:2", "--detector", "n:2",
        "--reflectivity", "0.04",
    ]);
    assert_eq!(code, 0);
    let report: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    // Coherent posterior mean after two sequential clicks is n0 T^2.
    let mean = report["mean_n"].as_f64().unwrap();
    assert!((mean - 2.0 * 0.96 * 0.96).abs() < 1e-9);
}
