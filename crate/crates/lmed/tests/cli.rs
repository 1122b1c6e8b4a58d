//! End-to-end tests of the `lmed` binary: flag handling, exit codes,
//! byte-determinism, and conformance of every JSON output to the shipped
//! schemas.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas")
}

fn lmed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lmed"))
        .args(args)
        .current_dir(fixtures())
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn assert_valid(schema_file: &str, instance: &serde_json::Value) {
    let schema_text = fs::read_to_string(schema_dir().join(schema_file)).unwrap();
    let schema: serde_json::Value = serde_json::from_str(&schema_text).unwrap();
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(instance).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "schema violations: {errors:?}");
}

#[test]
fn estimate_on_the_shipped_fixture_reports_finite_uncertainty() {
    let out = lmed(&["estimate", "--config", "config_estimate.json"]);
    let report = stdout_json(&out);
    assert_valid("estimate_report.schema.json", &report);

    let theta = report["theta"].as_f64().unwrap();
    let se = report["se"].as_f64().unwrap();
    assert!(theta.is_finite());
    assert!(se > 0.0);
    assert_eq!(report["paths"].as_array().unwrap().len(), 2);
    assert_eq!(report["contrasts"].as_array().unwrap().len(), 3);
    let names: Vec<&str> = report["contrasts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["direct", "indirect", "total"]);
}

#[test]
fn fold_count_changes_estimates_but_not_report_shape() {
    let one = stdout_json(&lmed(&["estimate", "--config", "config_estimate.json", "--folds", "1"]));
    let five = stdout_json(&lmed(&["estimate", "--config", "config_estimate.json", "--folds", "5"]));
    assert_valid("estimate_report.schema.json", &one);
    assert_valid("estimate_report.schema.json", &five);
    assert_eq!(one["diagnostics"]["folds"], 1);
    assert_eq!(five["diagnostics"]["folds"], 5);

    fn keys(v: &serde_json::Value) -> Vec<String> {
        v.as_object().unwrap().keys().cloned().collect()
    }
    assert_eq!(keys(&one), keys(&five));
    assert!(one["theta"].as_f64().unwrap().is_finite());
    assert!(five["theta"].as_f64().unwrap().is_finite());
}

#[test]
fn every_command_is_byte_deterministic() {
    let estimate = ["estimate", "--config", "config_estimate.json"];
    let oracle = ["oracle", "--spec", "spec_tau1.json", "--a-prime", "1", "--a-star", "0"];
    let simulate = [
        "simulate",
        "--spec",
        "spec_tau1.json",
        "--a-prime",
        "1",
        "--a-star",
        "0",
        "--reps",
        "2",
        "--sample-sizes",
        "60",
        "--seed",
        "9",
    ];
    for args in [&estimate[..], &oracle[..], &simulate[..]] {
        let first = lmed(args);
        let second = lmed(args);
        assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
        assert_eq!(first.stdout, second.stdout, "non-identical output for {args:?}");
    }
}

#[test]
fn simulate_smoke_run_covers_all_four_scenarios() {
    let out = lmed(&[
        "simulate",
        "--spec",
        "spec_tau1.json",
        "--a-prime",
        "1",
        "--a-star",
        "0",
        "--reps",
        "2",
        "--sample-sizes",
        "100",
    ]);
    let report = stdout_json(&out);
    assert_valid("simulate_report.schema.json", &report);

    let cells = report["cells"].as_array().unwrap();
    let seen: Vec<&str> = cells.iter().map(|c| c["scenario"].as_str().unwrap()).collect();
    assert_eq!(
        seen,
        ["all-correct", "q-misspecified", "g-misspecified", "both-misspecified"]
    );
    assert_eq!(report["replications"].as_array().unwrap().len(), 8);
}

#[test]
fn oracle_reports_tiny_cross_route_residuals() {
    let out = lmed(&[
        "oracle",
        "--spec",
        "spec_tau2_reference.json",
        "--a-prime",
        "1,1",
        "--a-star",
        "0,0",
    ]);
    let report = stdout_json(&out);
    assert_valid("oracle_report.schema.json", &report);

    assert!(report["identification_gap"].as_f64().unwrap() <= 1e-10);
    assert!(report["mean_score"].as_f64().unwrap().abs() <= 1e-10);
    assert!(report["max_phi_gap"].as_f64().unwrap() <= 1e-10);
    assert!(report["max_lambda_gap"].as_f64().unwrap() <= 1e-10);
    assert!(report["max_von_mises_residual"].as_f64().unwrap() <= 1e-10);
    assert!(report["var_score"].as_f64().unwrap() > 0.0);
    assert_eq!(report["von_mises"].as_array().unwrap().len(), 6);
}

#[test]
fn degenerate_mediator_gets_unit_path_mass() {
    let out = lmed(&[
        "oracle",
        "--spec",
        "spec_degenerate_mediator.json",
        "--a-prime",
        "1",
        "--a-star",
        "0",
    ]);
    let report = stdout_json(&out);
    assert_valid("oracle_report.schema.json", &report);
    let paths = report["paths"].as_array().unwrap();
    assert_eq!(paths.len(), 1);
    assert_eq!(paths[0]["lambda"].as_f64().unwrap(), 1.0);
    assert_eq!(report["theta"].as_f64().unwrap(), 0.8);
}

#[test]
fn corrupted_csv_fails_validation_naming_the_row() {
    let dir = std::env::temp_dir().join("lmed-cli-corrupt");
    fs::create_dir_all(&dir).unwrap();
    let good = fs::read_to_string(fixtures().join("data_tau1.csv")).unwrap();
    // Blank the treatment on data row 3 while keeping later columns observed:
    // non-monotone missingness.
    let mut lines: Vec<String> = good.lines().map(str::to_string).collect();
    let broken = {
        let mut fields: Vec<&str> = lines[4].split(',').collect();
        fields[1] = "";
        fields.join(",")
    };
    lines[4] = broken;
    let bad_path = dir.join("bad.csv");
    fs::write(&bad_path, lines.join("\n")).unwrap();

    let out = lmed(&[
        "estimate",
        "--data",
        bad_path.to_str().unwrap(),
        "--schema",
        "schema_tau1.json",
        "--a-prime",
        "1",
        "--a-star",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("row 3"), "stderr: {stderr}");
}

#[test]
fn missing_required_inputs_exit_2() {
    let no_schema = lmed(&["estimate", "--data", "data_tau1.csv"]);
    assert_eq!(no_schema.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&no_schema.stderr).contains("--schema"));

    let no_pair = lmed(&["oracle", "--spec", "spec_tau1.json"]);
    assert_eq!(no_pair.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&no_pair.stderr).contains("--a-prime"));

    let bad_regime =
        lmed(&["oracle", "--spec", "spec_tau1.json", "--a-prime", "9", "--a-star", "0"]);
    assert_eq!(bad_regime.status.code(), Some(2));
}

#[test]
fn state_space_guard_exits_4() {
    let dir = std::env::temp_dir().join("lmed-cli-guard");
    fs::create_dir_all(&dir).unwrap();
    let mut spec: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(fixtures().join("spec_tau1.json")).unwrap())
            .unwrap();
    spec["covariate_cards"] = serde_json::json!([100_000_000]);
    let path = dir.join("huge.json");
    fs::write(&path, serde_json::to_string(&spec).unwrap()).unwrap();

    let out = lmed(&["oracle", "--spec", path.to_str().unwrap(), "--a-prime", "1", "--a-star", "0"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn help_lists_every_flag_with_its_default() {
    for sub in ["estimate", "simulate", "oracle"] {
        let out = lmed(&[sub, "--help"]);
        assert!(out.status.success());
        let text = String::from_utf8_lossy(&out.stdout);
        for flag in [
            "--config", "--data", "--schema", "--spec", "--a-prime", "--a-star", "--folds",
            "--seed", "--alpha", "--g-floor", "--out", "--threads",
        ] {
            assert!(text.contains(flag), "{sub} --help is missing {flag}");
        }
        assert!(text.contains("default"), "{sub} --help lists no defaults");
    }
    let sim = String::from_utf8_lossy(&lmed(&["simulate", "--help"]).stdout).to_string();
    for flag in ["--reps", "--sample-sizes", "--scenario", "--shrinkage", "--csv-out"] {
        assert!(sim.contains(flag), "simulate --help is missing {flag}");
    }
    assert!(String::from_utf8_lossy(&lmed(&["oracle", "--help"]).stdout).contains("--eps"));
}

#[test]
fn flag_overrides_beat_config_values() {
    let from_config = stdout_json(&lmed(&["estimate", "--config", "config_estimate.json"]));
    let overridden =
        stdout_json(&lmed(&["estimate", "--config", "config_estimate.json", "--seed", "8"]));
    assert_eq!(from_config["diagnostics"]["seed"], 7);
    assert_eq!(overridden["diagnostics"]["seed"], 8);
}

#[test]
fn output_file_matches_stdout_bytes() {
    let dir = std::env::temp_dir().join("lmed-cli-out");
    fs::create_dir_all(&dir).unwrap();
    let out_path = dir.join("report.json");
    let to_stdout = lmed(&["estimate", "--config", "config_estimate.json"]);
    let to_file = lmed(&[
        "estimate",
        "--config",
        "config_estimate.json",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(to_file.status.success());
    assert!(to_file.stdout.is_empty());
    assert_eq!(fs::read(&out_path).unwrap(), to_stdout.stdout);
}
