//! Regenerates every checked-in fixture deterministically from the library.
//!
//! Run explicitly after changing the model generator or the CSV writer:
//!
//! ```text
//! cargo test -p lmed --test fixture_gen -- --ignored
//! ```
//!
//! The generator seeds are frozen; they were chosen by sweeping candidates
//! for comfortable positivity margins and, for the reference model, a large
//! gap between the target and the probability limit of the doubly
//! misspecified estimator (so robustness studies separate signal from noise).

use std::fs;
use std::path::{Path, PathBuf};

use lmed::oracle::{random_binary_spec, DiscreteLaw, RandomSpecOptions};
use lmed::simulate::{dataset_to_csv, sample_dataset};

fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

fn write(name: &str, mut text: String) {
    if !text.ends_with('\n') {
        text.push('\n');
    }
    fs::write(fixtures_dir().join(name), text).unwrap();
}

/// Sidecar for the canonical single-period layout the model derives
/// (`l1, a1, z1, m1, y`), with both categorical supports declared.
const SCHEMA_TAU1: &str = r#"{
  "tau": 1,
  "columns": [
    { "name": "l1", "role": "covariate", "time": 1 },
    { "name": "a1", "role": "treatment", "time": 1 },
    { "name": "z1", "role": "confounder", "time": 1 },
    { "name": "m1", "role": "mediator", "time": 1 },
    { "name": "y", "role": "outcome" }
  ],
  "mediator_support": { "1": [0, 1] },
  "treatment_levels": { "1": [0, 1] }
}"#;

/// Example run config for the estimation command, with paths relative to the
/// fixtures directory.
const CONFIG_ESTIMATE: &str = r#"{
  "data": "data_tau1.csv",
  "schema": "schema_tau1.json",
  "a_prime": [1],
  "a_star": [0],
  "folds": 5,
  "seed": 7,
  "alpha": 0.05
}"#;

#[test]
#[ignore = "regenerates checked-in fixtures; run on demand"]
fn regenerate_fixtures() {
    fs::create_dir_all(fixtures_dir()).unwrap();

    let tau1 = random_binary_spec(&RandomSpecOptions { tau: 1, ..Default::default() }, 5);
    let tau2 = random_binary_spec(&RandomSpecOptions { tau: 2, ..Default::default() }, 11);
    let null_mediator = random_binary_spec(
        &RandomSpecOptions { tau: 2, null_mediator: true, ..Default::default() },
        7,
    );
    let censoring = random_binary_spec(
        &RandomSpecOptions { tau: 2, censoring: true, ..Default::default() },
        3,
    );
    write("spec_tau1.json", tau1.to_json_string());
    write("spec_tau2_reference.json", tau2.to_json_string());
    write("spec_null_mediator.json", null_mediator.to_json_string());
    write("spec_tau2_censoring.json", censoring.to_json_string());

    let law = DiscreteLaw::new(&tau1).unwrap();
    let (data, _states) = sample_dataset(&law, 200, 2026).unwrap();
    write("data_tau1.csv", dataset_to_csv(&data));
    write("schema_tau1.json", SCHEMA_TAU1.to_string());
    write("config_estimate.json", CONFIG_ESTIMATE.to_string());
}
