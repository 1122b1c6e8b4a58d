//! CSV dataset decoding against a fixed schema must reject malformed rows,
//! labels, and missingness patterns with an error, never a panic.

#![no_main]

use std::sync::OnceLock;

use libfuzzer_sys::fuzz_target;
use lmed::data::{LongitudinalDataset, NodeSchema};

fn schema() -> &'static NodeSchema {
    static SCHEMA: OnceLock<NodeSchema> = OnceLock::new();
    SCHEMA.get_or_init(|| {
        NodeSchema::from_json_str(include_str!(
            "../../crates/lmed/tests/fixtures/schema_tau1.json"
        ))
        .expect("shipped sidecar fixture is valid")
    })
}

fuzz_target!(|data: &[u8]| {
    let _ = LongitudinalDataset::from_csv_reader(schema(), data);
});
