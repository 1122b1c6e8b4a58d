//! Column-schema sidecar decoding must reject hostile input with an error,
//! never a panic.

#![no_main]

use libfuzzer_sys::fuzz_target;
use lmed::data::NodeSchema;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = NodeSchema::from_json_str(text);
});
