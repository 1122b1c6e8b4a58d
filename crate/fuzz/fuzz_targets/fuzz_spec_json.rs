//! Structural-model JSON decoding must never panic, and any input that both
//! parses and validates must survive a serialize/reparse round trip.

#![no_main]

use libfuzzer_sys::fuzz_target;
use lmed::oracle::NpsemSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(spec) = NpsemSpec::from_json_str(text) else { return };
    if spec.validate().is_ok() {
        let again = NpsemSpec::from_json_str(&spec.to_json_string())
            .expect("serialized valid model reparses");
        assert_eq!(again, spec, "round trip changed a validated model");
    }
});
