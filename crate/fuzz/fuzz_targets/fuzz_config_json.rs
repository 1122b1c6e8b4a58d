//! Run-configuration JSON decoding must reject hostile input with an error,
//! never a panic; anything that parses must also survive validation without
//! panicking.

#![no_main]

use libfuzzer_sys::fuzz_target;
use lmed::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = RunConfig::from_json_str(text) {
        let _ = config.validate();
    }
});
