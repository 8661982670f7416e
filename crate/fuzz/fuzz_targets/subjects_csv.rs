//! The subjects table decoder must reject malformed input with an error,
//! never a panic, with or without metadata overrides.

#![no_main]

use libfuzzer_sys::fuzz_target;
use ordaipw::io::{read_observed_str, IngestOptions};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let _ = read_observed_str(text, None, &IngestOptions::default());
    let opts = IngestOptions {
        horizon: Some(90.0),
        n_cats: Some(6),
        n_arms: Some(2),
    };
    let _ = read_observed_str(text, None, &opts);
});
