#![no_main]

use libfuzzer_sys::fuzz_target;
use mploc::config::{ExperimentConfig, FlatConfig};

// The first line is treated as a `KEY=VALUE` override, the rest as the file.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    let overrides = [first.to_string()];
    let _ = FlatConfig::parse(rest, &[]);
    let _ = FlatConfig::parse(rest, &overrides);
    let _ = ExperimentConfig::parse(rest, &overrides);
});
