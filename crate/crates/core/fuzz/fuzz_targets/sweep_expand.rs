#![no_main]

use kge_core::config::expand_sweep;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(points) = expand_sweep(text) {
        assert!(!points.is_empty());
    }
});
