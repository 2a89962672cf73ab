#![no_main]

use kge_core::graph::parse_triples_tsv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_triples_tsv(text);
    }
});
