#![no_main]

use kge_core::graph::{decode_triples, encode_triples};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((header, triples)) = decode_triples(data) {
        let mut out = Vec::new();
        encode_triples(&mut out, header.entity_count as usize, header.relation_count as usize, &triples).unwrap();
        assert_eq!(out, data);
    }
});
