#![no_main]

use kge_core::graph::{decode_features, encode_features, FeatureEncoding};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(features) = decode_features(data) {
        if data[16] == 0 {
            let mut out = Vec::new();
            encode_features(&mut out, &features, FeatureEncoding::F32).unwrap();
            assert_eq!(out, data);
        }
    }
});
