#![no_main]

use kge_core::eval::RankedPredictions;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(p) = RankedPredictions::parse(text) {
        let again = RankedPredictions::parse(&p.to_tsv()).unwrap();
        assert_eq!(again.sorted(), p.sorted());
    }
});
