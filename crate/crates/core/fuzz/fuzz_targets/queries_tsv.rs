#![no_main]

use kge_core::eval::QueryFile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(q) = QueryFile::parse(text) {
        assert_eq!(QueryFile::parse(&q.to_tsv()).unwrap(), q);
    }
});
