#![no_main]

use kge_core::runtime::Checkpoint;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(c) = Checkpoint::<f32>::decode(data) {
        assert_eq!(c.encode(), data);
    }
    if let Ok(c) = Checkpoint::<f64>::decode(data) {
        assert_eq!(c.encode(), data);
    }
});
