#![no_main]

use libfuzzer_sys::fuzz_target;
use seedsched::learning::ModelBundle;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = ModelBundle::from_bytes(data) {
        let bytes = m.to_bytes();
        assert_eq!(ModelBundle::from_bytes(&bytes).unwrap().to_bytes(), bytes);
    }
});
