#![no_main]

use libfuzzer_sys::fuzz_target;
use seedsched::program::{from_toml_str, to_toml_string};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    // Anything that loads must save and load back to the same model.
    if let Ok(m) = from_toml_str(text) {
        let saved = to_toml_string(&m).unwrap();
        assert_eq!(from_toml_str(&saved).unwrap(), m);
    }
});
