#![no_main]

use libfuzzer_sys::fuzz_target;
use seedsched::config::ExperimentSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = ExperimentSpec::from_toml_str(text);
});
