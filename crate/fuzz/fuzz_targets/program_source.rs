#![no_main]

use libfuzzer_sys::fuzz_target;
use seedsched::program::ProgramSource;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    // Parsing only; resolving would generate or read arbitrary programs.
    if let Ok(src) = text.parse::<ProgramSource>() {
        let again: ProgramSource = src.to_string().parse().unwrap();
        assert_eq!(again, src);
    }
});
