#![no_main]

use libfuzzer_sys::fuzz_target;
use seedsched::config::CampaignFile;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(f) = CampaignFile::from_toml_str(text) {
        // Compared as text: NaN fields never equal themselves.
        let text = f.to_toml_string();
        assert_eq!(CampaignFile::from_toml_str(&text).unwrap().to_toml_string(), text);
        let _ = f.template();
    }
});
