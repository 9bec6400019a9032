#![no_main]

use libfuzzer_sys::fuzz_target;
use triclip::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = RunConfig::parse(text, "<fuzz>") {
            // accepted configs must round-trip
            let again = RunConfig::parse(&cfg.to_text(), "<fuzz>").unwrap();
            assert_eq!(cfg, again);
        }
    }
});
