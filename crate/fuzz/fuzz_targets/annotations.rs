#![no_main]

use libfuzzer_sys::fuzz_target;
use triclip::taxonomy::parse_annotations;

fuzz_target!(|data: &[u8]| {
    let _ = parse_annotations(data, 100, "<fuzz>");
});
