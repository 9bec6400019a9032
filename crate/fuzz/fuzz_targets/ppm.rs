#![no_main]

use libfuzzer_sys::fuzz_target;
use triclip::data::ppm::{parse_ppm, to_ppm_bytes};

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = parse_ppm(data) {
        // accepted images must round-trip
        let back = parse_ppm(&to_ppm_bytes(&img)).unwrap();
        assert_eq!((back.width, back.height), (img.width, img.height));
    }
});
