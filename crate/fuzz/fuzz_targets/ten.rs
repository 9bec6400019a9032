#![no_main]

use libfuzzer_sys::fuzz_target;
use triclip::tensor::Tensor;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = Tensor::from_ten_bytes(data) {
        // accepted tensors must round-trip
        let back = Tensor::from_ten_bytes(&t.to_ten_bytes()).unwrap();
        assert_eq!(t.shape(), back.shape());
    }
});
