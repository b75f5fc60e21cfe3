#![no_main]

use libfuzzer_sys::fuzz_target;
use sparsegen::codegen::{decode_blob, encode_blob};

fuzz_target!(|data: &[u8]| {
    if let Ok(b) = decode_blob(data) {
        // A blob that decodes must re-encode to the same bytes.
        assert_eq!(encode_blob(&b.positions, &b.constants), data);
    }
});
