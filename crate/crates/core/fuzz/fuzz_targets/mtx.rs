#![no_main]

use libfuzzer_sys::fuzz_target;
use sparsegen::sparse::parse_mtx;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(m) = parse_mtx(text) {
            assert_eq!(m.pattern.nnz(), m.pattern.col_idx.len());
        }
    }
});
