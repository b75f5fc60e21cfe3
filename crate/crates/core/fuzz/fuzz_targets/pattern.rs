#![no_main]

use libfuzzer_sys::fuzz_target;
use sparsegen::programs::{PatternSource, ProgramKind};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(p) = text.parse::<PatternSource>() {
        assert_eq!(p.to_string().parse::<PatternSource>().unwrap(), p);
    }
    if let Ok(k) = text.parse::<ProgramKind>() {
        assert_eq!(k.to_string().parse::<ProgramKind>().unwrap(), k);
    }
});
