#![no_main]

use libfuzzer_sys::fuzz_target;
use sparsegen::codegen::{parse_plan, Interpreter};

// Input layout: u32 manifest length (little endian), manifest, blob.
fuzz_target!(|data: &[u8]| {
    if data.len() < 4 {
        return;
    }
    let n = u32::from_le_bytes(data[..4].try_into().unwrap()) as usize;
    let rest = &data[4..];
    if n > rest.len() {
        return;
    }
    let Ok(manifest) = std::str::from_utf8(&rest[..n]) else {
        return;
    };
    let Ok(plan) = parse_plan(manifest, &rest[n..]) else {
        return;
    };
    if plan.value_len <= 1 << 16 {
        let x = vec![1.0; plan.n_inputs as usize];
        if let Ok(i) = Interpreter::new(&plan) {
            let _ = i.run(&x);
        }
    }
});
