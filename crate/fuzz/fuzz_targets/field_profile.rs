#![no_main]

use libfuzzer_sys::fuzz_target;
use raselab::decay::{gradient_lineshape, FieldProfile};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(p) = FieldProfile::from_json(text) {
        let _ = p.max_detuning();
        let _ = gradient_lineshape(&p, 64);
    }
});
