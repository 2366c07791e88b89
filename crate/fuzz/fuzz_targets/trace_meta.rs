#![no_main]

use libfuzzer_sys::fuzz_target;
use raselab::trace::{TimeTrace, TraceMeta};
use raselab::Complex64;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(meta) = TraceMeta::from_json(text) {
        // accepted metadata must either build a trace or be rejected cleanly
        let n = meta.n_samples.min(1 << 16);
        let _ = TimeTrace::from_parts(meta, vec![Complex64::new(0.0, 0.0); n]);
    }
});
