#![no_main]

use libfuzzer_sys::fuzz_target;
use raselab::trace::parse_trace_csv;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_trace_csv(text, None);
        // with a known rate the time column is also checked
        let _ = parse_trace_csv(text, Some(100.0));
    }
});
