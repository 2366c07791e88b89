#![no_main]

use libfuzzer_sys::fuzz_target;
use raselab::trace::ShotManifest;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(m) = ShotManifest::from_json(text) {
            assert!(m.validate().is_ok());
        }
    }
});
