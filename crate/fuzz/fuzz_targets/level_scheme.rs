#![no_main]

use libfuzzer_sys::fuzz_target;
use raselab::scheme::LevelScheme;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = serde_json::from_slice::<LevelScheme>(data) {
        let _ = s.validate();
    }
});
