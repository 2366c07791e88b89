#![no_main]

use libfuzzer_sys::fuzz_target;
use raselab::config::ExperimentConfig;
use raselab::quantum::SynthParams;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::from_json(text) {
        let _ = SynthParams::from_config(&cfg).validate();
        let again = serde_json::to_string(&cfg).unwrap();
        assert!(ExperimentConfig::from_json(&again).is_ok());
    }
});
