#![no_main]
use libfuzzer_sys::fuzz_target;
use mthfl::experiment::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(config) = ExperimentConfig::from_toml_str(text) {
            config.validate().expect("parsed config must validate");
        }
    }
});
