#![no_main]

use libfuzzer_sys::fuzz_target;
use lpcad::train::TrainConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = TrainConfig::parse(text, "fuzz.cfg") {
        assert_eq!(
            TrainConfig::parse(&config.to_text(), "fuzz.cfg").expect("re-parse"),
            config
        );
    }
});
