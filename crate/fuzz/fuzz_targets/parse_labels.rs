#![no_main]

use libfuzzer_sys::fuzz_target;
use lpcad::data::parse_labels;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(labels) = parse_labels(text, "fuzz_label.csv") {
        assert!(labels.iter().all(|l| *l <= 1));
    }
});
