#![no_main]

use libfuzzer_sys::fuzz_target;
use lpcad::checkpoint::{format_checkpoint, parse_checkpoint};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(ckpt) = parse_checkpoint(text, "fuzz.ckpt") {
        let canonical = format_checkpoint(&ckpt);
        let again = parse_checkpoint(&canonical, "fuzz.ckpt").expect("re-parse");
        assert_eq!(format_checkpoint(&again), canonical);
    }
});
