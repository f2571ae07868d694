#![no_main]

use libfuzzer_sys::fuzz_target;
use lpcad::detect::parse_score_dump;
use lpcad::metrics::threshold_search;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(dump) = parse_score_dump(text, "fuzz.scores") {
        let labels = dump.flags.clone();
        let best = threshold_search(&dump.scores, &labels).expect("valid dump");
        assert!((0.0..=1.0).contains(&best.prf.f1));
    }
});
