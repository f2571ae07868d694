#![no_main]

use libfuzzer_sys::fuzz_target;
use lpcad::data::{synth_generate, SynthSpec};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(spec) = SynthSpec::parse(text, "fuzz.spec") else {
        return;
    };
    // Generation cost grows with the requested size; only small specs run.
    if spec.train_len + spec.test_len > 5_000 || spec.dims > 16 || spec.source_count() > 16 {
        return;
    }
    if spec.time_shift_steps > 10_000 || spec.segment_max > 1_000 {
        return;
    }
    if let Ok(out) = synth_generate(&spec) {
        let labeled = out.bundle.test_labels().iter().filter(|l| **l == 1).count();
        assert_eq!(labeled, out.segments.iter().map(|s| s.len).sum::<usize>());
    }
});
