#![no_main]

use libfuzzer_sys::fuzz_target;
use lpcad::data::{format_matrix, parse_series};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(series) = parse_series(text, "fuzz.csv") {
        assert_eq!(series.values().len(), series.len() * series.dims());
        // Anything accepted must survive its own formatting.
        let again = parse_series(&format_matrix(&series), "fuzz.csv").expect("re-parse");
        assert_eq!(again.values(), series.values());
    }
});
