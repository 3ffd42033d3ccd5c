#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(meta) = bsindy::io::parse_metadata(text) {
            assert!(meta.sigma_x.map_or(true, |s| s.is_finite() && s >= 0.0));
        }
    }
});
