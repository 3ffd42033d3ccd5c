#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = bsindy::bench::FitRun::from_json(text);
        let _ = bsindy::bench::ActiveRun::from_json(text);
        let _ = serde_json::from_str::<bsindy::bench::DerivCompareConfig>(text);
    }
});
