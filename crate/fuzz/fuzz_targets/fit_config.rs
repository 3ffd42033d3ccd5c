#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cfg) = serde_json::from_slice::<bsindy::regression::FitConfig>(data) {
        let _ = cfg.validate();
    }
});
