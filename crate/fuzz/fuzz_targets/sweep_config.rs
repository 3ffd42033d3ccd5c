#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = bsindy::bench::SweepConfig::from_json(text) {
            cfg.validate().unwrap();
            let again = serde_json::to_string(&cfg).unwrap();
            assert_eq!(bsindy::bench::SweepConfig::from_json(&again).unwrap(), cfg);
        }
    }
});
