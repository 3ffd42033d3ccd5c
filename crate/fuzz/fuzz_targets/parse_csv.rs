#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ts) = bsindy::io::parse_csv(data, Path::new("fuzz.csv")) {
        assert!(ts.len() > 0);
        assert!(ts.t.windows(2).all(|w| w[1] > w[0]));
        let mut buf = Vec::new();
        bsindy::io::write_csv(&ts, &mut buf).unwrap();
        let back = bsindy::io::parse_csv(buf.as_slice(), Path::new("fuzz.csv")).unwrap();
        assert_eq!(back.t, ts.t);
        assert_eq!(back.x, ts.x);
    }
});
