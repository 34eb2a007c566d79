#![no_main]
use libfuzzer_sys::fuzz_target;

use cadmr::datasets::parse_features_csv;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(m) = parse_features_csv(s, "fuzz") {
            assert!(m.nrows() > 0 && m.ncols() > 0);
        }
    }
});
