#![no_main]
use libfuzzer_sys::fuzz_target;

use cadmr::datasets::{parse_interactions, DelimitedFormat};

fuzz_target!(|data: &[u8]| {
    for format in [DelimitedFormat::Csv, DelimitedFormat::Tsv] {
        for header in [false, true] {
            if let Ok(recs) = parse_interactions(data, format, header, "fuzz") {
                for r in &recs {
                    assert!(!r.user.is_empty() && !r.item.is_empty());
                }
            }
        }
    }
});
