#![no_main]
use libfuzzer_sys::fuzz_target;

use cadmr::eval::parse_reports_csv;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = parse_reports_csv(data, "fuzz") {
        for r in &rows {
            assert!((0.0..=1.0).contains(&r.recall) && (0.0..=1.0).contains(&r.ndcg));
        }
    }
});
