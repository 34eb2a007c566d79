#![no_main]
use libfuzzer_sys::fuzz_target;

use cadmr::datasets::parse_stats;

fuzz_target!(|data: &[u8]| {
    let _ = parse_stats(data, "fuzz");
});
