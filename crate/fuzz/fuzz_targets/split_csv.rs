#![no_main]
use libfuzzer_sys::fuzz_target;

use cadmr::datasets::{Catalog, SplitAssignment};

fuzz_target!(|data: &[u8]| {
    let users = (0..4).map(|u| format!("u{u}"));
    let items = (0..4).map(|i| format!("i{i}"));
    let catalog = Catalog::from_tokens(users, items);
    if let Ok(split) = SplitAssignment::read_csv(data, &catalog, 0, "fuzz") {
        let mut out = Vec::new();
        split.write_csv(&mut out, &catalog).expect("write");
        let again = SplitAssignment::read_csv(out.as_slice(), &catalog, 0, "again").expect("re-read");
        assert_eq!(again, split);
    }
});
