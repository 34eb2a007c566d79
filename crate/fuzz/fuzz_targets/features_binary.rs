#![no_main]
use libfuzzer_sys::fuzz_target;

use cadmr::datasets::{parse_features_binary, Modality, ModalityFeatures};

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = parse_features_binary(data, "fuzz") {
        // Re-encoding a parsed matrix must parse back to the same values.
        if let Ok(f) = ModalityFeatures::new(Modality::Text, m.clone()) {
            let again = parse_features_binary(&f.to_binary(), "again").expect("round trip");
            assert_eq!(again.dim(), m.dim());
        }
    }
});
