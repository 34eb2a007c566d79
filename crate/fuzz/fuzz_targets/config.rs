#![no_main]
use libfuzzer_sys::fuzz_target;

use cadmr::pipeline::TrainConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    for parsed in [TrainConfig::from_json(s), TrainConfig::from_toml(s)] {
        if let Ok(cfg) = parsed {
            assert_eq!(TrainConfig::from_json(&cfg.to_json()).expect("reparse"), cfg);
        }
    }
});
