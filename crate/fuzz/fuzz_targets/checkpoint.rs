#![no_main]
use libfuzzer_sys::fuzz_target;

use cadmr::pipeline::{decode_checkpoint, encode_checkpoint};

fuzz_target!(|data: &[u8]| {
    if let Ok(ckpt) = decode_checkpoint(data) {
        assert_eq!(decode_checkpoint(&encode_checkpoint(&ckpt)).expect("re-decode"), ckpt);
    }
});
