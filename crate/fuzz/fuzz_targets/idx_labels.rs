#![no_main]

use fednoise::datagen::{parse_idx_labels, write_idx_labels};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(labels) = parse_idx_labels(data) {
        assert_eq!(write_idx_labels(&labels), data);
    }
});
