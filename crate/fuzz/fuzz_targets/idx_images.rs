#![no_main]

use fednoise::datagen::{parse_idx_images, write_idx_images};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(images) = parse_idx_images(data) {
        assert_eq!(
            images.pixels.len(),
            images.count * images.rows * images.cols
        );
        // trailing bytes are rejected, so a successful parse covers the whole input
        assert_eq!(write_idx_images(&images), data);
    }
});
