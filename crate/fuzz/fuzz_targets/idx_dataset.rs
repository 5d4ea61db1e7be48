#![no_main]

use fednoise::datagen::{idx_to_dataset, parse_idx_images, parse_idx_labels};
use libfuzzer_sys::fuzz_target;

// First two bytes pick the split between the image file and the label file.
fuzz_target!(|data: &[u8]| {
    let Some((head, rest)) = data.split_first_chunk::<2>() else {
        return;
    };
    let split = usize::from(u16::from_le_bytes(*head)).min(rest.len());
    let (images, labels) = rest.split_at(split);
    let (Ok(images), Ok(labels)) = (parse_idx_images(images), parse_idx_labels(labels)) else {
        return;
    };
    if let Ok(ds) = idx_to_dataset(&images, &labels) {
        assert_eq!(ds.len(), labels.len());
        assert!(ds.x.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(ds.true_labels.iter().all(|&y| y < ds.classes));
    }
});
