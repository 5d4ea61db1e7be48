#![no_main]

use fednoise::bench::config::parse_key_values;
use fednoise::bench::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let _ = parse_key_values(text);
    if let Ok(cfg) = ExperimentConfig::from_text(text, &[]) {
        let rendered = cfg.render();
        let again = ExperimentConfig::from_text(&rendered, &[]).expect("rendered config parses");
        assert_eq!(again.render(), rendered);
    }
});
