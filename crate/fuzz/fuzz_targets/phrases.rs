#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(phrases) = gatedmt::datapipe::parse_phrases(text) {
        // accepted phrases are non-empty and already lowercased
        for p in &phrases {
            assert!(p.len() >= 1);
        }
        // masking with arbitrary phrases must not panic
        let tokens: Vec<String> =
            "a red car waits here".split_whitespace().map(String::from).collect();
        let _ = gatedmt::datapipe::mask_source(&tokens, &phrases);
    }
});
