#![no_main]

use libfuzzer_sys::fuzz_target;

// The triplet reader must reject or accept arbitrary JSONL bytes without
// panicking; accepted data must survive a write/parse round trip.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(ds) = gatedmt::datapipe::parse_triplets(text, "fuzz") {
        let dir = std::env::temp_dir().join(format!("triplets-{}", std::process::id()));
        gatedmt::datapipe::write_triplets(&ds, &dir).unwrap();
        let back = gatedmt::datapipe::read_triplets(&dir).unwrap();
        assert_eq!(back.records, ds.records);
        let _ = std::fs::remove_file(&dir);
    }
});
