#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = gatedmt::io::VisionEncodingStore::from_bytes(data, "fuzz");
});
