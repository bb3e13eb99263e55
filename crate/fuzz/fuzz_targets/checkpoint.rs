#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = gatedmt::io::Checkpoint::from_bytes(data, "fuzz");
});
