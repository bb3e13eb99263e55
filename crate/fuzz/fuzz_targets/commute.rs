#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(instances) = gatedmt::eval::parse_commute(text, "fuzz") {
        // the parser promises at least two cases per accepted instance
        assert!(instances.iter().all(|i| i.cases.len() >= 2));
    }
});
