#![no_main]

use aporo_core::bench::parse_label;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let raw = String::from_utf8_lossy(data);
    if let Ok(label) = parse_label(&raw) {
        assert_eq!(parse_label(&label.to_string()).unwrap(), label);
    }
});
