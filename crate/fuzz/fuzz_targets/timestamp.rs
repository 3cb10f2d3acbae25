#![no_main]

use aporo_core::ingest::parse_timestamp;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(raw) = std::str::from_utf8(data) {
        if let Some(t) = parse_timestamp(raw) {
            assert_eq!(parse_timestamp(&t.to_rfc3339()), Some(t));
        }
    }
});
