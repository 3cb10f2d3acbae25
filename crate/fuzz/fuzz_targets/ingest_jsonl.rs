#![no_main]

use aporo_core::ingest::{parse_jsonl, LoadOptions};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(out) = parse_jsonl(text, LoadOptions::default()) {
        let lines = text.lines().filter(|l| !l.trim().is_empty()).count();
        assert!(out.records.len() + out.warnings.len() <= lines);
    }
    let _ = parse_jsonl(text, LoadOptions { fail_fast: true });
});
