#![no_main]

use aporo_core::ingest::{parse_csv, LoadOptions};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = parse_csv(data, LoadOptions::default());
});
