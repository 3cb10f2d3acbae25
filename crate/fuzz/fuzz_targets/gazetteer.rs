#![no_main]

use aporo_core::geo::Gazetteer;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = Gazetteer::parse(text);
    }
});
