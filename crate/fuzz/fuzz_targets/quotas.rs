#![no_main]

use aporo_core::sample::parse_quotas;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(quotas) = parse_quotas(text) {
        let again: String = quotas.iter().map(|(t, q)| format!("{t} {q}\n")).collect();
        assert_eq!(parse_quotas(&again).unwrap(), quotas);
    }
});
