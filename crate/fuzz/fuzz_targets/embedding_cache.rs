#![no_main]

use aporo_core::topics::{decode_cache, encode_cache};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = decode_cache(data) {
        assert_eq!(m.data.len(), m.dim * m.doc_ids.len());
        let bytes = encode_cache(&m);
        assert_eq!(decode_cache(&bytes).unwrap(), m);
    }
});
