#![no_main]

use aporo_core::annotate::{read_dataset, write_dataset};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = read_dataset(data) {
        let mut buf = Vec::new();
        write_dataset(&mut buf, &rows).unwrap();
        assert_eq!(read_dataset(&buf[..]).unwrap(), rows);
    }
});
