#![no_main]

use aporo_core::bench::{build_prompt, PromptSpec};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = PromptSpec::parse(text) {
        let _ = build_prompt(&spec, "an example post");
    }
});
