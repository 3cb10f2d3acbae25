#![no_main]

use std::path::Path;

use aporo_cli::Config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok((config, _)) = Config::parse(text, Path::new(".")) {
        let printed = toml::to_string(&config).unwrap();
        let (again, warnings) = Config::parse(&printed, Path::new(".")).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(again, config);
    }
});
