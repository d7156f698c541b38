//! Config text plus overrides: the bytes before the first NUL are the TOML
//! document, each line after it is one `key=value` override.

#![no_main]

use libfuzzer_sys::fuzz_target;
use sa_ldp::config::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let (doc, rest) = text.split_once('\0').unwrap_or((text, ""));
    let overrides: Vec<String> = rest.lines().map(String::from).collect();
    if let Ok(cfg) = ExperimentConfig::parse_with_overrides(doc, &overrides) {
        let again = ExperimentConfig::parse(&cfg.to_toml()).expect("serialized config parses");
        assert_eq!(again.hash(), cfg.hash());
    }
});
