//! Config parsing followed by model construction and one kernel row.

#![no_main]

use libfuzzer_sys::fuzz_target;
use sa_ldp::config::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = ExperimentConfig::parse(text) else { return };
    let _ = cfg.schedule();
    if let Ok(model) = cfg.build_model() {
        assert_eq!(model.x0.len(), model.dim);
    }
});
