//! Path CSV reader; accepted paths must survive a write/read round trip.

#![no_main]

use libfuzzer_sys::fuzz_target;
use sa_ldp::sim::Path;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(path) = Path::from_csv(text) {
        let back = Path::from_csv(&path.to_csv()).expect("written path parses");
        assert_eq!(back.times(), path.times());
    }
});
