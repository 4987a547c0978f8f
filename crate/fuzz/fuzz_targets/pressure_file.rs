#![no_main]

use libfuzzer_sys::fuzz_target;
use svfem::config::parse_pressure;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(values) = parse_pressure(s) {
            assert!(values.iter().all(|v| v.is_finite()));
        }
    }
});
