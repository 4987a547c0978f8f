#![no_main]

use libfuzzer_sys::fuzz_target;
use svfem::config::RunConfig;

fuzz_target!(|data: &str| {
    if let Ok(cfg) = RunConfig::parse(data) {
        let again = RunConfig::parse(&cfg.serialize()).expect("serialized configs parse");
        assert_eq!(again, cfg);
    }
});
