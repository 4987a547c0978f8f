#![no_main]

use libfuzzer_sys::fuzz_target;
use svfem::config::{MeshSource, PressureSource};

fuzz_target!(|data: &str| {
    let _ = data.parse::<MeshSource>();
    let _ = data.parse::<PressureSource>();
});
