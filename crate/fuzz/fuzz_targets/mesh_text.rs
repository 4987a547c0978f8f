#![no_main]

use libfuzzer_sys::fuzz_target;
use svfem::mesh::{load_mesh, write_mesh};

fuzz_target!(|data: &str| {
    if let Ok(mesh) = load_mesh(data) {
        let again = load_mesh(&write_mesh(&mesh)).expect("written meshes load back");
        assert_eq!(again.n_triangles(), mesh.n_triangles());
    }
});
