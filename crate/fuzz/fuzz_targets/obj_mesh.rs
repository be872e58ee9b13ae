#![no_main]

use binpose::geometry::TriangleMesh;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(mesh) = TriangleMesh::from_obj_str(text) {
        assert!(mesh.diameter() > 0.0);
        let back = TriangleMesh::from_obj_str(&mesh.to_obj_string()).expect("re-parse");
        assert_eq!(back.triangles(), mesh.triangles());
    }
});
