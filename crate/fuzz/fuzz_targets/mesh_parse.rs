//! Fuzzes the mesh text parser: must never panic, and every accepted mesh
//! must survive a serialize/reparse round trip.

#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(mesh) = dh2::geometry::mesh_from_str(text) else {
        return;
    };
    let again = dh2::geometry::mesh_to_string(&mesh);
    let back = dh2::geometry::mesh_from_str(&again).expect("round trip must reparse");
    assert_eq!(back.num_vertices(), mesh.num_vertices());
    assert_eq!(back.num_panels(), mesh.num_panels());
});
