//! Shared fixtures for the criterion benchmarks in `benches/`.

use poseref_core::{PoseParams, TriangleMesh};

/// The bundled ~1k-triangle car mesh.
pub fn car_mesh() -> TriangleMesh {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/data/car.obj");
    TriangleMesh::load_obj_file(path).expect("bundled car mesh")
}

/// A three-quarter view that fills about half of a `width`-wide frame.
pub fn reference_pose(width: u32, height: u32) -> PoseParams {
    PoseParams::new(
        35.0,
        15.0,
        2.0,
        3.0,
        1.4 * width as f64,
        width as f64 / 2.0,
        height as f64 / 2.0,
    )
    .expect("valid pose")
}
