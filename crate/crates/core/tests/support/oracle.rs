//! Brute-force silhouette oracle: every pixel center against every projected
//! triangle, no spans, no clipping. Only valid when every vertex lies in
//! front of the camera.

use poseref_core::{project_point, BinaryMask, PoseParams, TriangleMesh};

fn inside(tri: [[f64; 2]; 3], p: [f64; 2]) -> bool {
    let [a, mut b, mut c] = tri;
    let cross = |s: [f64; 2], t: [f64; 2], q: [f64; 2]| (t[0] - s[0]) * (q[1] - s[1]) - (t[1] - s[1]) * (q[0] - s[0]);
    let area = cross(a, b, c);
    if area == 0.0 {
        return false;
    }
    if area < 0.0 {
        std::mem::swap(&mut b, &mut c);
    }
    for (s, t) in [(a, b), (b, c), (c, a)] {
        let e = cross(s, t, p);
        let (dx, dy) = (t[0] - s[0], t[1] - s[1]);
        let top_left = dy < 0.0 || (dy == 0.0 && dx > 0.0);
        if !(e > 0.0 || (e == 0.0 && top_left)) {
            return false;
        }
    }
    true
}

pub fn oracle_silhouette(mesh: &TriangleMesh, pose: &PoseParams, width: u32, height: u32) -> BinaryMask {
    let px: Vec<[f64; 2]> = mesh
        .vertices()
        .iter()
        .map(|v| project_point(pose, v).expect("oracle needs every vertex in front of the camera"))
        .collect();
    BinaryMask::from_fn(width, height, |x, y| {
        let p = [x as f64 + 0.5, y as f64 + 0.5];
        mesh.triangles()
            .iter()
            .any(|t| inside(t.map(|i| px[i as usize]), p))
    })
    .unwrap()
}
