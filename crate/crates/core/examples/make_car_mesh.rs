//! Generates the bundled car-like test mesh (`data/car.obj`).
//!
//! The body is lofted along +x (front) from superellipse cross-sections whose
//! top follows a bumper/hood/cabin/trunk profile; four cylinders are the
//! wheels. World "up" is −y so the car stands upright at zero elevation.
//!
//! ```text
//! cargo run -p poseref-core --example make_car_mesh > crates/core/data/car.obj
//! ```

use std::f64::consts::PI;

use nalgebra::Vector3;
use poseref_core::TriangleMesh;

const STATIONS: usize = 25;
const RING: usize = 20;

/// Piecewise-linear roof line: (x, top height).
const PROFILE: [(f64, f64); 9] = [
    (-0.50, 0.12),
    (-0.45, 0.17),
    (-0.30, 0.18),
    (-0.15, 0.27),
    (0.08, 0.27),
    (0.22, 0.18),
    (0.42, 0.16),
    (0.47, 0.13),
    (0.50, 0.10),
];

fn roof(x: f64) -> f64 {
    for w in PROFILE.windows(2) {
        let ((x0, h0), (x1, h1)) = (w[0], w[1]);
        if x <= x1 {
            return h0 + (h1 - h0) * (x - x0) / (x1 - x0);
        }
    }
    PROFILE[PROFILE.len() - 1].1
}

fn half_width(x: f64) -> f64 {
    let taper = ((x.abs() - 0.40) / 0.10).max(0.0);
    0.2 * (1.0 - 0.3 * taper * taper)
}

fn spow(v: f64, p: f64) -> f64 {
    v.signum() * v.abs().powf(p)
}

fn body() -> (Vec<Vector3<f64>>, Vec<[u32; 3]>) {
    let bottom = 0.05;
    let mut v = Vec::new();
    let mut t = Vec::new();
    for s in 0..STATIONS {
        let x = -0.5 + s as f64 / (STATIONS - 1) as f64;
        let top = roof(x);
        let w = half_width(x);
        for k in 0..RING {
            let a = 2.0 * PI * k as f64 / RING as f64;
            let h = bottom + (top - bottom) * (0.5 + 0.5 * spow(a.sin(), 0.5));
            // greenhouse narrows above the belt line
            let narrowing = 1.0 - 0.3 * ((h - 0.17) / 0.10).clamp(0.0, 1.0);
            let z = w * narrowing * spow(a.cos(), 0.5);
            v.push(Vector3::new(x, -h, z));
        }
    }
    for s in 0..STATIONS - 1 {
        for k in 0..RING {
            let a = (s * RING + k) as u32;
            let b = (s * RING + (k + 1) % RING) as u32;
            let c = a + RING as u32;
            let d = b + RING as u32;
            t.push([a, b, d]);
            t.push([a, d, c]);
        }
    }
    // end caps
    for s in [0, STATIONS - 1] {
        let base = (s * RING) as u32;
        for k in 1..RING as u32 - 1 {
            t.push([base, base + k, base + k + 1]);
        }
    }
    (v, t)
}

fn wheel(cx: f64, cz: f64, v: &mut Vec<Vector3<f64>>, t: &mut Vec<[u32; 3]>) {
    const SEG: usize = 12;
    let (r, half) = (0.07, 0.025);
    let base = v.len() as u32;
    for side in [-half, half] {
        for k in 0..SEG {
            let a = 2.0 * PI * k as f64 / SEG as f64;
            v.push(Vector3::new(cx + r * a.cos(), -(r + r * a.sin()), cz + side));
        }
    }
    let n = SEG as u32;
    for k in 0..n {
        let (a, b) = (base + k, base + (k + 1) % n);
        t.push([a, b, b + n]);
        t.push([a, b + n, a + n]);
    }
    for off in [0, n] {
        for k in 1..n - 1 {
            t.push([base + off, base + off + k, base + off + k + 1]);
        }
    }
}

fn main() {
    let (mut v, mut t) = body();
    for (x, z) in [(-0.32, -0.19), (-0.32, 0.19), (0.32, -0.19), (0.32, 0.19)] {
        wheel(x, z, &mut v, &mut t);
    }
    let mesh = TriangleMesh::new(v, t)
        .and_then(|m| m.normalize())
        .expect("generated mesh is valid");
    eprintln!(
        "{} vertices, {} triangles",
        mesh.vertices().len(),
        mesh.triangles().len()
    );
    mesh.write_obj(std::io::stdout().lock()).expect("write to stdout");
}
