//! Binary silhouette rendering.
//!
//! A pixel `(x, y)` is covered when its center `(x + 0.5, y + 0.5)` lies
//! inside at least one projected triangle. Points exactly on an edge are
//! covered only for top and left edges, so two triangles sharing an edge
//! never both claim (or both miss) a pixel center on it. Both windings are
//! filled and there is no depth buffer: the silhouette is the union of all
//! triangles.
//!
//! Triangles are clipped against the camera plane `z = NEAR_PLANE` before
//! projection.

use std::io::Cursor;
use std::path::Path;

use image::{GrayImage, ImageFormat, Luma};
use nalgebra::Vector3;

use crate::camera::{Camera, PoseParams};
use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;

/// Camera-space depth of the clipping plane, in world units.
pub const NEAR_PLANE: f64 = 1e-4;

const WORD: usize = 64;

/// Fixed-size row-major bitmask.
///
/// Bits are packed 64 to a word in row-major order; bits past
/// `width * height` are always zero so that equality and popcounts work on
/// whole words.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    words: Vec<u64>,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BinaryMask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("area", &self.area())
            .finish()
    }
}

impl BinaryMask {
    /// All-zero mask.
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "mask dimensions must be positive, got {width}x{height}"
            )));
        }
        let bits = width as usize * height as usize;
        Ok(BinaryMask {
            width,
            height,
            words: vec![0; bits.div_ceil(WORD)],
        })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Result<Self> {
        let mut m = Self::new(width, height)?;
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.set(x, y, true);
                }
            }
        }
        Ok(m)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    fn bit(&self, x: u32, y: u32) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y as usize * self.width as usize + x as usize
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        let i = self.bit(x, y);
        self.words[i / WORD] >> (i % WORD) & 1 == 1
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let i = self.bit(x, y);
        let m = 1u64 << (i % WORD);
        if value {
            self.words[i / WORD] |= m;
        } else {
            self.words[i / WORD] &= !m;
        }
    }

    /// Sets pixels `x0..=x1` of row `y`.
    fn fill_span(&mut self, y: u32, x0: u32, x1: u32) {
        let start = self.bit(x0, y);
        let end = self.bit(x1, y) + 1;
        let (w0, w1) = (start / WORD, (end - 1) / WORD);
        let lo_mask = !0u64 << (start % WORD);
        let hi_mask = !0u64 >> (WORD - 1 - (end - 1) % WORD);
        if w0 == w1 {
            self.words[w0] |= lo_mask & hi_mask;
        } else {
            self.words[w0] |= lo_mask;
            for w in &mut self.words[w0 + 1..w1] {
                *w = !0;
            }
            self.words[w1] |= hi_mask;
        }
    }

    pub fn clear(&mut self) {
        self.words.fill(0);
    }

    /// Number of set pixels.
    pub fn area(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    fn check_dims(&self, other: &BinaryMask) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                a: self.dims(),
                b: other.dims(),
            });
        }
        Ok(())
    }

    /// `(|A ∩ B|, |A ∪ B|)`.
    pub fn overlap_counts(&self, other: &BinaryMask) -> Result<(u64, u64)> {
        self.check_dims(other)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .fold((0, 0), |(i, u), (a, b)| {
                (i + (a & b).count_ones() as u64, u + (a | b).count_ones() as u64)
            }))
    }

    pub fn union_with(&mut self, other: &BinaryMask) -> Result<()> {
        self.check_dims(other)?;
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
        Ok(())
    }

    /// Whether every set pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims()
            && self
                .words
                .iter()
                .zip(&other.words)
                .all(|(a, b)| a & !b == 0)
    }

    /// Grayscale view, 0 for background and 255 for object.
    pub fn to_gray_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| {
            Luma([if self.get(x, y) { 255 } else { 0 }])
        })
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Cursor::new(Vec::new());
        self.to_gray_image().write_to(&mut buf, ImageFormat::Png)?;
        Ok(buf.into_inner())
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes = self.to_png_bytes()?;
        crate::io::write_atomic(path.as_ref(), &bytes)
    }

    /// Decodes any image; a pixel is foreground when its luminance is nonzero.
    pub fn from_image(img: &image::DynamicImage) -> Result<Self> {
        let luma = img.to_luma16();
        Self::from_fn(luma.width(), luma.height(), |x, y| luma.get_pixel(x, y).0[0] > 0)
    }

    pub fn from_png_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_image(&image::load_from_memory(bytes)?)
    }

    pub fn read_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_png_bytes(&bytes)
    }
}

/// Renders the silhouette of `mesh` under `pose` into a `width × height` mask.
pub fn render_silhouette(
    mesh: &TriangleMesh,
    pose: &PoseParams,
    width: u32,
    height: u32,
) -> Result<BinaryMask> {
    let mut mask = BinaryMask::new(width, height)?;
    render_into(mesh, pose, &mut mask)?;
    Ok(mask)
}

/// Renders into an existing mask, clearing it first.
pub fn render_into(mesh: &TriangleMesh, pose: &PoseParams, mask: &mut BinaryMask) -> Result<()> {
    let camera = Camera::new(pose)?;
    mask.clear();
    let cam_pts: Vec<Vector3<f64>> = mesh.vertices().iter().map(|v| camera.to_camera(v)).collect();

    for tri in mesh.triangles() {
        let c = tri.map(|i| cam_pts[i as usize]);
        let in_front = c.iter().filter(|p| p.z >= NEAR_PLANE).count();
        match in_front {
            0 => continue,
            3 => {
                let px = c.map(|p| camera.to_pixel(&p));
                fill_triangle(mask, px[0], px[1], px[2]);
            }
            _ => {
                let poly = clip_near(&c);
                let px: Vec<[f64; 2]> = poly.iter().map(|p| camera.to_pixel(p)).collect();
                for k in 1..px.len().saturating_sub(1) {
                    fill_triangle(mask, px[0], px[k], px[k + 1]);
                }
            }
        }
    }
    Ok(())
}

/// Sutherland–Hodgman against the half-space `z >= NEAR_PLANE`.
fn clip_near(tri: &[Vector3<f64>; 3]) -> Vec<Vector3<f64>> {
    let mut out = Vec::with_capacity(4);
    for i in 0..3 {
        let a = tri[i];
        let b = tri[(i + 1) % 3];
        let a_in = a.z >= NEAR_PLANE;
        let b_in = b.z >= NEAR_PLANE;
        if a_in {
            out.push(a);
        }
        if a_in != b_in {
            let t = (NEAR_PLANE - a.z) / (b.z - a.z);
            let mut p = a + (b - a) * t;
            p.z = NEAR_PLANE;
            out.push(p);
        }
    }
    out
}

/// Edge function of directed edge `s → t` at `p`; positive on the interior
/// side of a triangle with positive signed area (x right, y down).
#[inline]
fn edge(s: [f64; 2], t: [f64; 2], p: [f64; 2]) -> f64 {
    (t[0] - s[0]) * (p[1] - s[1]) - (t[1] - s[1]) * (p[0] - s[0])
}

/// Top and left edges own the pixel centers that lie exactly on them.
#[inline]
fn owns_boundary(s: [f64; 2], t: [f64; 2]) -> bool {
    let dx = t[0] - s[0];
    let dy = t[1] - s[1];
    dy < 0.0 || (dy == 0.0 && dx > 0.0)
}

struct Edge {
    s: [f64; 2],
    t: [f64; 2],
    owns: bool,
}

impl Edge {
    #[inline]
    fn covers(&self, p: [f64; 2]) -> bool {
        let e = edge(self.s, self.t, p);
        e > 0.0 || (e == 0.0 && self.owns)
    }
}

fn fill_triangle(mask: &mut BinaryMask, a: [f64; 2], b: [f64; 2], c: [f64; 2]) {
    if !(a.iter().chain(&b).chain(&c)).all(|v| v.is_finite()) {
        return;
    }
    let area = edge(a, b, c);
    if area == 0.0 {
        return;
    }
    let (b, c) = if area < 0.0 { (c, b) } else { (b, c) };
    let edges = [(a, b), (b, c), (c, a)].map(|(s, t)| Edge {
        s,
        t,
        owns: owns_boundary(s, t),
    });
    let covers = |p: [f64; 2]| edges.iter().all(|e| e.covers(p));

    let w = mask.width() as i64;
    let h = mask.height() as i64;
    let ymin = a[1].min(b[1]).min(c[1]);
    let ymax = a[1].max(b[1]).max(c[1]);
    // one spare row on each side; the exact edge test decides membership
    let r0 = ((ymin - 0.5).ceil() as i64 - 1).max(0);
    let r1 = ((ymax - 0.5).floor() as i64 + 1).min(h - 1);

    for row in r0..=r1 {
        let py = row as f64 + 0.5;
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        let mut empty = false;
        for e in &edges {
            let dx = e.t[0] - e.s[0];
            let dy = e.t[1] - e.s[1];
            if dy == 0.0 {
                if !e.covers([e.s[0], py]) {
                    empty = true;
                    break;
                }
            } else {
                let root = e.s[0] + dx * (py - e.s[1]) / dy;
                if dy < 0.0 {
                    lo = lo.max(root);
                } else {
                    hi = hi.min(root);
                }
            }
        }
        if empty || lo > hi + 2.0 {
            continue;
        }
        // Candidate span with a one-pixel margin, then trimmed with the exact
        // predicate. Along a row each edge function is monotone, so the
        // covered centers form one contiguous run.
        let mut x0 = ((lo - 0.5).ceil() as i64 - 1).max(0);
        let mut x1 = ((hi - 0.5).floor() as i64 + 1).min(w - 1);
        while x0 <= x1 && !covers([x0 as f64 + 0.5, py]) {
            x0 += 1;
        }
        while x1 >= x0 && !covers([x1 as f64 + 0.5, py]) {
            x1 -= 1;
        }
        if x0 <= x1 {
            mask.fill_span(row as u32, x0 as u32, x1 as u32);
        }
    }
}
