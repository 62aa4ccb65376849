//! Indexed triangle meshes and a minimal Wavefront OBJ reader/writer.
//!
//! Only `v` and `f` records are interpreted. Polygons are fan-triangulated
//! from their first vertex, `v/vt/vn` sub-indices are reduced to the vertex
//! index, and negative indices count back from the most recent vertex.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleMesh {
    vertices: Vec<Vector3<f64>>,
    triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    /// Builds a mesh, checking every index against the vertex count.
    pub fn new(vertices: Vec<Vector3<f64>>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let n = vertices.len();
        if let Some(t) = triangles
            .iter()
            .find(|t| t.iter().any(|&i| i as usize >= n))
        {
            return Err(Error::InvalidParameter(format!(
                "triangle {t:?} indexes past {n} vertices"
            )));
        }
        Ok(TriangleMesh {
            vertices,
            triangles,
        })
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Concatenates two meshes into one.
    pub fn merged(&self, other: &TriangleMesh) -> TriangleMesh {
        let offset = self.vertices.len() as u32;
        let mut vertices = self.vertices.clone();
        vertices.extend_from_slice(&other.vertices);
        let mut triangles = self.triangles.clone();
        triangles.extend(other.triangles.iter().map(|t| t.map(|i| i + offset)));
        TriangleMesh {
            vertices,
            triangles,
        }
    }

    /// Componentwise minimum and maximum over all vertices.
    pub fn bounding_box(&self) -> Result<(Vector3<f64>, Vector3<f64>)> {
        let first = self.vertices.first().ok_or(Error::EmptyMesh)?;
        Ok(self
            .vertices
            .iter()
            .fold((*first, *first), |(lo, hi), v| (lo.inf(v), hi.sup(v))))
    }

    /// Length of the longest bounding-box edge.
    pub fn extent(&self) -> Result<f64> {
        let (lo, hi) = self.bounding_box()?;
        Ok((hi - lo).max())
    }

    /// Centers the bounding box on the origin and scales uniformly so the
    /// longest bounding-box edge has length 1. A mesh whose extent is zero is
    /// only translated.
    pub fn normalize(&self) -> Result<TriangleMesh> {
        let (lo, hi) = self.bounding_box()?;
        let center = (lo + hi) * 0.5;
        let longest = (hi - lo).max();
        let scale = if longest > 0.0 { 1.0 / longest } else { 1.0 };
        Ok(TriangleMesh {
            vertices: self
                .vertices
                .iter()
                .map(|v| (v - center) * scale)
                .collect(),
            triangles: self.triangles.clone(),
        })
    }

    /// Parses OBJ text.
    pub fn load_obj<R: BufRead>(reader: R) -> Result<TriangleMesh> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        let mut face = Vec::with_capacity(8);

        for (lineno, line) in reader.lines().enumerate() {
            let lineno = lineno + 1;
            let line = line.map_err(|e| Error::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
            let line = line.split('#').next().unwrap_or("");
            let mut tokens = line.split_whitespace();
            match tokens.next() {
                Some("v") => {
                    let mut xyz = [0.0; 3];
                    for c in xyz.iter_mut() {
                        let tok = tokens.next().ok_or_else(|| Error::Parse {
                            line: lineno,
                            message: "vertex needs three coordinates".into(),
                        })?;
                        *c = tok.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(
                            || Error::Parse {
                                line: lineno,
                                message: format!("bad vertex coordinate `{tok}`"),
                            },
                        )?;
                    }
                    vertices.push(Vector3::from(xyz));
                }
                Some("f") => {
                    face.clear();
                    for tok in tokens {
                        face.push(resolve_index(tok, vertices.len(), lineno)?);
                    }
                    if face.len() < 3 {
                        return Err(Error::Parse {
                            line: lineno,
                            message: format!("face has {} vertices", face.len()),
                        });
                    }
                    for k in 1..face.len() - 1 {
                        triangles.push([face[0], face[k], face[k + 1]]);
                    }
                }
                _ => {}
            }
        }
        Ok(TriangleMesh {
            vertices,
            triangles,
        })
    }

    pub fn load_obj_file(path: impl AsRef<Path>) -> Result<TriangleMesh> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::load_obj(std::io::BufReader::new(file))
    }

    /// Writes `v`/`f` records. Coordinates use the shortest representation
    /// that parses back to the same `f64`.
    pub fn write_obj<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for v in &self.vertices {
            writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
        }
        for t in &self.triangles {
            writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
        }
        Ok(())
    }
}

fn resolve_index(tok: &str, n_vertices: usize, line: usize) -> Result<u32> {
    let head = tok.split('/').next().unwrap_or("");
    let raw: i64 = head.parse().map_err(|_| Error::Parse {
        line,
        message: format!("bad face index `{tok}`"),
    })?;
    let n = n_vertices as i64;
    let idx = match raw {
        r if r > 0 => r - 1,
        r if r < 0 => n + r,
        _ => -1,
    };
    if idx < 0 || idx >= n {
        return Err(Error::Parse {
            line,
            message: format!("face index {raw} out of range for {n} vertices"),
        });
    }
    Ok(idx as u32)
}
