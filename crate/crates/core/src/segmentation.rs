//! Reference masks and the IoU objective.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::BinaryMask;

/// Below this IoU with the initial render an instance mask is taken to belong
/// to a different object.
pub const INSTANCE_IOU_THRESHOLD: f64 = 0.25;

/// Intersection over union. Two empty masks give 0.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    let (inter, union) = a.overlap_counts(b)?;
    Ok(if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMask {
    pub mask: BinaryMask,
    pub confidence: f64,
}

/// Candidate segmentation references for one image: an optional semantic
/// (class-level) mask plus any number of scored instance masks.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSet {
    semantic: Option<BinaryMask>,
    instances: Vec<InstanceMask>,
}

impl ReferenceSet {
    pub fn new(semantic: Option<BinaryMask>, instances: Vec<InstanceMask>) -> Result<Self> {
        let mut dims = semantic.as_ref().map(BinaryMask::dims);
        for inst in &instances {
            if !(0.0..=1.0).contains(&inst.confidence) {
                return Err(Error::InvalidParameter(format!(
                    "instance confidence {} outside [0, 1]",
                    inst.confidence
                )));
            }
            match dims {
                Some(d) if d != inst.mask.dims() => {
                    return Err(Error::DimensionMismatch {
                        a: d,
                        b: inst.mask.dims(),
                    })
                }
                _ => dims = Some(inst.mask.dims()),
            }
        }
        if dims.is_none() {
            return Err(Error::NoReference);
        }
        Ok(ReferenceSet {
            semantic,
            instances,
        })
    }

    pub fn semantic(&self) -> Option<&BinaryMask> {
        self.semantic.as_ref()
    }

    pub fn instances(&self) -> &[InstanceMask] {
        &self.instances
    }

    pub fn dims(&self) -> (u32, u32) {
        self.semantic
            .as_ref()
            .or(self.instances.first().map(|i| &i.mask))
            .map(BinaryMask::dims)
            .expect("constructor guarantees at least one mask")
    }

    /// Loads a semantic mask PNG and/or an instance sidecar. Sidecar file
    /// names are resolved relative to the sidecar's directory.
    pub fn load(semantic_png: Option<&Path>, sidecar: Option<&Path>) -> Result<Self> {
        let semantic = semantic_png.map(BinaryMask::read_png).transpose()?;
        let mut instances = Vec::new();
        if let Some(path) = sidecar {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let listing: InstanceSidecar = serde_json::from_str(&text)?;
            let base = path.parent().unwrap_or(Path::new("."));
            for entry in listing.instances {
                instances.push(InstanceMask {
                    mask: BinaryMask::read_png(base.join(&entry.file))?,
                    confidence: entry.confidence,
                });
            }
        }
        Self::new(semantic, instances)
    }
}

/// JSON listing of instance masks:
/// `{"instances": [{"file": "car_0.png", "confidence": 0.97}, ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSidecar {
    pub instances: Vec<InstanceEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceEntry {
    pub file: String,
    pub confidence: f64,
}

/// Picks the reference to refine against.
///
/// The best-overlapping instance mask wins when its IoU with `initial_render`
/// reaches [`INSTANCE_IOU_THRESHOLD`]; otherwise the semantic mask is used if
/// there is one, and failing that the best instance anyway. Empty masks are
/// never returned. Instance ties go to the larger mask, then to the earlier
/// one.
pub fn select_reference<'a>(
    refs: &'a ReferenceSet,
    initial_render: &BinaryMask,
) -> Result<&'a BinaryMask> {
    if refs.dims() != initial_render.dims() {
        return Err(Error::DimensionMismatch {
            a: refs.dims(),
            b: initial_render.dims(),
        });
    }
    let mut best: Option<(f64, u64, &BinaryMask)> = None;
    for inst in &refs.instances {
        let area = inst.mask.area();
        if area == 0 {
            continue;
        }
        let score = iou(&inst.mask, initial_render)?;
        let better = match best {
            None => true,
            Some((s, a, _)) => score > s || (score == s && area > a),
        };
        if better {
            best = Some((score, area, &inst.mask));
        }
    }
    let semantic = refs.semantic.as_ref().filter(|m| !m.is_empty());
    match (best, semantic) {
        (Some((score, _, m)), _) if score >= INSTANCE_IOU_THRESHOLD => Ok(m),
        (_, Some(s)) => Ok(s),
        (Some((_, _, m)), None) => Ok(m),
        (None, None) => Err(Error::NoReference),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(w: u32, h: u32, x0: u32, y0: u32, rw: u32, rh: u32) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| {
            (x0..x0 + rw).contains(&x) && (y0..y0 + rh).contains(&y)
        })
        .unwrap()
    }

    fn inst(mask: BinaryMask) -> InstanceMask {
        InstanceMask {
            mask,
            confidence: 0.9,
        }
    }

    #[test]
    fn iou_cases() {
        let a = rect(32, 32, 0, 0, 10, 10);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &rect(32, 32, 20, 20, 5, 5)).unwrap(), 0.0);
        let b = rect(32, 32, 5, 0, 10, 10);
        assert_eq!(iou(&a, &b).unwrap(), 50.0 / 150.0);
        let empty = BinaryMask::new(32, 32).unwrap();
        assert_eq!(iou(&empty, &empty).unwrap(), 0.0);
        assert!(matches!(
            iou(&a, &BinaryMask::new(31, 32).unwrap()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn single_instance_is_returned() {
        let m = rect(20, 20, 2, 2, 5, 5);
        let refs = ReferenceSet::new(None, vec![inst(m.clone())]).unwrap();
        let render = rect(20, 20, 10, 10, 5, 5);
        assert_eq!(select_reference(&refs, &render).unwrap(), &m);
    }

    #[test]
    fn overlapping_instance_beats_disjoint_one() {
        let render = rect(40, 40, 5, 5, 10, 10);
        let far = rect(40, 40, 25, 25, 10, 10);
        let near = rect(40, 40, 6, 5, 10, 10);
        let refs = ReferenceSet::new(None, vec![inst(far), inst(near.clone())]).unwrap();
        assert_eq!(select_reference(&refs, &render).unwrap(), &near);
    }

    #[test]
    fn weak_instances_fall_back_to_semantic() {
        // render 10x10 at (0,0); instance 10x10 at (8,0) overlaps by 20 px,
        // union 180 → IoU 1/9 < 0.25; another instance disjoint.
        let render = rect(40, 40, 0, 0, 10, 10);
        let i1 = rect(40, 40, 8, 0, 10, 10);
        let i2 = rect(40, 40, 30, 30, 5, 5);
        assert_eq!(iou(&i1, &render).unwrap(), 20.0 / 180.0);
        let semantic = rect(40, 40, 0, 0, 12, 12);
        let refs = ReferenceSet::new(Some(semantic.clone()), vec![inst(i1.clone()), inst(i2)]).unwrap();
        assert_eq!(select_reference(&refs, &render).unwrap(), &semantic);

        // without a semantic mask the best instance is used anyway
        let refs = ReferenceSet::new(None, vec![inst(i1.clone())]).unwrap();
        assert_eq!(select_reference(&refs, &render).unwrap(), &i1);
    }

    #[test]
    fn threshold_is_inclusive() {
        // 10x10 at the origin vs 10x10 at (6,0): inter 40, union 160 → 0.25
        let render = rect(40, 40, 0, 0, 10, 10);
        let edge = rect(40, 40, 6, 0, 10, 10);
        assert_eq!(iou(&edge, &render).unwrap(), 0.25);
        let semantic = rect(40, 40, 0, 0, 12, 12);
        let refs = ReferenceSet::new(Some(semantic), vec![inst(edge.clone())]).unwrap();
        assert_eq!(select_reference(&refs, &render).unwrap(), &edge);
    }

    #[test]
    fn ties_prefer_larger_then_first() {
        let render = BinaryMask::new(20, 20).unwrap();
        let small = rect(20, 20, 0, 0, 2, 2);
        let big = rect(20, 20, 10, 10, 4, 4);
        let refs = ReferenceSet::new(None, vec![inst(small.clone()), inst(big.clone())]).unwrap();
        assert_eq!(select_reference(&refs, &render).unwrap(), &big);
        let refs = ReferenceSet::new(None, vec![inst(big.clone()), inst(small)]).unwrap();
        assert_eq!(select_reference(&refs, &render).unwrap(), &big);
    }

    #[test]
    fn empty_candidates_are_never_returned() {
        let render = rect(10, 10, 0, 0, 3, 3);
        let empty = BinaryMask::new(10, 10).unwrap();
        let refs = ReferenceSet::new(Some(empty.clone()), vec![inst(empty.clone())]).unwrap();
        assert!(matches!(
            select_reference(&refs, &render),
            Err(Error::NoReference)
        ));
        let good = rect(10, 10, 5, 5, 2, 2);
        let refs = ReferenceSet::new(Some(empty.clone()), vec![inst(empty), inst(good.clone())]).unwrap();
        assert_eq!(select_reference(&refs, &render).unwrap(), &good);
    }

    #[test]
    fn construction_errors() {
        assert!(matches!(ReferenceSet::new(None, vec![]), Err(Error::NoReference)));
        let a = BinaryMask::new(10, 10).unwrap();
        let b = BinaryMask::new(10, 11).unwrap();
        assert!(ReferenceSet::new(Some(a.clone()), vec![inst(b)]).is_err());
        let bad = InstanceMask {
            mask: a,
            confidence: 1.5,
        };
        assert!(ReferenceSet::new(None, vec![bad]).is_err());
    }

    #[test]
    fn loads_sidecar_relative_to_its_directory() {
        let dir = tempfile::tempdir().unwrap();
        let m0 = rect(16, 16, 1, 1, 4, 4);
        let m1 = rect(16, 16, 8, 8, 4, 4);
        m0.write_png(dir.path().join("i0.png")).unwrap();
        m1.write_png(dir.path().join("i1.png")).unwrap();
        let sidecar = InstanceSidecar {
            instances: vec![
                InstanceEntry {
                    file: "i0.png".into(),
                    confidence: 0.8,
                },
                InstanceEntry {
                    file: "i1.png".into(),
                    confidence: 0.6,
                },
            ],
        };
        let path = dir.path().join("instances.json");
        std::fs::write(&path, serde_json::to_vec(&sidecar).unwrap()).unwrap();
        let refs = ReferenceSet::load(None, Some(&path)).unwrap();
        assert_eq!(refs.instances().len(), 2);
        assert_eq!(refs.instances()[1].mask, m1);
        assert_eq!(refs.instances()[0].confidence, 0.8);
    }
}
