//! Iterative local pose search.
//!
//! Greedy coordinate ascent on `J(p) = IoU(render(p), reference)`. Each sweep
//! visits the parameters in the fixed order `(a, e, θ, d, f, u, v)`; for each
//! one it renders `p ± α·ε_i` and moves to the best of
//! `{current, plus, minus}`, keeping the current pose on ties and preferring
//! `plus` over `minus` on ties. Moves take effect immediately, so later
//! parameters in the same sweep start from the updated pose. A sweep that
//! leaves the IoU unchanged halves `α`; the search has converged once
//! `α <= alpha_threshold`.

use serde::{Deserialize, Serialize};

use crate::camera::{PoseParam, PoseParams};
use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::raster::{render_into, BinaryMask};
use crate::segmentation::iou;

/// Number of candidate poses evaluated per sweep (two per parameter).
pub const CANDIDATES_PER_SWEEP: u64 = 2 * PoseParam::ALL.len() as u64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinerConfig {
    /// Update unit per parameter, in sweep order: degrees for the three
    /// angles, world units for depth, pixels for focal and principal point.
    pub epsilon: [f64; 7],
    pub alpha0: f64,
    pub alpha_threshold: f64,
    pub max_sweeps: u32,
}

impl RefinerConfig {
    /// Default units with depth and focal steps at 2% of the starting values.
    pub fn for_pose(initial: &PoseParams) -> Self {
        RefinerConfig {
            epsilon: [
                1.0,
                1.0,
                1.0,
                0.02 * initial.depth,
                0.02 * initial.focal,
                2.0,
                2.0,
            ],
            alpha0: 4.0,
            alpha_threshold: 0.125,
            max_sweeps: 50,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self.epsilon.iter().position(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "epsilon for {} must be positive",
                PoseParam::ALL[i].field_name()
            )));
        }
        if !(self.alpha_threshold > 0.0 && self.alpha_threshold < self.alpha0 && self.alpha0.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < alpha_threshold < alpha0, got {} and {}",
                self.alpha_threshold, self.alpha0
            )));
        }
        if self.max_sweeps == 0 {
            return Err(Error::InvalidParameter("max_sweeps must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of consecutive non-improving sweeps that ends the search:
    /// `⌈log₂(alpha0 / alpha_threshold)⌉`.
    pub fn halvings_to_converge(&self) -> u32 {
        let mut alpha = self.alpha0;
        let mut n = 0;
        while alpha > self.alpha_threshold {
            alpha /= 2.0;
            n += 1;
        }
        n
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineResult {
    pub pose: PoseParams,
    pub iou_initial: f64,
    pub iou_final: f64,
    pub sweeps: u32,
    /// `(sweep, iou)` after each sweep, starting with `(0, iou_initial)`.
    pub trajectory: Vec<(u32, f64)>,
    pub converged: bool,
    /// Candidate poses considered, including rejected invalid ones.
    pub evaluations: u64,
    /// Step scale of the last sweep performed.
    pub final_alpha: f64,
}

/// Renders masks at a fixed reference resolution and scores them.
pub struct Objective<'a> {
    mesh: &'a TriangleMesh,
    reference: &'a BinaryMask,
}

impl<'a> Objective<'a> {
    pub fn new(mesh: &'a TriangleMesh, reference: &'a BinaryMask) -> Self {
        Objective { mesh, reference }
    }

    /// IoU of the render at `pose`, and whether that render was empty.
    fn score(&self, pose: &PoseParams, scratch: &mut BinaryMask) -> Result<(f64, bool)> {
        render_into(self.mesh, pose, scratch)?;
        Ok((iou(scratch, self.reference)?, scratch.is_empty()))
    }

    pub fn evaluate(&self, pose: &PoseParams) -> Result<f64> {
        let mut scratch = BinaryMask::new(self.reference.width(), self.reference.height())?;
        Ok(self.score(pose, &mut scratch)?.0)
    }
}

/// `IoU(render(pose), reference)` at the reference's resolution.
pub fn objective(mesh: &TriangleMesh, pose: &PoseParams, reference: &BinaryMask) -> Result<f64> {
    Objective::new(mesh, reference).evaluate(pose)
}

/// Applies a step to one parameter. Returns `None` when the result leaves the
/// valid domain (non-positive depth or focal, elevation beyond ±90°).
pub fn step_candidate(pose: &PoseParams, param: PoseParam, delta: f64) -> Option<PoseParams> {
    let raw = pose.with(param, pose.get(param) + delta);
    if !(-90.0..=90.0).contains(&raw.elevation_deg) {
        return None;
    }
    raw.normalized().ok()
}

enum Candidate {
    Rejected,
    Scored { pose: PoseParams, iou: f64, empty: bool },
}

impl Candidate {
    fn iou(&self) -> f64 {
        match self {
            Candidate::Rejected => f64::NEG_INFINITY,
            Candidate::Scored { iou, .. } => *iou,
        }
    }
}

pub fn refine(
    mesh: &TriangleMesh,
    initial: &PoseParams,
    reference: &BinaryMask,
    config: &RefinerConfig,
) -> Result<RefineResult> {
    config.validate()?;
    let initial = initial.normalized()?;
    if reference.is_empty() {
        return Err(Error::NoReference);
    }
    let objective = Objective::new(mesh, reference);
    let (w, h) = reference.dims();
    let mut scratch_plus = BinaryMask::new(w, h)?;
    let mut scratch_minus = BinaryMask::new(w, h)?;

    let mut pose = initial;
    let (mut iou, initial_empty) = objective.score(&pose, &mut scratch_plus)?;
    let iou_initial = iou;
    let mut alpha = config.alpha0;
    let mut final_alpha = alpha;
    let mut trajectory = vec![(0, iou)];
    let mut sweeps = 0;
    let mut evaluations = 0;
    let mut converged = false;
    let mut saw_nonempty = !initial_empty;

    let eval = |pose: &PoseParams, param, delta, scratch: &mut BinaryMask| -> Result<Candidate> {
        Ok(match step_candidate(pose, param, delta) {
            None => Candidate::Rejected,
            Some(c) => {
                let (iou, empty) = objective.score(&c, scratch)?;
                Candidate::Scored {
                    pose: c,
                    iou,
                    empty,
                }
            }
        })
    };

    while sweeps < config.max_sweeps {
        let iou_last = iou;
        for param in PoseParam::ALL {
            let step = alpha * config.epsilon[param.index()];
            let snapshot = pose;
            let (plus, minus) = rayon::join(
                || eval(&snapshot, param, step, &mut scratch_plus),
                || eval(&snapshot, param, -step, &mut scratch_minus),
            );
            let (plus, minus) = (plus?, minus?);
            evaluations += CANDIDATES_PER_SWEEP / PoseParam::ALL.len() as u64;

            if sweeps == 0 {
                for c in [&plus, &minus] {
                    if let Candidate::Scored { empty: false, .. } = c {
                        saw_nonempty = true;
                    }
                }
            }

            let chosen = if plus.iou() > iou && plus.iou() >= minus.iou() {
                Some(plus)
            } else if minus.iou() > iou {
                Some(minus)
            } else {
                None
            };
            if let Some(Candidate::Scored { pose: p, iou: v, .. }) = chosen {
                pose = p;
                iou = v;
            }
        }
        sweeps += 1;
        final_alpha = alpha;
        trajectory.push((sweeps, iou));

        if sweeps == 1 && !saw_nonempty {
            return Err(Error::DegenerateInitialization);
        }
        if iou == iou_last {
            alpha /= 2.0;
            if alpha <= config.alpha_threshold {
                converged = true;
                break;
            }
        }
    }

    Ok(RefineResult {
        pose,
        iou_initial,
        iou_final: iou,
        sweeps,
        trajectory,
        converged,
        evaluations,
        final_alpha,
    })
}
