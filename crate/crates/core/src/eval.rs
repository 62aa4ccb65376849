//! Evaluation: IoU reports, per-parameter histograms and the synthetic
//! perturbation-recovery benchmark.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{PoseParam, PoseParams};
use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::raster::{render_silhouette, BinaryMask};
use crate::records::AnnotationRecord;
use crate::refine::{objective, refine, RefinerConfig};

/// Mean and population standard deviation of per-image IoU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IoUReport {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub per_item: Vec<(String, f64)>,
}

impl IoUReport {
    pub fn from_items(per_item: Vec<(String, f64)>) -> Self {
        let n = per_item.len();
        let (mean, std) = mean_std(per_item.iter().map(|(_, v)| *v));
        IoUReport {
            n,
            mean,
            std,
            per_item,
        }
    }

    /// `mean ± std` in percent with one decimal, e.g. `90.4% ± 3.3%`.
    pub fn summary(&self) -> String {
        format!("{:.1}% ± {:.1}%", 100.0 * self.mean, 100.0 * self.std)
    }

    /// `image_id,iou` rows with a header line.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["image_id", "iou"])?;
        for (id, v) in &self.per_item {
            w.write_record([id.as_str(), &v.to_string()])?;
        }
        finish_csv(w)
    }
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::io("<csv buffer>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
}

/// Population mean and standard deviation; `(0, 0)` for no samples.
pub fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

/// One image to score: its pose, model and reference mask.
pub struct EvalItem<'a> {
    pub image_id: String,
    pub mesh: &'a TriangleMesh,
    pub pose: PoseParams,
    pub reference: &'a BinaryMask,
}

/// Renders every item at its pose and reports IoU against its reference.
/// Items are scored in parallel; `per_item` keeps input order.
pub fn iou_report(items: &[EvalItem<'_>]) -> Result<IoUReport> {
    let per_item = items
        .par_iter()
        .map(|it| Ok((it.image_id.clone(), objective(it.mesh, &it.pose, it.reference)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(IoUReport::from_items(per_item))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub parameter: PoseParam,
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Set for the three angles, which are drawn as polar plots.
    pub polar: bool,
}

impl HistogramSpec {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `bin_start,bin_end,count` rows with a header line.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["bin_start", "bin_end", "count"])?;
        for (i, c) in self.counts.iter().enumerate() {
            w.write_record([
                self.bin_edges[i].to_string(),
                self.bin_edges[i + 1].to_string(),
                c.to_string(),
            ])?;
        }
        finish_csv(w)
    }
}

/// Equal-width histogram of one pose parameter. Angles use their full domain
/// (`[0, 360)`, `[-90, 90]`, `[-180, 180)`); other parameters span the
/// observed range.
pub fn histogram_values(values: &[f64], parameter: PoseParam, bins: usize) -> Result<HistogramSpec> {
    if bins == 0 {
        return Err(Error::InvalidParameter("histogram needs at least one bin".into()));
    }
    let (lo, hi) = match parameter {
        PoseParam::Azimuth => (0.0, 360.0),
        PoseParam::Elevation => (-90.0, 90.0),
        PoseParam::Inplane => (-180.0, 180.0),
        _ => {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if values.is_empty() {
                (0.0, 1.0)
            } else if lo == hi {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        }
    };
    let width = (hi - lo) / bins as f64;
    let bin_edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0u64; bins];
    for &v in values {
        let k = (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1);
        counts[k] += 1;
    }
    Ok(HistogramSpec {
        parameter,
        bin_edges,
        counts,
        polar: parameter.is_angle(),
    })
}

pub fn histogram(records: &[AnnotationRecord], parameter: PoseParam, bins: usize) -> Result<HistogramSpec> {
    let values: Vec<f64> = records.iter().map(|r| r.pose.get(parameter)).collect();
    histogram_values(&values, parameter, bins)
}

/// Half-widths of the uniform perturbation applied to the true pose. Depth
/// and focal are relative (fractions of the true value); the rest are
/// absolute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationRanges {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub inplane_deg: f64,
    pub depth_rel: f64,
    pub focal_rel: f64,
    pub principal_u: f64,
    pub principal_v: f64,
}

impl Default for PerturbationRanges {
    fn default() -> Self {
        PerturbationRanges {
            azimuth_deg: 5.0,
            elevation_deg: 3.0,
            inplane_deg: 3.0,
            depth_rel: 0.05,
            focal_rel: 0.05,
            principal_u: 10.0,
            principal_v: 10.0,
        }
    }
}

impl PerturbationRanges {
    pub fn zero() -> Self {
        PerturbationRanges {
            azimuth_deg: 0.0,
            elevation_deg: 0.0,
            inplane_deg: 0.0,
            depth_rel: 0.0,
            focal_rel: 0.0,
            principal_u: 0.0,
            principal_v: 0.0,
        }
    }

    fn as_array(&self) -> [f64; 7] {
        [
            self.azimuth_deg,
            self.elevation_deg,
            self.inplane_deg,
            self.depth_rel,
            self.focal_rel,
            self.principal_u,
            self.principal_v,
        ]
    }
}

/// Distribution of ground-truth poses for synthetic trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSampler {
    pub width: u32,
    pub height: u32,
    pub azimuth_deg: (f64, f64),
    pub elevation_deg: (f64, f64),
    pub inplane_deg: (f64, f64),
    pub depth: (f64, f64),
    /// Focal length as a multiple of the image width.
    pub focal_per_width: (f64, f64),
    /// Principal-point offset from the image center, as a fraction of the
    /// image dimensions.
    pub principal_jitter: f64,
}

impl SceneSampler {
    /// Sized for a unit-extent mesh: the object spans roughly half the frame.
    pub fn new(width: u32, height: u32) -> Self {
        SceneSampler {
            width,
            height,
            azimuth_deg: (0.0, 360.0),
            elevation_deg: (0.0, 30.0),
            inplane_deg: (-10.0, 10.0),
            depth: (2.5, 3.5),
            focal_per_width: (1.2, 1.6),
            principal_jitter: 0.05,
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> Result<PoseParams> {
        let (w, h) = (self.width as f64, self.height as f64);
        let j = self.principal_jitter;
        PoseParams::new(
            uniform(rng, self.azimuth_deg),
            uniform(rng, self.elevation_deg),
            uniform(rng, self.inplane_deg),
            uniform(rng, self.depth),
            w * uniform(rng, self.focal_per_width),
            w * (0.5 + uniform(rng, (-j, j))),
            h * (0.5 + uniform(rng, (-j, j))),
        )
    }
}

/// Uniform on `[lo, hi]`. Always consumes exactly one draw, so zero-width
/// ranges keep the stream aligned with non-zero ones.
fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    let t: f64 = rng.random();
    lo + (hi - lo) * t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub n_trials: usize,
    pub scene: SceneSampler,
    pub perturbation: PerturbationRanges,
    /// Fixed refiner settings; `None` uses the defaults scaled to each
    /// trial's starting pose.
    pub config: Option<RefinerConfig>,
}

impl BenchmarkSpec {
    pub fn new(n_trials: usize, width: u32, height: u32) -> Self {
        BenchmarkSpec {
            n_trials,
            scene: SceneSampler::new(width, height),
            perturbation: PerturbationRanges::default(),
            config: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTrial {
    pub index: usize,
    /// Seed of this trial's own generator.
    pub seed: u64,
    pub true_pose: PoseParams,
    /// Additive change applied to each parameter, in parameter units.
    pub perturbation: [f64; 7],
    pub initial_iou: f64,
    pub final_iou: f64,
    pub sweeps: u32,
    pub converged: bool,
    pub refined_pose: PoseParams,
}

/// Per-trial seed: SplitMix64 finalizer over the master seed and index.
pub fn trial_seed(master: u64, index: usize) -> u64 {
    let mut z = master
        .wrapping_add((index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn run_trial(mesh: &TriangleMesh, spec: &BenchmarkSpec, index: usize, seed: u64) -> Result<SyntheticTrial> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = spec.scene.sample(&mut rng)?;
    let ranges = spec.perturbation.as_array();
    let mut unit = [0.0; 7];
    for (u, r) in unit.iter_mut().zip(ranges) {
        *u = uniform(&mut rng, (-r, r));
    }
    let mut perturbation = unit;
    perturbation[PoseParam::Depth.index()] = unit[PoseParam::Depth.index()] * truth.depth;
    perturbation[PoseParam::Focal.index()] = unit[PoseParam::Focal.index()] * truth.focal;

    let t = truth.to_array();
    let mut start = [0.0; 7];
    for i in 0..7 {
        start[i] = t[i] + perturbation[i];
    }
    let initial = PoseParams::from_array(start).normalized()?;

    let reference = render_silhouette(mesh, &truth, spec.scene.width, spec.scene.height)?;
    let config = spec.config.unwrap_or_else(|| RefinerConfig::for_pose(&initial));
    let result = refine(mesh, &initial, &reference, &config)?;
    Ok(SyntheticTrial {
        index,
        seed,
        true_pose: truth,
        perturbation,
        initial_iou: result.iou_initial,
        final_iou: result.iou_final,
        sweeps: result.sweeps,
        converged: result.converged,
        refined_pose: result.pose,
    })
}

/// Runs `spec.n_trials` independent trials. Each trial draws from its own
/// generator seeded by [`trial_seed`], so results do not depend on thread
/// scheduling.
pub fn run_synthetic_benchmark(mesh: &TriangleMesh, spec: &BenchmarkSpec, seed: u64) -> Result<Vec<SyntheticTrial>> {
    (0..spec.n_trials)
        .into_par_iter()
        .map(|i| run_trial(mesh, spec, i, trial_seed(seed, i)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub n: usize,
    pub mean_initial: f64,
    pub std_initial: f64,
    pub mean_final: f64,
    pub std_final: f64,
    pub mean_sweeps: f64,
    /// Trials with `final_iou >= 0.95`.
    pub recovered: usize,
}

pub const RECOVERY_IOU: f64 = 0.95;

pub fn summarize(trials: &[SyntheticTrial]) -> BenchmarkSummary {
    let (mean_initial, std_initial) = mean_std(trials.iter().map(|t| t.initial_iou));
    let (mean_final, std_final) = mean_std(trials.iter().map(|t| t.final_iou));
    let (mean_sweeps, _) = mean_std(trials.iter().map(|t| t.sweeps as f64));
    BenchmarkSummary {
        n: trials.len(),
        mean_initial,
        std_initial,
        mean_final,
        std_final,
        mean_sweeps,
        recovered: trials.iter().filter(|t| t.final_iou >= RECOVERY_IOU).count(),
    }
}
