use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use chrono::{DateTime, TimeZone, Utc};
use clap::{Args, Subcommand};
use poseref_core::eval::{self, summarize, EvalItem};
use poseref_core::records::{self, Stage};
use poseref_core::{
    io::write_atomic, refine, render_silhouette, select_reference, AnnotationRecord, BenchmarkSpec,
    BinaryMask, PoseParam, PoseParams, ReferenceSet, RefinerConfig, TriangleMesh,
};
use serde::Serialize;

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a mesh silhouette to a PNG mask.
    Render(RenderArgs),
    /// Refine an annotation against a segmentation reference.
    Refine(RefineArgs),
    /// Mean ± std IoU of a record corpus against its reference masks.
    Eval(EvalArgs),
    /// Histogram of one pose parameter over a record corpus (CSV).
    Stats(StatsArgs),
    /// Seeded synthetic perturbation-recovery benchmark.
    Synth(SynthArgs),
    /// Seeded train/test split of a list of image ids.
    Split(SplitArgs),
    /// Serve the annotation session API over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    /// Pose as inline JSON or a path to a JSON file.
    #[arg(long, conflicts_with = "record", required_unless_present = "record")]
    pub pose: Option<String>,
    /// Take the pose (and default image size) from an annotation record.
    #[arg(long)]
    pub record: Option<PathBuf>,
    #[arg(long)]
    pub width: Option<u32>,
    #[arg(long)]
    pub height: Option<u32>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub record: PathBuf,
    /// Semantic segmentation mask (nonzero pixels are foreground).
    #[arg(long)]
    pub reference: PathBuf,
    /// JSON listing instance masks and their confidences.
    #[arg(long)]
    pub instances: Option<PathBuf>,
    /// Refiner settings JSON (epsilon, alpha0, alpha_threshold, max_sweeps).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Refined record; the trajectory goes to `<out>.trajectory.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// JSON-lines record corpus.
    #[arg(long)]
    pub records: PathBuf,
    /// Directory holding `<image_id>.png` reference masks
    /// [default: `masks/` next to the records file].
    #[arg(long)]
    pub masks: Option<PathBuf>,
    /// Report path; a `.csv` extension writes `image_id,iou` rows instead of JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long)]
    pub param: String,
    #[arg(long, default_value_t = 36)]
    pub bins: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 320)]
    pub width: u32,
    #[arg(long, default_value_t = 240)]
    pub height: u32,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Text file with one image id per line.
    #[arg(long)]
    pub ids: PathBuf,
    #[arg(long, conflicts_with = "train_count", required_unless_present = "train_count")]
    pub fraction: Option<f64>,
    #[arg(long)]
    pub train_count: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Dataset name [default: the ids file stem].
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = crate::service::DEFAULT_PORT)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Where saved records are written.
    #[arg(long, default_value = ".")]
    pub data_dir: PathBuf,
}

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Render(a) => render(a),
        Command::Refine(a) => refine_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Stats(a) => stats(a),
        Command::Synth(a) => synth(a),
        Command::Split(a) => split(a),
        Command::Serve(a) => crate::service::serve(a),
    }
}

/// Record timestamps honor `SOURCE_DATE_EPOCH` so reruns can be byte-identical.
pub fn now() -> DateTime<Utc> {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|secs| Utc.timestamp_opt(secs, 0).single())
        .unwrap_or_else(Utc::now)
}

fn load_mesh(path: &Path) -> Result<TriangleMesh> {
    TriangleMesh::load_obj_file(path).with_context(|| format!("loading mesh {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn parse_pose(arg: &str) -> Result<PoseParams> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg).with_context(|| format!("reading pose {arg}"))?
    };
    let pose: PoseParams = serde_json::from_str(&text).context("parsing pose JSON")?;
    Ok(pose.normalized()?)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes())?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn to_json_line<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn render(a: RenderArgs) -> Result<()> {
    let mesh = load_mesh(&a.mesh)?;
    let (pose, dims) = match (&a.pose, &a.record) {
        (Some(p), _) => (parse_pose(p)?, None),
        (None, Some(r)) => {
            let rec = AnnotationRecord::load(r)?;
            (rec.pose, Some((rec.image_width, rec.image_height)))
        }
        (None, None) => bail!("either --pose or --record is required"),
    };
    let (width, height) = match (a.width, a.height, dims) {
        (Some(w), Some(h), _) => (w, h),
        (w, h, Some((rw, rh))) => (w.unwrap_or(rw), h.unwrap_or(rh)),
        _ => bail!("--width and --height are required with --pose"),
    };
    let mask = render_silhouette(&mesh, &pose, width, height)?;
    mask.write_png(&a.out)?;
    eprintln!("{}x{} silhouette, {} pixels set", width, height, mask.area());
    Ok(())
}

pub fn trajectory_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".trajectory.json");
    PathBuf::from(s)
}

fn refine_cmd(a: RefineArgs) -> Result<()> {
    let mesh = load_mesh(&a.mesh)?;
    let record = AnnotationRecord::load(&a.record)?;
    let refs = ReferenceSet::load(Some(&a.reference), a.instances.as_deref())?;
    let (w, h) = refs.dims();
    let initial_render = render_silhouette(&mesh, &record.pose, w, h)?;
    let reference = select_reference(&refs, &initial_render)?;
    let config = match &a.config {
        Some(p) => read_json::<RefinerConfig>(p)?,
        None => RefinerConfig::for_pose(&record.pose),
    };
    let result = refine(&mesh, &record.pose, reference, &config)?;

    let refined = AnnotationRecord {
        pose: result.pose,
        stage: Stage::Refined,
        iou_vs_reference: Some(result.iou_final),
        timestamp: now(),
        ..record
    };
    refined.save(&a.out)?;
    write_atomic(&trajectory_path(&a.out), to_json_line(&result)?.as_bytes())?;
    eprintln!(
        "{}: IoU {:.4} -> {:.4} in {} sweeps{}",
        refined.image_id,
        result.iou_initial,
        result.iou_final,
        result.sweeps,
        if result.converged { "" } else { " (sweep cap reached)" }
    );
    Ok(())
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let recs = records::load_jsonl(&a.records)?;
    let base = a.records.parent().unwrap_or(Path::new(".")).to_path_buf();
    let masks_dir = a.masks.clone().unwrap_or_else(|| base.join("masks"));

    let mut meshes: HashMap<PathBuf, Arc<TriangleMesh>> = HashMap::new();
    let mut loaded = Vec::with_capacity(recs.len());
    for r in &recs {
        let mesh_path = resolve(&base, &r.model_path);
        let mesh = match meshes.get(&mesh_path) {
            Some(m) => m.clone(),
            None => {
                let m = Arc::new(load_mesh(&mesh_path)?);
                meshes.insert(mesh_path, m.clone());
                m
            }
        };
        let mask_path = masks_dir.join(format!("{}.png", r.image_id));
        let reference = BinaryMask::read_png(&mask_path)
            .with_context(|| format!("reference mask for {}", r.image_id))?;
        loaded.push((r, mesh, reference));
    }
    let items: Vec<EvalItem<'_>> = loaded
        .iter()
        .map(|(r, mesh, reference)| EvalItem {
            image_id: r.image_id.clone(),
            mesh,
            pose: r.pose,
            reference,
        })
        .collect();
    let report = eval::iou_report(&items)?;
    let text = if a.out.extension().is_some_and(|e| e == "csv") {
        report.to_csv()?
    } else {
        to_json_line(&report)?
    };
    write_atomic(&a.out, text.as_bytes())?;
    eprintln!("{} images: IoU {}", report.n, report.summary());
    Ok(())
}

fn stats(a: StatsArgs) -> Result<()> {
    let recs = records::load_jsonl(&a.records)?;
    let param: PoseParam = a.param.parse()?;
    let h = eval::histogram(&recs, param, a.bins)?;
    emit(a.out.as_deref(), &h.to_csv()?)
}

#[derive(Serialize)]
struct SynthReport<'a> {
    seed: u64,
    spec: &'a BenchmarkSpec,
    summary: eval::BenchmarkSummary,
    trials: &'a [poseref_core::SyntheticTrial],
}

fn synth(a: SynthArgs) -> Result<()> {
    let mesh = load_mesh(&a.mesh)?;
    let mut spec = BenchmarkSpec::new(a.trials, a.width, a.height);
    if let Some(p) = &a.config {
        spec.config = Some(read_json(p)?);
    }
    let trials = poseref_core::run_synthetic_benchmark(&mesh, &spec, a.seed)?;
    let summary = summarize(&trials);
    eprintln!(
        "{} trials: IoU {:.1}% -> {:.1}%, {} reached {:.2}",
        summary.n,
        100.0 * summary.mean_initial,
        100.0 * summary.mean_final,
        summary.recovered,
        eval::RECOVERY_IOU
    );
    let report = SynthReport {
        seed: a.seed,
        spec: &spec,
        summary,
        trials: &trials,
    };
    emit(a.out.as_deref(), &to_json_line(&report)?)
}

fn split(a: SplitArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.ids).with_context(|| format!("reading {}", a.ids.display()))?;
    let ids: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    let name = a.name.clone().unwrap_or_else(|| {
        a.ids
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    let manifest = match (a.train_count, a.fraction) {
        (Some(n), _) => records::random_split_count(&name, &ids, n, a.seed)?,
        (None, Some(f)) => records::random_split(&name, &ids, f, a.seed)?,
        (None, None) => bail!("either --fraction or --train-count is required"),
    };
    eprintln!(
        "{}: {} train / {} test",
        manifest.dataset_name,
        manifest.train.len(),
        manifest.test.len()
    );
    emit(a.out.as_deref(), &to_json_line(&manifest)?)
}
