//! Annotation records and train/test split manifests.
//!
//! Records are stored as JSON objects (one per file, or one per line in a
//! `.jsonl` corpus). Floating-point fields are written with the shortest
//! representation that reads back to the identical `f64`.

use std::collections::HashSet;
use std::io::BufRead;
use std::path::Path;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::PoseParams;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Human,
    Refined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub image_id: String,
    pub image_width: u32,
    pub image_height: u32,
    pub category: String,
    pub model_path: String,
    pub pose: PoseParams,
    pub stage: Stage,
    pub iou_vs_reference: Option<f64>,
    pub timestamp: DateTime<Utc>,
    pub schema_version: u32,
}

impl AnnotationRecord {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::UnknownSchemaVersion(self.schema_version));
        }
        self.pose
            .validate()
            .map_err(|e| Error::InvalidRecord(format!("{}: {e}", self.image_id)))?;
        if let Some(v) = self.iou_vs_reference {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidRecord(format!(
                    "{}: iou_vs_reference {v} outside [0, 1]",
                    self.image_id
                )));
            }
        }
        if self.image_width == 0 || self.image_height == 0 {
            return Err(Error::InvalidRecord(format!(
                "{}: image dimensions must be positive",
                self.image_id
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        self.validate()?;
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        // read the version first so an unknown schema is reported as such
        // rather than as a missing or mistyped field
        #[derive(Deserialize)]
        struct Version {
            schema_version: u32,
        }
        let v: Version = serde_json::from_str(text)?;
        if v.schema_version != SCHEMA_VERSION {
            return Err(Error::UnknownSchemaVersion(v.schema_version));
        }
        let rec: AnnotationRecord = serde_json::from_str(text)?;
        rec.validate()?;
        Ok(rec)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.validate()?;
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        crate::io::write_atomic(path.as_ref(), text.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Reads a JSON-lines corpus, skipping blank lines.
pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<AnnotationRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("<line {}>", i + 1), e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            AnnotationRecord::from_json(&line)
                .map_err(|e| Error::InvalidRecord(format!("line {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_jsonl(std::io::BufReader::new(file))
}

pub fn write_jsonl(records: &[AnnotationRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_json()?);
        out.push('\n');
    }
    Ok(out)
}

pub fn save_jsonl(path: impl AsRef<Path>, records: &[AnnotationRecord]) -> Result<()> {
    crate::io::write_atomic(path.as_ref(), write_jsonl(records)?.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub dataset_name: String,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl SplitManifest {
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for id in self.train.iter().chain(&self.test) {
            if !seen.insert(id) {
                return Err(Error::InvalidSplit(format!("id `{id}` appears twice")));
            }
        }
        Ok(())
    }
}

/// Training-set size for a fraction of `n` items: `⌈fraction·n⌉`, with a
/// small tolerance so that products that are integral up to rounding are not
/// bumped up.
pub fn train_count_for(n: usize, fraction: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidSplit(format!(
            "train fraction {fraction} outside [0, 1]"
        )));
    }
    let exact = fraction * n as f64;
    Ok(((exact - 1e-9).ceil().max(0.0) as usize).min(n))
}

/// Shuffles `ids` with a seeded generator and takes the first `train_count`
/// as the training set. Both halves keep the shuffled order.
pub fn random_split_count(
    dataset_name: &str,
    ids: &[String],
    train_count: usize,
    seed: u64,
) -> Result<SplitManifest> {
    if train_count > ids.len() {
        return Err(Error::InvalidSplit(format!(
            "train count {train_count} exceeds {} ids",
            ids.len()
        )));
    }
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = shuffled.split_off(train_count);
    let manifest = SplitManifest {
        dataset_name: dataset_name.to_string(),
        train: shuffled,
        test,
    };
    manifest.validate()?;
    Ok(manifest)
}

pub fn random_split(
    dataset_name: &str,
    ids: &[String],
    train_fraction: f64,
    seed: u64,
) -> Result<SplitManifest> {
    let n = train_count_for(ids.len(), train_fraction)?;
    random_split_count(dataset_name, ids, n, seed)
}
