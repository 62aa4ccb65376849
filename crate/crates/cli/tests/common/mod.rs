#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::DateTime;
use poseref_core::records::SCHEMA_VERSION;
use poseref_core::{render_silhouette, AnnotationRecord, PoseParams, Stage, TriangleMesh};

pub fn car_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/car.obj")
}

pub fn car() -> TriangleMesh {
    TriangleMesh::load_obj_file(car_path()).unwrap()
}

pub fn car_pose(w: u32, h: u32) -> PoseParams {
    PoseParams::new(35.0, 15.0, 2.0, 3.0, 1.4 * w as f64, w as f64 / 2.0, h as f64 / 2.0).unwrap()
}

pub fn poseref(args: &[&str]) -> Output {
    poseref_env(args, &[])
}

pub fn poseref_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_poseref"));
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn poseref")
}

pub fn record(image_id: &str, pose: PoseParams, w: u32, h: u32) -> AnnotationRecord {
    AnnotationRecord {
        image_id: image_id.into(),
        image_width: w,
        image_height: h,
        category: "car".into(),
        model_path: car_path().to_string_lossy().into_owned(),
        pose,
        stage: Stage::Human,
        iou_vs_reference: None,
        timestamp: DateTime::from_timestamp(1_700_000_000, 0).unwrap(),
        schema_version: SCHEMA_VERSION,
    }
}

/// Writes `<dir>/<name>.json` and a self-rendered reference `<dir>/<name>.png`.
pub fn self_render_fixture(dir: &Path, name: &str, pose: PoseParams, w: u32, h: u32) -> (PathBuf, PathBuf) {
    let rec = dir.join(format!("{name}.json"));
    let png = dir.join(format!("{name}.png"));
    record(name, pose, w, h).save(&rec).unwrap();
    render_silhouette(&car(), &pose, w, h).unwrap().write_png(&png).unwrap();
    (rec, png)
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
