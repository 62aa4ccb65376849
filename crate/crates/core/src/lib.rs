//! Full-perspective pose annotation and refinement.
//!
//! - [`camera`]: the seven-parameter pose (azimuth, elevation, in-plane
//!   rotation, depth, focal length, principal point) and projection.
//! - [`mesh`]: triangle meshes read from OBJ.
//! - [`raster`]: binary silhouettes with a deterministic fill rule.
//! - [`segmentation`]: IoU and choice of the reference mask.
//! - [`refine`]: greedy coordinate search maximizing silhouette IoU.
//! - [`records`]: annotation records and dataset splits.
//! - [`eval`]: IoU reports, histograms and the synthetic recovery benchmark.

pub mod camera;
pub mod error;
pub mod eval;
pub mod io;
pub mod mesh;
pub mod raster;
pub mod records;
pub mod refine;
pub mod segmentation;

pub use camera::{
    project_point, project_points, rotation_from_angles, Camera, Intrinsics, PoseParam, PoseParams,
    ProjectedPoint, ProjectionMatrix, RotationMatrix,
};
pub use error::{Error, Result};
pub use eval::{
    iou_report, run_synthetic_benchmark, BenchmarkSpec, HistogramSpec, IoUReport, PerturbationRanges,
    SceneSampler, SyntheticTrial,
};
pub use mesh::TriangleMesh;
pub use raster::{render_silhouette, BinaryMask};
pub use records::{AnnotationRecord, SplitManifest, Stage};
pub use refine::{objective, refine, RefineResult, RefinerConfig};
pub use segmentation::{iou, select_reference, ReferenceSet};
