//! HTTP session API for interactive annotation.
//!
//! | method | path                      | body / query           | response            |
//! |--------|---------------------------|------------------------|---------------------|
//! | POST   | `/sessions`               | [`CreateSession`]      | [`SessionCreated`]  |
//! | GET    | `/sessions/{id}`          |                        | [`SessionView`]     |
//! | GET    | `/sessions/{id}/overlay`  | `?pose=<json>`         | PNG                 |
//! | PUT    | `/sessions/{id}/pose`     | `{"pose": ...}`        | `{"pose": ...}`     |
//! | POST   | `/sessions/{id}/refine`   | `{"config": ...}`      | `RefineResult`      |
//! | POST   | `/sessions/{id}/save`     |                        | `AnnotationRecord`  |
//!
//! Sessions live in memory. Requests on one session are serialized by a
//! per-session lock; different sessions proceed concurrently.

use std::collections::HashMap;
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ImageEncoder, RgbImage};
use poseref_core::records::{AnnotationRecord, Stage, SCHEMA_VERSION};
use poseref_core::{
    refine, render_silhouette, select_reference, BinaryMask, PoseParams, RefineResult, ReferenceSet,
    RefinerConfig, TriangleMesh,
};
use serde::{Deserialize, Serialize};
use tokio::sync::{Mutex, RwLock};

use crate::commands::ServeArgs;

pub const DEFAULT_PORT: u16 = 8750;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("no session `{id}`"))
    }
}

impl From<poseref_core::Error> for ApiError {
    fn from(e: poseref_core::Error) -> Self {
        use poseref_core::Error as E;
        let status = match &e {
            E::InvalidParameter(_) | E::DimensionMismatch { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            E::NoReference => StatusCode::CONFLICT,
            E::DegenerateInitialization => StatusCode::UNPROCESSABLE_ENTITY,
            E::Io { .. } | E::Parse { .. } | E::Image(_) | E::EmptyMesh => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

impl From<tokio::task::JoinError> for ApiError {
    fn from(e: tokio::task::JoinError) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct Session {
    id: String,
    image_path: String,
    image: Arc<RgbImage>,
    mesh_path: String,
    mesh: Arc<TriangleMesh>,
    category: String,
    pose: PoseParams,
    reference: Option<Arc<ReferenceSet>>,
    stage: Stage,
    last_iou: Option<f64>,
    dirty: bool,
}

impl Session {
    fn view(&self) -> SessionView {
        SessionView {
            session_id: self.id.clone(),
            image_path: self.image_path.clone(),
            image_width: self.image.width(),
            image_height: self.image.height(),
            mesh_path: self.mesh_path.clone(),
            category: self.category.clone(),
            pose: self.pose,
            has_reference: self.reference.is_some(),
            stage: self.stage,
            iou_vs_reference: self.last_iou,
            dirty: self.dirty,
        }
    }
}

pub struct AppState {
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    next_id: AtomicU64,
    data_dir: PathBuf,
}

impl AppState {
    pub fn new(data_dir: impl Into<PathBuf>) -> Arc<Self> {
        Arc::new(AppState {
            sessions: RwLock::new(HashMap::new()),
            next_id: AtomicU64::new(1),
            data_dir: data_dir.into(),
        })
    }

    async fn session(&self, id: &str) -> ApiResult<Arc<Mutex<Session>>> {
        self.sessions
            .read()
            .await
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(id))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSession {
    pub image_path: String,
    pub mesh_path: String,
    #[serde(default)]
    pub initial_pose: Option<PoseParams>,
    /// Semantic reference mask (PNG).
    #[serde(default)]
    pub reference_path: Option<String>,
    /// Instance-mask sidecar JSON.
    #[serde(default)]
    pub instances_path: Option<String>,
    #[serde(default)]
    pub category: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub image_width: u32,
    pub image_height: u32,
    pub pose: PoseParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub image_path: String,
    pub image_width: u32,
    pub image_height: u32,
    pub mesh_path: String,
    pub category: String,
    pub pose: PoseParams,
    pub has_reference: bool,
    pub stage: Stage,
    pub iou_vs_reference: Option<f64>,
    pub dirty: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseBody {
    pub pose: PoseParams,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RefineBody {
    #[serde(default)]
    pub config: Option<RefinerConfig>,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/overlay", get(overlay))
        .route("/sessions/{id}/pose", put(put_pose))
        .route("/sessions/{id}/refine", post(refine_session))
        .route("/sessions/{id}/save", post(save_session))
        .with_state(state)
}

/// Starting pose before any human adjustment: model centered in the frame,
/// unrotated, far enough away to be fully visible.
pub fn default_pose(mesh: &TriangleMesh, width: u32, height: u32) -> poseref_core::Result<PoseParams> {
    let extent = mesh.extent()?;
    PoseParams::new(
        0.0,
        0.0,
        0.0,
        3.0 * if extent > 0.0 { extent } else { 1.0 },
        width.max(height) as f64,
        width as f64 / 2.0,
        height as f64 / 2.0,
    )
}

/// Elevation outside ±90° is an error here rather than being clamped.
fn checked_pose(pose: PoseParams) -> ApiResult<PoseParams> {
    if !(-90.0..=90.0).contains(&pose.elevation_deg) {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("elevation {} outside [-90, 90]", pose.elevation_deg),
        ));
    }
    Ok(pose.normalized()?)
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    Json(req): Json<CreateSession>,
) -> ApiResult<(StatusCode, Json<SessionCreated>)> {
    let initial = req.initial_pose.map(checked_pose).transpose()?;
    let req2 = req.clone();
    let (image, mesh, reference) = tokio::task::spawn_blocking(move || -> ApiResult<_> {
        let image = image::open(&req2.image_path)
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("{}: {e}", req2.image_path)))?
            .to_rgb8();
        let mesh = TriangleMesh::load_obj_file(&req2.mesh_path)?;
        let reference = if req2.reference_path.is_some() || req2.instances_path.is_some() {
            let refs = ReferenceSet::load(
                req2.reference_path.as_deref().map(Path::new),
                req2.instances_path.as_deref().map(Path::new),
            )?;
            if refs.dims() != image.dimensions() {
                return Err(ApiError::new(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    format!(
                        "reference is {:?} but the image is {:?}",
                        refs.dims(),
                        image.dimensions()
                    ),
                ));
            }
            Some(Arc::new(refs))
        } else {
            None
        };
        Ok((image, mesh, reference))
    })
    .await??;

    let (w, h) = image.dimensions();
    let pose = match initial {
        Some(p) => p,
        None => default_pose(&mesh, w, h)?,
    };
    let id = format!("s{:06}", state.next_id.fetch_add(1, Ordering::Relaxed));
    let session = Session {
        id: id.clone(),
        image_path: req.image_path,
        image: Arc::new(image),
        mesh_path: req.mesh_path,
        mesh: Arc::new(mesh),
        category: req.category.unwrap_or_default(),
        pose,
        reference,
        stage: Stage::Human,
        last_iou: None,
        dirty: false,
    };
    state
        .sessions
        .write()
        .await
        .insert(id.clone(), Arc::new(Mutex::new(session)));
    Ok((
        StatusCode::CREATED,
        Json(SessionCreated {
            session_id: id,
            image_width: w,
            image_height: h,
            pose,
        }),
    ))
}

async fn get_session(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<SessionView>> {
    let s = state.session(&id).await?;
    let view = s.lock().await.view();
    Ok(Json(view))
}

/// Blends the silhouette over the image: 50% green on covered pixels.
pub fn compose_overlay(image: &RgbImage, mask: &BinaryMask) -> RgbImage {
    let mut out = image.clone();
    for (x, y, px) in out.enumerate_pixels_mut() {
        if mask.get(x, y) {
            let [r, g, b] = px.0;
            px.0 = [r / 2, ((g as u16 + 255) / 2) as u8, b / 2];
        }
    }
    out
}

fn encode_png(img: &RgbImage) -> image::ImageResult<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    PngEncoder::new_with_quality(&mut buf, CompressionType::Fast, FilterType::NoFilter).write_image(
        img.as_raw(),
        img.width(),
        img.height(),
        image::ExtendedColorType::Rgb8,
    )?;
    Ok(buf.into_inner())
}

async fn overlay(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(query): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let s = state.session(&id).await?;
    let guard = s.lock().await;
    let pose = match query.get("pose") {
        Some(text) => {
            let p: PoseParams = serde_json::from_str(text)
                .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("pose: {e}")))?;
            checked_pose(p)?
        }
        None => guard.pose,
    };
    let (image, mesh) = (guard.image.clone(), guard.mesh.clone());
    let png = tokio::task::spawn_blocking(move || -> ApiResult<Vec<u8>> {
        let mask = render_silhouette(&mesh, &pose, image.width(), image.height())?;
        encode_png(&compose_overlay(&image, &mask))
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
    })
    .await??;
    drop(guard);
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

async fn put_pose(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Json(body): Json<PoseBody>,
) -> ApiResult<Json<PoseBody>> {
    let pose = checked_pose(body.pose)?;
    let s = state.session(&id).await?;
    let mut guard = s.lock().await;
    if guard.pose != pose {
        guard.pose = pose;
        guard.stage = Stage::Human;
        guard.last_iou = None;
        guard.dirty = true;
    }
    Ok(Json(PoseBody { pose }))
}

async fn refine_session(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Option<Json<RefineBody>>,
) -> ApiResult<Json<RefineResult>> {
    let body = body.map(|Json(b)| b).unwrap_or_default();
    let s = state.session(&id).await?;
    let mut guard = s.lock().await;
    let refs = guard
        .reference
        .clone()
        .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "session has no segmentation reference"))?;
    let snapshot = guard.pose;
    let mesh = guard.mesh.clone();
    let config = body.config.unwrap_or_else(|| RefinerConfig::for_pose(&snapshot));
    let result = tokio::task::spawn_blocking(move || -> ApiResult<RefineResult> {
        let (w, h) = refs.dims();
        let initial = render_silhouette(&mesh, &snapshot, w, h)?;
        let reference = select_reference(&refs, &initial)?;
        Ok(refine(&mesh, &snapshot, reference, &config)?)
    })
    .await??;
    guard.pose = result.pose;
    guard.stage = Stage::Refined;
    guard.last_iou = Some(result.iou_final);
    guard.dirty = true;
    Ok(Json(result))
}

async fn save_session(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<AnnotationRecord>> {
    let s = state.session(&id).await?;
    let mut guard = s.lock().await;
    let image_id = Path::new(&guard.image_path)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| guard.id.clone());
    let record = AnnotationRecord {
        image_id: image_id.clone(),
        image_width: guard.image.width(),
        image_height: guard.image.height(),
        category: guard.category.clone(),
        model_path: guard.mesh_path.clone(),
        pose: guard.pose,
        stage: guard.stage,
        iou_vs_reference: guard.last_iou,
        timestamp: crate::commands::now(),
        schema_version: SCHEMA_VERSION,
    };
    let path = state.data_dir.join(format!("{image_id}.json"));
    let rec = record.clone();
    tokio::task::spawn_blocking(move || -> ApiResult<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
        }
        Ok(rec.save(path)?)
    })
    .await??;
    guard.dirty = false;
    Ok(Json(record))
}

pub fn serve(args: ServeArgs) -> anyhow::Result<()> {
    std::fs::create_dir_all(&args.data_dir)?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let addr = format!("{}:{}", args.host, args.port);
        let listener = tokio::net::TcpListener::bind(&addr).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(AppState::new(args.data_dir))).await?;
        Ok(())
    })
}
