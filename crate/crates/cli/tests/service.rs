mod common;

use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use common::*;
use http_body_util::BodyExt;
use nalgebra::Vector3;
use poseref_cli::service::{router, AppState, SessionCreated, SessionView};
use poseref_core::{render_silhouette, AnnotationRecord, PoseParams, RefineResult, Stage, TriangleMesh};
use serde_json::{json, Value};
use tower::ServiceExt;

struct Fixture {
    dir: tempfile::TempDir,
    app: Router,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let app = router(AppState::new(dir.path().join("records")));
        Fixture { dir, app }
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).to_string_lossy().into_owned()
    }

    fn write_image(&self, name: &str, w: u32, h: u32) -> String {
        let img = image::RgbImage::from_fn(w, h, |x, y| image::Rgb([(x % 256) as u8, (y % 256) as u8, 128]));
        let p = self.path(name);
        img.save(&p).unwrap();
        p
    }

    fn write_reference(&self, name: &str, pose: &PoseParams, w: u32, h: u32) -> String {
        let p = self.path(name);
        render_silhouette(&car(), pose, w, h).unwrap().write_png(&p).unwrap();
        p
    }

    async fn call(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
        let mut req = Request::builder().method(method).uri(uri);
        let body = match body {
            Some(v) => {
                req = req.header(header::CONTENT_TYPE, "application/json");
                Body::from(serde_json::to_vec(&v).unwrap())
            }
            None => Body::empty(),
        };
        let resp = self.app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
        let status = resp.status();
        (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
    }

    async fn create(&self, body: Value) -> SessionCreated {
        let (status, bytes) = self.call(Method::POST, "/sessions", Some(body)).await;
        assert_eq!(status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&bytes));
        serde_json::from_slice(&bytes).unwrap()
    }

    async fn view(&self, id: &str) -> SessionView {
        let (status, bytes) = self.call(Method::GET, &format!("/sessions/{id}"), None).await;
        assert_eq!(status, StatusCode::OK);
        serde_json::from_slice(&bytes).unwrap()
    }
}

fn overlay_uri(id: &str, pose: Option<&PoseParams>) -> String {
    match pose {
        None => format!("/sessions/{id}/overlay"),
        Some(p) => {
            let q: String = serde_json::to_string(p)
                .unwrap()
                .bytes()
                .map(|b| match b {
                    b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'.' | b'_' => (b as char).to_string(),
                    _ => format!("%{b:02X}"),
                })
                .collect();
            format!("/sessions/{id}/overlay?pose={q}")
        }
    }
}

#[tokio::test]
async fn create_defaults_and_overlay() {
    let fx = Fixture::new();
    let image = fx.write_image("photo.png", 200, 150);
    let created = fx.create(json!({"image_path": image, "mesh_path": car_path()})).await;
    assert_eq!((created.image_width, created.image_height), (200, 150));
    let p = created.pose;
    assert_eq!((p.azimuth_deg, p.elevation_deg, p.inplane_deg), (0.0, 0.0, 0.0));
    assert!((p.depth - 3.0).abs() < 1e-12);
    assert_eq!((p.focal, p.principal_u, p.principal_v), (200.0, 100.0, 75.0));

    let (status, png) = fx.call(Method::GET, &overlay_uri(&created.session_id, None), None).await;
    assert_eq!(status, StatusCode::OK);
    let img = image::load_from_memory(&png).unwrap().to_rgb8();
    assert_eq!(img.dimensions(), (200, 150));
    // image center is covered by the model: green channel pushed up
    assert!(img.get_pixel(100, 75).0[1] >= 127);
    // a corner is not covered: untouched
    assert_eq!(img.get_pixel(0, 0).0, [0, 0, 128]);
}

#[tokio::test]
async fn round_trip_reaches_the_fixed_point() {
    let fx = Fixture::new();
    let (w, h) = (160, 120);
    let truth = car_pose(w, h);
    let image = fx.write_image("frame_01.png", w, h);
    let reference = fx.write_reference("ref.png", &truth, w, h);
    let created = fx
        .create(json!({"image_path": image, "mesh_path": car_path(), "reference_path": reference, "category": "sedan"}))
        .await;
    let id = created.session_id;

    let before = fx.view(&id).await;
    let (status, a) = fx.call(Method::GET, &overlay_uri(&id, Some(&truth)), None).await;
    assert_eq!(status, StatusCode::OK);
    let (_, b) = fx.call(Method::GET, &overlay_uri(&id, Some(&truth)), None).await;
    assert_eq!(a, b);
    assert_eq!(fx.view(&id).await, before, "overlay GET changed session state");

    let (status, _) = fx.call(Method::PUT, &format!("/sessions/{id}/pose"), Some(json!({"pose": truth}))).await;
    assert_eq!(status, StatusCode::OK);
    let after_put = fx.view(&id).await;
    assert_eq!(after_put.pose, truth);
    assert!(after_put.dirty);

    let (status, bytes) = fx.call(Method::POST, &format!("/sessions/{id}/refine"), None).await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&bytes));
    let result: RefineResult = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(result.pose, truth);
    assert_eq!((result.iou_initial, result.iou_final), (1.0, 1.0));

    let (status, bytes) = fx.call(Method::POST, &format!("/sessions/{id}/save"), None).await;
    assert_eq!(status, StatusCode::OK);
    let returned: AnnotationRecord = serde_json::from_slice(&bytes).unwrap();
    let saved = AnnotationRecord::load(Path::new(&fx.path("records")).join("frame_01.json")).unwrap();
    assert_eq!(saved, returned);
    assert_eq!(saved.pose, truth);
    assert_eq!(saved.stage, Stage::Refined);
    assert_eq!(saved.iou_vs_reference, Some(1.0));
    assert_eq!(saved.category, "sedan");
    assert_eq!((saved.image_width, saved.image_height), (w, h));
    assert!(!fx.view(&id).await.dirty);
}

#[tokio::test]
async fn refine_moves_toward_reference() {
    let fx = Fixture::new();
    let (w, h) = (160, 120);
    let truth = car_pose(w, h);
    let start = PoseParams { azimuth_deg: truth.azimuth_deg - 4.0, principal_v: truth.principal_v + 6.0, ..truth };
    let created = fx
        .create(json!({
            "image_path": fx.write_image("a.png", w, h),
            "mesh_path": car_path(),
            "initial_pose": start,
            "reference_path": fx.write_reference("r.png", &truth, w, h),
        }))
        .await;
    let (status, bytes) = fx.call(Method::POST, &format!("/sessions/{}/refine", created.session_id), Some(json!({}))).await;
    assert_eq!(status, StatusCode::OK);
    let r: RefineResult = serde_json::from_slice(&bytes).unwrap();
    assert!(r.iou_final > r.iou_initial);
    let v = fx.view(&created.session_id).await;
    assert_eq!(v.pose, r.pose);
    assert_eq!(v.stage, Stage::Refined);
}

#[tokio::test]
async fn error_statuses() {
    let fx = Fixture::new();
    let image = fx.write_image("x.png", 64, 48);
    let id = fx.create(json!({"image_path": image, "mesh_path": car_path()})).await.session_id;
    let good = car_pose(64, 48);

    let bad_depth = json!({"pose": PoseParams { depth: -1.0, ..good }});
    let (status, _) = fx.call(Method::PUT, &format!("/sessions/{id}/pose"), Some(bad_depth)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let bad_elev = json!({"pose": PoseParams { elevation_deg: 120.0, ..good }});
    let (status, _) = fx.call(Method::PUT, &format!("/sessions/{id}/pose"), Some(bad_elev)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(!fx.view(&id).await.dirty);

    let (status, _) = fx.call(Method::POST, &format!("/sessions/{id}/refine"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (status, _) = fx.call(Method::GET, "/sessions/nope/overlay", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = fx.call(Method::GET, &format!("/sessions/{id}/overlay?pose=notjson"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, _) = fx.call(Method::POST, "/sessions", Some(json!({"image_path": "/missing.png", "mesh_path": car_path()}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let wrong_size = fx.write_reference("small.png", &good, 32, 24);
    let (status, _) = fx
        .call(Method::POST, "/sessions", Some(json!({"image_path": image, "mesh_path": car_path(), "reference_path": wrong_size})))
        .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

/// UV sphere with `rings * segments * 2` triangles.
fn sphere(rings: usize, segments: usize) -> TriangleMesh {
    let mut v = Vec::new();
    for i in 0..=rings {
        let phi = std::f64::consts::PI * i as f64 / rings as f64;
        for j in 0..segments {
            let th = 2.0 * std::f64::consts::PI * j as f64 / segments as f64;
            v.push(Vector3::new(phi.sin() * th.cos(), phi.cos(), phi.sin() * th.sin()));
        }
    }
    let mut t = Vec::new();
    for i in 0..rings {
        for j in 0..segments {
            let a = (i * segments + j) as u32;
            let b = (i * segments + (j + 1) % segments) as u32;
            let (c, d) = (a + segments as u32, b + segments as u32);
            t.push([a, b, d]);
            t.push([a, d, c]);
        }
    }
    TriangleMesh::new(v, t).unwrap()
}

#[tokio::test]
async fn overlay_meets_latency_budget() {
    let fx = Fixture::new();
    let mesh = sphere(125, 200);
    assert_eq!(mesh.triangles().len(), 50_000);
    let mesh_path = fx.path("sphere.obj");
    mesh.write_obj(std::fs::File::create(&mesh_path).unwrap()).unwrap();
    let image = fx.write_image("big.png", 1000, 1000);
    let id = fx.create(json!({"image_path": image, "mesh_path": mesh_path})).await.session_id;
    let pose = PoseParams::new(30.0, 20.0, 0.0, 2.5, 900.0, 500.0, 500.0).unwrap();
    let uri = overlay_uri(&id, Some(&pose));

    let _ = fx.call(Method::GET, &uri, None).await;
    let mut times = Vec::new();
    for _ in 0..5 {
        let t = Instant::now();
        let (status, _) = fx.call(Method::GET, &uri, None).await;
        times.push(t.elapsed());
        assert_eq!(status, StatusCode::OK);
    }
    times.sort();
    assert!(times[2] < Duration::from_millis(100), "median overlay {:?}", times[2]);
}

#[tokio::test]
async fn sessions_are_independent() {
    let fx = Arc::new(Fixture::new());
    let image = fx.write_image("x.png", 64, 48);
    let a = fx.create(json!({"image_path": image, "mesh_path": car_path()})).await.session_id;
    let b = fx.create(json!({"image_path": image, "mesh_path": car_path()})).await.session_id;
    assert_ne!(a, b);
    let p = car_pose(64, 48);
    fx.call(Method::PUT, &format!("/sessions/{a}/pose"), Some(json!({"pose": p}))).await;
    assert_eq!(fx.view(&a).await.pose, p);
    assert_ne!(fx.view(&b).await.pose, p);
}
