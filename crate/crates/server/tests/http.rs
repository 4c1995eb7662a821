use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

use seedforge_core::eval::{make_phantom, PhantomDescriptor};
use seedforge_core::grid::Shape;
use seedforge_core::io::{encode_binary_mask, encode_grid_u8, encode_u8};
use seedforge_server::{decode_bitfield, router, AppState, ServerConfig};

const BOUNDARY: &str = "seedforge-test-boundary";

fn app_with(config: ServerConfig) -> (Router, AppState) {
    let state = AppState::new(&config).unwrap();
    (router(state.clone(), &config), state)
}

fn app() -> Router {
    app_with(ServerConfig::default()).0
}

fn disk_upload() -> (Vec<u8>, Vec<u8>) {
    let p = make_phantom(&PhantomDescriptor::disk(32, 6.0, 0.7, 0.02, 5)).unwrap();
    (encode_grid_u8(&p.grid), encode_binary_mask(&p.truth))
}

fn multipart(fields: &[(&str, &[u8])]) -> Vec<u8> {
    let mut body = Vec::new();
    for (name, data) in fields {
        body.extend_from_slice(format!("--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"{name}\"").as_bytes());
        if *name == "image" || *name == "truth" {
            body.extend_from_slice(b"; filename=\"upload.pgm\"\r\nContent-Type: application/octet-stream");
        }
        body.extend_from_slice(b"\r\n\r\n");
        body.extend_from_slice(data);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
    body
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn send_json(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let (status, bytes) = send(app, req).await;
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn create_req(fields: &[(&str, &[u8])]) -> Request<Body> {
    Request::post("/sessions")
        .header("content-type", format!("multipart/form-data; boundary={BOUNDARY}"))
        .body(Body::from(multipart(fields)))
        .unwrap()
}

fn scribble_req(id: &str, label: &str, voxels: Value) -> Request<Body> {
    let body = serde_json::json!({ "label": label, "voxels": voxels });
    Request::post(format!("/sessions/{id}/scribbles"))
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

fn undo_req(id: &str) -> Request<Body> {
    Request::post(format!("/sessions/{id}/undo"))
        .body(Body::empty())
        .unwrap()
}

fn get_req(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

async fn create(app: &Router, config: &str) -> Value {
    let (image, truth) = disk_upload();
    let (status, body) = send_json(
        app,
        create_req(&[("image", &image), ("config", config.as_bytes()), ("truth", &truth)]),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body
}

fn bits(v: &Value, len: usize) -> Vec<bool> {
    decode_bitfield(v.as_str().unwrap(), len).unwrap()
}

#[tokio::test]
async fn healthz_ok() {
    let (status, body) = send(&app(), get_req("/healthz")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, b"ok");
}

#[tokio::test]
async fn create_returns_revision_one_with_labels_and_metrics() {
    let app = app();
    let body = create(&app, "P,Sm,W,Me,gc").await;
    assert_eq!(body["revision"], 1);
    assert_eq!(body["dims"], serde_json::json!([32, 32]));
    assert_eq!(body["config"], "P,Sm,W,Me,gc");
    assert!(body["labels"]["fg_count"].as_u64().unwrap() > 0);
    assert!(body["metrics"]["dice"].as_f64().unwrap() > 0.9);
    let labels = bits(&body["labels"]["fg"], 32 * 32);
    assert_eq!(
        labels.iter().filter(|&&b| b).count() as u64,
        body["labels"]["fg_count"].as_u64().unwrap()
    );
    let id = body["id"].as_str().unwrap();
    let (status, again) = send_json(&app, get_req(&format!("/sessions/{id}"))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(again["seeds"], body["seeds"]);
}

#[tokio::test]
async fn oversize_upload_rejected() {
    let shape = Shape::new(&[1024, 1024]).unwrap();
    let image = encode_u8(&shape, &vec![7u8; 1024 * 1024]);
    let (status, body) = send_json(&app(), create_req(&[("image", &image)])).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
    assert_eq!(body["code"], 413);
}

#[tokio::test]
async fn unsupported_format_rejected() {
    let (status, body) = send_json(&app(), create_req(&[("image", b"\x89PNG\r\n\x1a\nnot really")])).await;
    assert_eq!(status, StatusCode::UNSUPPORTED_MEDIA_TYPE);
    assert_eq!(body["code"], 415);
}

#[tokio::test]
async fn constant_image_fails_at_seeding() {
    let shape = Shape::new(&[16, 16]).unwrap();
    let image = encode_u8(&shape, &[100u8; 256]);
    let (status, body) = send_json(&app(), create_req(&[("image", &image), ("config", b"So,gc")])).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["code"], 422);
    assert_eq!(body["stage"], "seeding");
    assert!(
        body["message"].as_str().unwrap().contains("degenerate histogram"),
        "{body}"
    );
}

#[tokio::test]
async fn bad_config_rejected_with_stage() {
    let (image, _) = disk_upload();
    let (status, body) = send_json(&app(), create_req(&[("image", &image), ("config", b"P,Sx,gc")])).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["stage"], "config");
    assert!(body["message"].as_str().unwrap().contains("Sx"));
}

#[tokio::test]
async fn unknown_session_is_404() {
    let app = app();
    let (status, body) = send_json(&app, get_req("/sessions/nope")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], 404);
    let (status, _) = send_json(&app, scribble_req("nope", "fg", serde_json::json!([[1, 1]]))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn fg_stroke_flips_labels_at_every_stroke_voxel() {
    let app = app();
    let body = create(&app, "P,Sm,W,Me,gc").await;
    let id = body["id"].as_str().unwrap();
    let stroke: Vec<[i64; 2]> = (3..7).flat_map(|y| (3..7).map(move |x| [x, y])).collect();
    let (status, delta) = send_json(&app, scribble_req(id, "fg", serde_json::json!(stroke))).await;
    assert_eq!(status, StatusCode::OK, "{delta}");
    assert_eq!(delta["revision"], 2);
    let labels = bits(&delta["labels"]["fg"], 32 * 32);
    let flipped = bits(&delta["flipped"]["bits"], 32 * 32);
    let seeds = bits(&delta["seeds"]["fg"], 32 * 32);
    for [x, y] in stroke {
        let i = (y * 32 + x) as usize;
        assert!(labels[i] && flipped[i] && seeds[i]);
    }
    assert!(delta["flipped"]["count"].as_u64().unwrap() >= 16);
}

#[tokio::test]
async fn invalid_strokes_leave_revision_unchanged() {
    let app = app();
    let body = create(&app, "P,Sm,W,Me,rw").await;
    let id = body["id"].as_str().unwrap();
    for voxels in [
        serde_json::json!([[1, 1], [32, 0]]),
        serde_json::json!([]),
        serde_json::json!([[1, 1, 1]]),
        serde_json::json!([[-1, 3]]),
    ] {
        let (status, err) = send_json(&app, scribble_req(id, "bg", voxels)).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{err}");
        assert_eq!(err["code"], 400);
    }
    let (status, _) = send_json(&app, scribble_req(id, "maybe", serde_json::json!([[1, 1]]))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (_, now) = send_json(&app, get_req(&format!("/sessions/{id}"))).await;
    assert_eq!(now["revision"], 1);
    assert_eq!(now["seeds"], body["seeds"]);
}

#[tokio::test]
async fn undo_semantics() {
    let app = app();
    let created = create(&app, "P,Sm,W,Me,gc").await;
    let id = created["id"].as_str().unwrap();

    let (status, err) = send_json(&app, undo_req(id)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["code"], 409);

    let (_, first) = send_json(&app, scribble_req(id, "fg", serde_json::json!([[4, 4], [5, 4]]))).await;
    let (_, undone) = send_json(&app, undo_req(id)).await;
    assert_eq!(undone["revision"], 3);
    assert_eq!(undone["seeds"], created["seeds"]);
    assert_eq!(undone["labels"], created["labels"]);

    let (_, again) = send_json(&app, scribble_req(id, "fg", serde_json::json!([[4, 4], [5, 4]]))).await;
    assert_eq!(again["seeds"], first["seeds"]);
    send_json(&app, scribble_req(id, "bg", serde_json::json!([[16, 16]]))).await;
    let (status, last) = send_json(&app, undo_req(id)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(last["revision"], 6);
    assert_eq!(last["seeds"], first["seeds"]);
    assert_eq!(last["history_len"], 5);
}

#[tokio::test]
async fn artifacts_are_pngs() {
    let app = app();
    let body = create(&app, "P,Sm,W,Me,gc").await;
    let id = body["id"].as_str().unwrap();
    for kind in ["seed", "strength", "label", "saliency"] {
        let (status, bytes) = send(&app, get_req(&format!("/sessions/{id}/artifacts/{kind}"))).await;
        assert_eq!(status, StatusCode::OK, "{kind}");
        let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
        let reader = decoder.read_info().unwrap();
        let info = reader.info();
        assert_eq!((info.width, info.height), (32, 32));
    }
    let (status, _) = send(&app, get_req(&format!("/sessions/{id}/artifacts/other"))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let body = create(&app, "So,gc").await;
    let id = body["id"].as_str().unwrap();
    let (status, _) = send(&app, get_req(&format!("/sessions/{id}/artifacts/saliency"))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn volume_session_and_artifact() {
    let p = make_phantom(&"sphere 16x16x16 r=4 contrast=0.8 noise=0.01 seed=2".parse().unwrap()).unwrap();
    let image = encode_grid_u8(&p.grid);
    let app = app();
    let (status, body) = send_json(&app, create_req(&[("image", &image), ("config", b"So,W,Me,rw")])).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    let id = body["id"].as_str().unwrap();
    let (status, delta) = send_json(&app, scribble_req(id, "bg", serde_json::json!([[8, 8, 8]]))).await;
    assert_eq!(status, StatusCode::OK, "{delta}");
    let labels = bits(&delta["labels"]["fg"], 16 * 16 * 16);
    assert!(!labels[8 * 256 + 8 * 16 + 8]);
    let (status, bytes) = send(&app, get_req(&format!("/sessions/{id}/artifacts/label"))).await;
    assert_eq!(status, StatusCode::OK);
    assert!(bytes.starts_with(b"G3D 16 16 16"));
}

#[tokio::test]
async fn concurrent_mutations_serialize_per_session() {
    let app = app();
    let a = create(&app, "So,W,Me,gc").await["id"].as_str().unwrap().to_string();
    let b = create(&app, "So,W,Me,gc").await["id"].as_str().unwrap().to_string();
    let mut tasks = Vec::new();
    for k in 0..8i64 {
        for id in [a.clone(), b.clone()] {
            let app = app.clone();
            tasks.push(tokio::spawn(async move {
                let (status, v) = send_json(&app, scribble_req(&id, "bg", serde_json::json!([[k + 1, 1]]))).await;
                assert_eq!(status, StatusCode::OK);
                (id, v["revision"].as_u64().unwrap())
            }));
        }
    }
    let mut revs: std::collections::HashMap<String, Vec<u64>> = Default::default();
    for t in tasks {
        let (id, r) = t.await.unwrap();
        revs.entry(id).or_default().push(r);
    }
    for (_, mut r) in revs {
        r.sort();
        assert_eq!(r, (2..=9).collect::<Vec<_>>());
    }
}

#[tokio::test]
async fn snapshots_restore_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServerConfig {
        snapshot_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    let (app, _) = app_with(config.clone());
    let created = create(&app, "P,Sm,W,Me,gc").await;
    let id = created["id"].as_str().unwrap();
    send_json(&app, scribble_req(id, "fg", serde_json::json!([[3, 3]]))).await;
    send_json(&app, scribble_req(id, "bg", serde_json::json!([[16, 16]]))).await;
    let (_, before) = send_json(&app, undo_req(id)).await;
    assert!(dir.path().join(id).join("manifest.json").exists());
    assert!(dir.path().join(id).join("seed.pgm").exists());

    let (restarted, state) = app_with(config);
    assert_eq!(state.session_count(), 1);
    let (status, after) = send_json(&restarted, get_req(&format!("/sessions/{id}"))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(after["revision"], 4);
    assert_eq!(after["seeds"], before["seeds"]);
    assert_eq!(after["labels"], before["labels"]);
    assert_eq!(after["metrics"]["dice"], before["metrics"]["dice"]);
    assert_eq!(after["metrics"]["seeds"], before["metrics"]["seeds"]);
}

#[tokio::test]
async fn static_files_served_when_configured() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<!doctype html><title>t</title>").unwrap();
    let (app, _) = app_with(ServerConfig {
        static_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    });
    let (status, body) = send(&app, get_req("/index.html")).await;
    assert_eq!(status, StatusCode::OK);
    assert!(body.starts_with(b"<!doctype html>"));
    let (status, _) = send(&app, get_req("/healthz")).await;
    assert_eq!(status, StatusCode::OK);
}
