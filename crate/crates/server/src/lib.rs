//! HTTP session service: upload an image, get automated seeds and a
//! segmentation, then refine it with FG/BG strokes.

mod encode;
mod error;
pub mod snapshot;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;
use tower_http::services::ServeDir;

use seedforge_core::eval::Metrics;
use seedforge_core::io::{
    decode_binary_mask, decode_raster, encode_label_map, encode_seed_mask, encode_strength_map, label_map_bytes,
    seed_mask_bytes, unit_field_bytes, RasterFormat,
};
use seedforge_core::pipeline::SegmenterStats;
use seedforge_core::seeding::SeedingReport;
use seedforge_core::session::{Mutation, Session};
use seedforge_core::{parse_config, ConfigOverrides, Label};

pub use encode::{bitfield, decode_bitfield};
pub use error::{ApiError, ErrorBody};
use snapshot::SnapshotStore;

/// Largest accepted extent per axis for 2-D uploads.
pub const MAX_EXTENT_2D: usize = 512;
/// Largest accepted extent per axis for 3-D uploads.
pub const MAX_EXTENT_3D: usize = 128;
pub const DEFAULT_CONFIG: &str = "P,Sm,W,Me,gc";

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub static_dir: Option<PathBuf>,
    pub snapshot_dir: Option<PathBuf>,
    pub max_body_bytes: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            static_dir: None,
            snapshot_dir: None,
            max_body_bytes: 32 << 20,
        }
    }
}

struct Entry {
    session: Session,
    image: Vec<u8>,
    truth: Option<Vec<u8>>,
}

type Slot = Arc<Mutex<Entry>>;

#[derive(Clone)]
pub struct AppState {
    sessions: Arc<RwLock<HashMap<String, Slot>>>,
    snapshots: Option<SnapshotStore>,
}

impl AppState {
    /// Opens the snapshot directory (if any) and restores stored sessions.
    pub fn new(config: &ServerConfig) -> std::io::Result<Self> {
        let snapshots = config.snapshot_dir.as_ref().map(SnapshotStore::new).transpose()?;
        let mut sessions = HashMap::new();
        if let Some(store) = &snapshots {
            for loaded in store.load_all()? {
                let entry = Entry {
                    session: loaded.session,
                    image: loaded.image,
                    truth: loaded.truth,
                };
                sessions.insert(loaded.id, Arc::new(Mutex::new(entry)));
            }
        }
        Ok(AppState {
            sessions: Arc::new(RwLock::new(sessions)),
            snapshots,
        })
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().expect("session map lock").len()
    }

    fn slot(&self, id: &str) -> Result<Slot, ApiError> {
        self.sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no session {id:?}")))
    }

    fn persist(&self, id: &str, entry: &Entry) {
        if let Some(store) = &self.snapshots {
            if let Err(e) = store.save(id, &entry.session, &entry.image, entry.truth.as_deref()) {
                tracing::warn!("snapshot of session {id} failed: {e}");
            }
        }
    }
}

pub fn router(state: AppState, config: &ServerConfig) -> Router {
    let api = Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/scribbles", post(add_scribble))
        .route("/sessions/{id}/undo", post(undo))
        .route("/sessions/{id}/artifacts/{kind}", get(artifact))
        .layer(DefaultBodyLimit::max(config.max_body_bytes))
        .with_state(state);
    match &config.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(addr: SocketAddr, config: ServerConfig) -> std::io::Result<()> {
    let state = AppState::new(&config)?;
    let app = router(state, &config);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app).await
}

async fn healthz() -> &'static str {
    "ok"
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SeedView {
    pub fg: String,
    pub bg: String,
    pub fg_count: usize,
    pub bg_count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LabelView {
    pub fg: String,
    pub fg_count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub revision: u64,
    /// Grid extents, slowest axis first (`[height, width]` or `[depth, height, width]`).
    pub dims: Vec<usize>,
    pub config: String,
    pub seeds: SeedView,
    pub labels: LabelView,
    pub seeding: SeedingReport,
    pub segmenter: SegmenterStats,
    pub metrics: Option<Metrics>,
    pub undoable: usize,
    pub history_len: usize,
    pub has_saliency: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FlippedView {
    pub count: usize,
    pub bits: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MutationView {
    #[serde(flatten)]
    pub state: SessionView,
    /// Voxels whose label changed with this mutation.
    pub flipped: FlippedView,
}

fn view(id: &str, s: &Session) -> SessionView {
    let seeds = s.seeds();
    let labels = s.labels();
    SessionView {
        id: id.to_string(),
        revision: s.revision(),
        dims: s.shape().dims().to_vec(),
        config: s.config().canonical(),
        seeds: SeedView {
            fg: bitfield(seeds.labels().iter().map(|&l| l == Label::Fg)),
            bg: bitfield(seeds.labels().iter().map(|&l| l == Label::Bg)),
            fg_count: seeds.count(Label::Fg),
            bg_count: seeds.count(Label::Bg),
        },
        labels: LabelView {
            fg: bitfield(labels.mask().bits().iter().copied()),
            fg_count: labels.fg_count(),
        },
        seeding: s.report().clone(),
        segmenter: s.stats().clone(),
        metrics: s.metrics(),
        undoable: s.undoable(),
        history_len: s.history().len(),
        has_saliency: s.saliency().is_some(),
    }
}

fn mutation_view(id: &str, s: &Session, m: &Mutation) -> MutationView {
    let n = s.shape().len();
    let mut flipped = vec![false; n];
    for &i in &m.flipped {
        flipped[i] = true;
    }
    MutationView {
        state: view(id, s),
        flipped: FlippedView {
            count: m.flipped.len(),
            bits: bitfield(flipped),
        },
    }
}

fn check_size(dims: &[usize]) -> Result<(), ApiError> {
    let cap = if dims.len() == 2 { MAX_EXTENT_2D } else { MAX_EXTENT_3D };
    if dims.iter().any(|&d| d > cap) {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            format!("image extents {dims:?} exceed the {cap}-per-axis cap"),
        ));
    }
    Ok(())
}

fn decode_upload(bytes: &[u8]) -> Result<seedforge_core::ImageGrid, ApiError> {
    if RasterFormat::sniff(bytes).is_none() {
        return Err(ApiError::new(
            StatusCode::UNSUPPORTED_MEDIA_TYPE,
            "image must be binary PGM (P5) or G3D",
        ));
    }
    let raster = decode_raster(bytes).map_err(|e| ApiError::bad_request(e.to_string()).at_stage("ingest"))?;
    check_size(&raster.dims)?;
    raster
        .to_grid()
        .map_err(|e| ApiError::bad_request(e.to_string()).at_stage("ingest"))
}

/// Multipart fields: `image` (required), `config` (stage string),
/// `truth` (optional mask image), `invert` (`true`/`false`).
async fn create_session(State(state): State<AppState>, mut form: Multipart) -> Result<Response, ApiError> {
    let mut image = None;
    let mut truth = None;
    let mut config_text = None;
    let mut invert = None;
    while let Some(field) = form
        .next_field()
        .await
        .map_err(|e| ApiError::bad_request(format!("malformed multipart body: {e}")))?
    {
        let name = field.name().unwrap_or("").to_string();
        let data = field
            .bytes()
            .await
            .map_err(|e| ApiError::bad_request(format!("reading field {name:?}: {e}")))?;
        match name.as_str() {
            "image" => image = Some(data.to_vec()),
            "truth" => truth = Some(data.to_vec()),
            "config" => config_text = Some(String::from_utf8_lossy(&data).trim().to_string()),
            "invert" => invert = Some(matches!(String::from_utf8_lossy(&data).trim(), "true" | "1" | "yes")),
            other => return Err(ApiError::bad_request(format!("unknown field {other:?}"))),
        }
    }
    let image = image.ok_or_else(|| ApiError::bad_request("missing multipart field \"image\""))?;
    let grid = decode_upload(&image)?;
    let truth_mask = match &truth {
        Some(bytes) => {
            if RasterFormat::sniff(bytes).is_none() {
                return Err(ApiError::new(
                    StatusCode::UNSUPPORTED_MEDIA_TYPE,
                    "truth must be PGM or G3D",
                ));
            }
            let m = decode_binary_mask(bytes).map_err(|e| ApiError::bad_request(e.to_string()).at_stage("ingest"))?;
            if m.shape() != grid.shape() {
                return Err(ApiError::bad_request(format!(
                    "truth dims {:?} differ from image dims {:?}",
                    m.shape().dims(),
                    grid.dims()
                ))
                .at_stage("ingest"));
            }
            Some(m)
        }
        None => None,
    };
    let overrides = ConfigOverrides {
        invert,
        ..Default::default()
    };
    let config = parse_config(config_text.as_deref().unwrap_or(DEFAULT_CONFIG), &overrides)
        .and_then(|c| c.validate().map(|_| c))
        .map_err(|e| ApiError::bad_request(e.to_string()).at_stage("config"))?;

    let session = tokio::task::spawn_blocking(move || Session::create(&grid, config, truth_mask))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;

    let id = uuid::Uuid::new_v4().simple().to_string();
    let body = view(&id, &session);
    let entry = Entry { session, image, truth };
    if let Some(store) = &state.snapshots {
        if let Err(e) = store.create(&id, &entry.image, entry.truth.as_deref()) {
            tracing::warn!("snapshot of session {id} failed: {e}");
        }
    }
    state.persist(&id, &entry);
    state
        .sessions
        .write()
        .expect("session map lock")
        .insert(id.clone(), Arc::new(Mutex::new(entry)));
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let slot = state.slot(&id)?;
    let entry = slot.lock().await;
    Ok(Json(view(&id, &entry.session)))
}

#[derive(Debug, Deserialize)]
struct ScribbleRequest {
    label: String,
    voxels: Vec<Vec<i64>>,
}

/// Runs `f` on the session under its lock, off the async executor.
/// Waiters are served in arrival order.
async fn mutate(
    state: AppState,
    id: String,
    f: impl FnOnce(&mut Session) -> Result<Mutation, ApiError> + Send + 'static,
) -> Result<Json<MutationView>, ApiError> {
    let slot = state.slot(&id)?;
    let mut guard = slot.lock_owned().await;
    tokio::task::spawn_blocking(move || {
        let m = f(&mut guard.session)?;
        state.persist(&id, &guard);
        Ok(Json(mutation_view(&id, &guard.session, &m)))
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?
}

async fn add_scribble(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<MutationView>, ApiError> {
    let req: ScribbleRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("invalid scribble body: {e}")))?;
    let label = match req.label.to_ascii_lowercase().as_str() {
        "fg" => Label::Fg,
        "bg" => Label::Bg,
        other => {
            return Err(ApiError::bad_request(format!(
                "label must be \"fg\" or \"bg\", got {other:?}"
            )))
        }
    };
    mutate(state, id, move |s| Ok(s.add_scribble(label, &req.voxels)?)).await
}

async fn undo(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<MutationView>, ApiError> {
    mutate(state, id, |s| Ok(s.undo()?)).await
}

/// 2-D artifacts are 8-bit PNG; 3-D artifacts use the G3D raster format.
async fn artifact(
    State(state): State<AppState>,
    Path((id, kind)): Path<(String, String)>,
) -> Result<Response, ApiError> {
    let slot = state.slot(&id)?;
    let entry = slot.lock().await;
    let s = &entry.session;
    let shape = s.shape().clone();
    let (samples, volume) = match kind.as_str() {
        "seed" => (seed_mask_bytes(s.seeds()), encode_seed_mask(s.seeds())),
        "label" => (label_map_bytes(s.labels()), encode_label_map(s.labels())),
        "strength" => (
            unit_field_bytes(s.strength().weights()),
            encode_strength_map(s.strength()),
        ),
        "saliency" => {
            let sal = s
                .saliency()
                .ok_or_else(|| ApiError::not_found("this session's seeding method produces no saliency map"))?;
            let bytes = unit_field_bytes(sal.scores());
            let volume = seedforge_core::io::encode_u8(&shape, &bytes);
            (bytes, volume)
        }
        other => return Err(ApiError::not_found(format!("unknown artifact {other:?}"))),
    };
    drop(entry);
    if shape.ndim() == 2 {
        let png = encode::png_gray8(&shape, &samples).map_err(|e| ApiError::internal(e.to_string()))?;
        Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
    } else {
        Ok(([(header::CONTENT_TYPE, "application/octet-stream")], volume).into_response())
    }
}
