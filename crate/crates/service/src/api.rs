use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};
use std::time::Instant;

use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Request, State};
use axum::http::header::CONTENT_TYPE;
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tower_http::cors::CorsLayer;

use crate::error::ApiError;
use crate::snapshot::Snapshot;

/// Upper bound on request bodies (PNG payloads, base64 or multipart).
pub const BODY_LIMIT: usize = 32 * 1024 * 1024;

/// Shared service state. Requests clone an `Arc<Snapshot>` under a short
/// read lock, so a reload never disturbs a request already running.
#[derive(Debug, Default)]
pub struct AppState {
    main: RwLock<Option<Arc<Snapshot>>>,
    styles: RwLock<BTreeMap<String, Arc<Snapshot>>>,
}

impl AppState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_checkpoint(&self, snapshot: Snapshot) {
        *self.main.write().expect("state lock poisoned") = Some(Arc::new(snapshot));
    }

    pub fn add_style(&self, id: impl Into<String>, snapshot: Snapshot) {
        self.styles
            .write()
            .expect("state lock poisoned")
            .insert(id.into(), Arc::new(snapshot));
    }

    pub fn current(&self) -> Result<Arc<Snapshot>, ApiError> {
        self.main
            .read()
            .expect("state lock poisoned")
            .clone()
            .ok_or(ApiError::Unavailable)
    }

    pub fn style_ids(&self) -> Vec<String> {
        self.styles.read().expect("state lock poisoned").keys().cloned().collect()
    }

    /// A named style checkpoint; no id means the main checkpoint.
    pub fn style(&self, id: Option<&str>) -> Result<Arc<Snapshot>, ApiError> {
        let Some(id) = id else {
            return self.current();
        };
        self.styles
            .read()
            .expect("state lock poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::UnknownStyle {
                style: id.to_string(),
                styles: self.style_ids(),
            })
    }
}

pub fn router(state: Arc<AppState>, cors: CorsLayer) -> Router {
    Router::new()
        .route("/info", get(info))
        .route("/synthesize", post(synthesize))
        .route("/extract-sketch", post(extract_sketch))
        .route("/reload", post(reload))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .layer(cors)
        .with_state(state)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClassEntry {
    pub name: String,
    pub open_domain: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct InfoResponse {
    pub classes: Vec<ClassEntry>,
    pub n_open: usize,
    pub fingerprint: String,
    pub checkpoint: PathBuf,
    pub image_size: usize,
    pub model: s2p_core::models::ModelConfig,
    pub styles: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SynthesisResponse {
    /// Base64 PNG.
    pub photo: String,
    pub label: String,
    pub fingerprint: String,
    pub size: usize,
    pub latency_ms: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SketchResponse {
    /// Base64 PNG.
    pub sketch: String,
    pub style: Option<String>,
    pub fingerprint: String,
    pub size: usize,
    pub latency_ms: f64,
}

fn info_of(state: &AppState) -> Result<InfoResponse, ApiError> {
    let snap = state.current()?;
    let v = &snap.vocabulary;
    Ok(InfoResponse {
        classes: (0..v.len())
            .map(|i| ClassEntry {
                name: v.names()[i].clone(),
                open_domain: v.is_open(i),
            })
            .collect(),
        n_open: v.n_open(),
        fingerprint: snap.fingerprint.clone(),
        checkpoint: snap.path.clone(),
        image_size: snap.image_size,
        model: snap.model,
        styles: state.style_ids(),
    })
}

async fn info(State(state): State<Arc<AppState>>) -> Result<Json<InfoResponse>, ApiError> {
    info_of(&state).map(Json)
}

/// Image bytes plus the remaining scalar fields of a JSON or multipart body.
struct Upload {
    image: Vec<u8>,
    fields: BTreeMap<String, String>,
}

impl Upload {
    fn size(&self) -> Result<Option<usize>, ApiError> {
        self.fields
            .get("size")
            .map(|s| {
                s.parse()
                    .map_err(|_| ApiError::BadRequest(format!("size must be an integer, got `{s}`")))
            })
            .transpose()
    }
}

fn decode_base64(text: &str) -> Result<Vec<u8>, ApiError> {
    // tolerate data URLs as produced by canvas.toDataURL()
    let payload = text.split_once("base64,").map_or(text, |(_, p)| p);
    STANDARD
        .decode(payload.trim())
        .map_err(|e| ApiError::BadImage(format!("invalid base64: {e}")))
}

async fn read_upload(req: Request, image_field: &str) -> Result<Upload, ApiError> {
    let is_multipart = req
        .headers()
        .get(CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    let mut image = None;
    let mut fields = BTreeMap::new();
    if is_multipart {
        let mut form = Multipart::from_request(req, &())
            .await
            .map_err(|e| ApiError::BadRequest(e.body_text()))?;
        while let Some(field) = form
            .next_field()
            .await
            .map_err(|e| ApiError::BadRequest(e.body_text()))?
        {
            let name = field.name().unwrap_or_default().to_string();
            let bytes = field.bytes().await.map_err(|e| ApiError::BadRequest(e.body_text()))?;
            if name == image_field {
                image = Some(bytes.to_vec());
            } else {
                fields.insert(name, String::from_utf8_lossy(&bytes).into_owned());
            }
        }
    } else {
        let bytes = axum::body::to_bytes(req.into_body(), BODY_LIMIT)
            .await
            .map_err(|e| ApiError::BadRequest(e.to_string()))?;
        let body: BTreeMap<String, Value> = serde_json::from_slice(&bytes)
            .map_err(|e| ApiError::BadRequest(format!("expected a JSON object: {e}")))?;
        for (k, v) in body {
            let text = match v {
                Value::String(s) => s,
                Value::Null => continue,
                other => other.to_string(),
            };
            if k == image_field {
                image = Some(decode_base64(&text)?);
            } else {
                fields.insert(k, text);
            }
        }
    }
    let image = image.ok_or_else(|| ApiError::BadRequest(format!("missing `{image_field}` image")))?;
    Ok(Upload { image, fields })
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(ApiError::internal)?
}

async fn synthesize(
    State(state): State<Arc<AppState>>,
    req: Request,
) -> Result<Json<SynthesisResponse>, ApiError> {
    let start = Instant::now();
    let snap = state.current()?;
    let upload = read_upload(req, "sketch").await?;
    let label = upload
        .fields
        .get("label")
        .cloned()
        .ok_or_else(|| ApiError::BadRequest("missing `label`".into()))?;
    let index = snap.label_index(&label)?;
    let size = upload.size()?;
    let worker = snap.clone();
    let png = blocking(move || worker.synthesize(&upload.image, index, size)).await?;
    Ok(Json(SynthesisResponse {
        photo: STANDARD.encode(png),
        label,
        fingerprint: snap.fingerprint.clone(),
        size: size.unwrap_or(snap.image_size),
        latency_ms: start.elapsed().as_secs_f64() * 1e3,
    }))
}

async fn extract_sketch(
    State(state): State<Arc<AppState>>,
    req: Request,
) -> Result<Json<SketchResponse>, ApiError> {
    let start = Instant::now();
    let upload = read_upload(req, "photo").await?;
    let style = upload.fields.get("style").cloned().filter(|s| !s.is_empty());
    let snap = state.style(style.as_deref())?;
    let size = upload.size()?;
    let worker = snap.clone();
    let png = blocking(move || worker.extract_sketch(&upload.image, size)).await?;
    Ok(Json(SketchResponse {
        sketch: STANDARD.encode(png),
        style,
        fingerprint: snap.fingerprint.clone(),
        size: size.unwrap_or(snap.image_size),
        latency_ms: start.elapsed().as_secs_f64() * 1e3,
    }))
}

#[derive(Debug, Default, Deserialize)]
struct ReloadRequest {
    checkpoint: Option<PathBuf>,
}

/// Loads a checkpoint (or re-reads the current file) and swaps it in.
async fn reload(
    State(state): State<Arc<AppState>>,
    body: Option<Json<ReloadRequest>>,
) -> Result<Json<InfoResponse>, ApiError> {
    let requested = body.and_then(|Json(b)| b.checkpoint);
    let path = match requested {
        Some(p) => p,
        None => state.current()?.path.clone(),
    };
    let snap = blocking(move || {
        Snapshot::load(&path).map_err(|e| ApiError::BadRequest(format!("cannot load {}: {e}", path.display())))
    })
    .await?;
    log::info!("loaded checkpoint {} ({})", snap.path.display(), snap.fingerprint);
    state.set_checkpoint(snap);
    info_of(&state).map(Json)
}
