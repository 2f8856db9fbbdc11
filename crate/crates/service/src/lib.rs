//! HTTP inference over trained checkpoints: sketch to photo, photo to
//! sketch, and a description of the loaded vocabulary for UI clients.

mod api;
mod error;
mod snapshot;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::http::{HeaderValue, Method};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

pub use api::{
    router, AppState, ClassEntry, InfoResponse, SketchResponse, SynthesisResponse, BODY_LIMIT,
};
pub use error::ApiError;
pub use snapshot::{Snapshot, MAX_OUTPUT_SIZE};

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub host: String,
    pub port: u16,
    pub checkpoint: Option<PathBuf>,
    pub styles: Vec<(String, PathBuf)>,
    /// Allowed browser origins; empty allows any.
    pub cors_origins: Vec<String>,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            checkpoint: None,
            styles: Vec::new(),
            cors_origins: Vec::new(),
        }
    }
}

/// Parses `id=path`.
pub fn parse_style(spec: &str) -> Result<(String, PathBuf), String> {
    match spec.split_once('=') {
        Some((id, path)) if !id.is_empty() && !path.is_empty() => Ok((id.to_string(), path.into())),
        _ => Err(format!("style must look like `id=path`, got `{spec}`")),
    }
}

pub fn cors_layer(origins: &[String]) -> Result<CorsLayer, String> {
    let allow = if origins.is_empty() {
        AllowOrigin::from(Any)
    } else {
        let values = origins
            .iter()
            .map(|o| HeaderValue::from_str(o).map_err(|_| format!("invalid CORS origin `{o}`")))
            .collect::<Result<Vec<_>, _>>()?;
        AllowOrigin::list(values)
    };
    Ok(CorsLayer::new()
        .allow_origin(allow)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers(Any))
}

/// Loads the configured checkpoints into a fresh state.
pub fn load_state(config: &ServeConfig) -> s2p_core::Result<Arc<AppState>> {
    let state = Arc::new(AppState::new());
    if let Some(path) = &config.checkpoint {
        state.set_checkpoint(Snapshot::load(path)?);
    }
    for (id, path) in &config.styles {
        state.add_style(id.clone(), Snapshot::load(path)?);
    }
    Ok(state)
}

/// Binds and serves until Ctrl-C.
pub async fn serve(config: ServeConfig) -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    let state = load_state(&config)?;
    let app = router(state, cors_layer(&config.cors_origins)?);
    let addr: SocketAddr = format!("{}:{}", config.host, config.port).parse()?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
