//! HTTP/JSON API over the risk advisor and the uniqueness estimator.
//!
//! One population (or one user's audience table) is loaded at start and shared
//! read-only. Removal sessions live in memory, one per user, and are lost on
//! restart. Every route is served under both `/api` and `/api/v1`.

mod error;
mod routes;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::http::{HeaderValue, Method};
use axum::Router;
use nanoscope_core::estimator::{BootstrapSettings, UniquenessReport};
use nanoscope_core::index::{build_index, InvertedIndex};
use nanoscope_core::population::Population;
use nanoscope_core::risk::{AudienceTable, ProfileSession, RiskThresholds};
use nanoscope_core::UserId;
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::ServeDir;

pub use error::{ApiError, ErrorBody};

/// What the server answers questions about.
pub enum Source {
    Population {
        population: Arc<Population>,
        index: Arc<InvertedIndex>,
    },
    /// A single user's interests with their audiences and no population;
    /// what-if and report endpoints are unavailable.
    Table {
        user_id: UserId,
        table: Arc<AudienceTable>,
    },
}

impl Source {
    pub fn population(population: Population) -> nanoscope_core::Result<Self> {
        let index = build_index(&population)?;
        Ok(Source::Population {
            population: Arc::new(population),
            index: Arc::new(index),
        })
    }

    pub fn digest(&self) -> String {
        match self {
            Source::Population { index, .. } => index.population_digest().to_string(),
            Source::Table { table, .. } => table.digest(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ServerConfig {
    /// Allowed browser origins. Empty means any `localhost`/`127.0.0.1` origin.
    pub cors_origins: Vec<String>,
    /// Directory of static files served at `/` (the web UI build), if any.
    pub static_dir: Option<PathBuf>,
    pub thresholds: RiskThresholds,
    /// Master seed of the random selection strategy.
    pub strategy_seed: u64,
    pub bootstrap: BootstrapSettings,
}

pub struct AppState {
    source: Source,
    config: ServerConfig,
    sessions: Mutex<HashMap<UserId, ProfileSession>>,
    reports: tokio::sync::Mutex<HashMap<String, Arc<UniquenessReport>>>,
}

impl AppState {
    pub fn new(source: Source, config: ServerConfig) -> Arc<Self> {
        Arc::new(AppState {
            source,
            config,
            sessions: Mutex::new(HashMap::new()),
            reports: tokio::sync::Mutex::new(HashMap::new()),
        })
    }
}

fn cors(origins: &[String]) -> CorsLayer {
    let allow = if origins.is_empty() {
        AllowOrigin::predicate(|origin: &HeaderValue, _| {
            let Ok(origin) = origin.to_str() else { return false };
            let host = origin
                .strip_prefix("http://")
                .or_else(|| origin.strip_prefix("https://"))
                .unwrap_or("");
            let host = host.rsplit_once(':').map_or(host, |(h, port)| {
                if port.chars().all(|c| c.is_ascii_digit()) { h } else { host }
            });
            matches!(host, "localhost" | "127.0.0.1" | "[::1]")
        })
    } else {
        AllowOrigin::list(origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()))
    };
    CorsLayer::new()
        .allow_origin(allow)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([axum::http::header::CONTENT_TYPE])
}

pub fn router(state: Arc<AppState>) -> Router {
    let api = routes::api();
    let mut app = Router::new()
        .nest("/api", api.clone())
        .nest("/api/v1", api)
        .layer(cors(&state.config.cors_origins));
    if let Some(dir) = &state.config.static_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    app.with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
