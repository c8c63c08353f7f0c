//! Local HTTP and WebSocket server exposing deformation sessions to an
//! interactive editor.
//!
//! Each session owns a mesh, its operators and a warm-started solver. Every
//! request and socket message on a session is serialized through the
//! session's lock, in arrival order.

pub mod api;
pub mod session;
pub mod stream;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::http::{HeaderValue, Method};
use axum::routing::{get, post, put};
use axum::Router;
use tokio::sync::{Mutex, RwLock};
use tower_http::cors::{AllowOrigin, CorsLayer};

pub use session::{MeshSpec, Session, SessionSummary};

pub const DEFAULT_PORT: u16 = 7878;
/// WebSocket subprotocol spoken on `/sessions/{id}/stream`.
pub const SUBPROTOCOL: &str = "deformlab.v1";

pub type SessionHandle = Arc<Mutex<Session>>;

#[derive(Clone, Default)]
pub struct AppState {
    sessions: Arc<RwLock<HashMap<String, SessionHandle>>>,
    counter: Arc<AtomicU64>,
}

impl AppState {
    pub fn new() -> Self {
        Self::default()
    }

    fn next_id(&self) -> String {
        format!("s{:06}", self.counter.fetch_add(1, Ordering::Relaxed) + 1)
    }

    async fn insert(&self, session: Session) {
        let id = session.id().to_string();
        self.sessions.write().await.insert(id, Arc::new(Mutex::new(session)));
    }

    pub async fn session_count(&self) -> usize {
        self.sessions.read().await.len()
    }
}

fn is_local_origin(origin: &HeaderValue) -> bool {
    let Ok(origin) = origin.to_str() else { return false };
    let host = origin.split("://").nth(1).unwrap_or("");
    let host = host.rsplit_once(':').map_or(host, |(h, port)| if port.chars().all(|c| c.is_ascii_digit()) { h } else { host });
    matches!(host, "localhost" | "127.0.0.1" | "[::1]")
}

pub fn router(state: AppState) -> Router {
    let cors = CorsLayer::new()
        .allow_origin(AllowOrigin::predicate(|origin, _| is_local_origin(origin)))
        .allow_methods([Method::GET, Method::POST, Method::PUT, Method::DELETE])
        .allow_headers([axum::http::header::CONTENT_TYPE]);
    Router::new()
        .route("/sessions", post(api::create_session))
        .route("/sessions/{id}", get(api::get_session).delete(api::delete_session))
        .route("/sessions/{id}/mesh", get(api::get_mesh))
        .route("/sessions/{id}/state", get(api::get_state))
        .route("/sessions/{id}/constraints", put(api::put_constraints))
        .route("/sessions/{id}/config", put(api::put_config))
        .route("/sessions/{id}/iterate", post(api::iterate))
        .route("/sessions/{id}/stream", get(stream::upgrade))
        .layer(cors)
        .with_state(state)
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new())).await
}
