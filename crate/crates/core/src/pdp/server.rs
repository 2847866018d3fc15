use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use super::config::ServiceConfig;
use super::metrics::Metrics;
use super::wire::{WireRequest, WireResponse};
use crate::policy::{Action, Engine, EngineMode, PolicyError};
use crate::store::{SharedStore, Store, StoreError};

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("binding {addr}: {source}")]
    Bind {
        addr: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub struct PdpState {
    pub store: SharedStore,
    pub engine: Engine,
    pub lock_timeout: Duration,
    pub metrics: Metrics,
}

impl PdpState {
    pub fn new(store: SharedStore, mode: EngineMode, lock_timeout: Duration) -> Self {
        Self {
            store,
            engine: Engine::new(mode),
            lock_timeout,
            metrics: Metrics::default(),
        }
    }
}

type Shared = Arc<PdpState>;

pub fn router(state: Arc<PdpState>) -> Router {
    Router::new()
        .route("/v1/decide", post(decide))
        .route("/v1/verify-chain", post(verify_chain))
        .route("/v1/health", get(health))
        .route("/v1/metrics", get(metrics))
        .with_state(state)
}

async fn decide(State(state): State<Shared>, body: Bytes) -> Response {
    handle(&state, body, &[Action::Read, Action::Write])
}

async fn verify_chain(State(state): State<Shared>, body: Bytes) -> Response {
    handle(&state, body, &[Action::VerifyChain])
}

async fn health(State(state): State<Shared>) -> Response {
    let seq = state.store.read().seq();
    Json(json!({
        "status": "ok",
        "mode": state.engine.mode(),
        "store_seq": seq,
    }))
    .into_response()
}

async fn metrics(State(state): State<Shared>) -> Response {
    Json(state.metrics.snapshot()).into_response()
}

fn error(status: StatusCode, request_id: Option<&str>, message: impl ToString) -> Response {
    (
        status,
        Json(json!({ "request_id": request_id, "error": message.to_string() })),
    )
        .into_response()
}

fn handle(state: &PdpState, body: Bytes, accepted: &[Action]) -> Response {
    let start = Instant::now();
    let response = decide_bytes(state, &body, accepted, start);
    if !response.status().is_success() {
        state.metrics.record_error();
    }
    response
}

fn decide_bytes(state: &PdpState, body: &[u8], accepted: &[Action], start: Instant) -> Response {
    let wire: WireRequest = match serde_json::from_slice(body) {
        Ok(w) => w,
        Err(e) => return error(StatusCode::BAD_REQUEST, None, e),
    };
    let id = Some(wire.request_id.as_str());
    if !accepted.contains(&wire.action) {
        return error(
            StatusCode::BAD_REQUEST,
            id,
            format!("action {:?} not served on this endpoint", wire.action),
        );
    }
    let request = match wire.to_access_request() {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, id, e),
    };
    let Some(store) = state.store.try_read_for(state.lock_timeout) else {
        return error(StatusCode::SERVICE_UNAVAILABLE, id, "store busy");
    };
    let decision = match state.engine.timed_evaluate(&request, &store) {
        Ok(d) => d,
        Err(e @ PolicyError::UnknownResource(_)) => return error(StatusCode::NOT_FOUND, id, e),
        Err(e @ PolicyError::InvalidSubject(_)) => return error(StatusCode::BAD_REQUEST, id, e),
        Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, id, e),
    };
    drop(store);
    state
        .metrics
        .record(decision.outcome, decision.evaluation_time);
    let total = start.elapsed().as_nanos() as u64;
    Json(WireResponse::from_decision(
        wire.request_id,
        decision,
        state.engine.mode(),
        total,
    ))
    .into_response()
}

/// A service running on a background task.
pub struct RunningService {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    task: JoinHandle<std::io::Result<()>>,
}

impl RunningService {
    pub fn endpoint(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub async fn shutdown(mut self) -> std::io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        self.task.await.map_err(std::io::Error::other)?
    }
}

/// Binds `addr` (use port 0 for an ephemeral port) and serves `store` on
/// the current runtime.
pub async fn spawn(
    store: SharedStore,
    mode: EngineMode,
    lock_timeout: Duration,
    addr: &str,
) -> Result<RunningService, ServeError> {
    let listener = TcpListener::bind(addr)
        .await
        .map_err(|source| ServeError::Bind {
            addr: addr.to_string(),
            source,
        })?;
    let addr = listener.local_addr()?;
    let app = router(Arc::new(PdpState::new(store, mode, lock_timeout)));
    let (tx, rx) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
    });
    Ok(RunningService {
        addr,
        shutdown: Some(tx),
        task,
    })
}

/// Opens the store named in `config` and serves it until the process ends.
pub async fn serve(config: ServiceConfig) -> Result<(), ServeError> {
    let store = Store::open(&config.store_path)?.into_shared();
    let running = spawn(
        store,
        config.engine_mode,
        config.timeout(),
        &config.listen_addr,
    )
    .await?;
    running.task.await.map_err(std::io::Error::other)??;
    Ok(())
}
