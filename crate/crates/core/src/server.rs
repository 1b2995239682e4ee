//! HTTP front for a run: server-sent event stream, status, and operator commands.
//!
//! - `GET /events` streams every recorded event as one SSE message (history
//!   first, then live batches). Dropped batches arrive as an `event: gap`
//!   message whose data is `{"dropped": <count>}`.
//! - `GET /status` returns `{run_id, epoch, threshold, connected_consumers}`.
//! - `POST /command` with `{"set_threshold": <float>}` stages a new plateau
//!   threshold for the next epoch boundary.

use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::mpsc::Sender;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::monitor::validate_threshold;
use crate::telemetry::{StreamHub, StreamItem, Subscription};

/// Operator commands delivered to the training loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EngineCommand {
    SetThreshold(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStatus {
    pub run_id: String,
    pub epoch: usize,
    pub threshold: f64,
    pub connected_consumers: usize,
}

/// State shared between the training loop and the HTTP handlers.
pub struct EngineControl {
    run_id: String,
    progress: Mutex<(usize, f64)>,
    commands: Mutex<Option<Sender<EngineCommand>>>,
}

impl EngineControl {
    pub fn new(run_id: impl Into<String>, threshold: f64) -> Arc<Self> {
        Arc::new(Self {
            run_id: run_id.into(),
            progress: Mutex::new((0, threshold)),
            commands: Mutex::new(None),
        })
    }

    /// Routes `POST /command` to `sender`. Without one, commands are refused.
    pub fn attach_commands(&self, sender: Sender<EngineCommand>) {
        *self.commands.lock().unwrap() = Some(sender);
    }

    pub fn detach_commands(&self) {
        self.commands.lock().unwrap().take();
    }

    pub fn set_progress(&self, epoch: usize, threshold: f64) {
        *self.progress.lock().unwrap() = (epoch, threshold);
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn status(&self, hub: &StreamHub) -> RunStatus {
        let (epoch, threshold) = *self.progress.lock().unwrap();
        RunStatus {
            run_id: self.run_id.clone(),
            epoch,
            threshold,
            connected_consumers: hub.connected_consumers(),
        }
    }

    fn submit(&self, command: EngineCommand) -> bool {
        match &*self.commands.lock().unwrap() {
            Some(tx) => tx.send(command).is_ok(),
            None => false,
        }
    }
}

#[derive(Clone)]
struct AppState {
    hub: Arc<StreamHub>,
    control: Arc<EngineControl>,
}

pub fn router(hub: Arc<StreamHub>, control: Arc<EngineControl>) -> Router {
    Router::new()
        .route("/events", get(events))
        .route("/status", get(status))
        .route("/command", post(command))
        .with_state(AppState { hub, control })
}

fn sse_messages(item: StreamItem) -> Vec<Result<Event, Infallible>> {
    match item {
        StreamItem::Events(batch) => batch
            .iter()
            .map(|e| Ok(Event::default().data(e.to_json_line())))
            .collect(),
        StreamItem::Gap { dropped } => vec![Ok(Event::default()
            .event("gap")
            .data(json!({ "dropped": dropped }).to_string()))],
    }
}

fn subscription_stream(sub: Subscription) -> impl Stream<Item = Result<Event, Infallible>> {
    stream::unfold(sub, |sub| async move {
        let item = sub.next().await?;
        Some((stream::iter(sse_messages(item)), sub))
    })
    .flatten()
}

async fn events(State(state): State<AppState>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let sub = state.hub.subscribe();
    Sse::new(subscription_stream(sub)).keep_alive(KeepAlive::new().interval(Duration::from_secs(15)))
}

async fn status(State(state): State<AppState>) -> Json<RunStatus> {
    Json(state.control.status(&state.hub))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CommandBody {
    set_threshold: f64,
}

fn error_reply(code: StatusCode, message: impl Into<String>) -> Response {
    (code, Json(json!({ "error": message.into() }))).into_response()
}

async fn command(State(state): State<AppState>, body: axum::body::Bytes) -> Response {
    let parsed: CommandBody = match serde_json::from_slice(&body) {
        Ok(b) => b,
        Err(e) => return error_reply(StatusCode::BAD_REQUEST, format!("invalid command: {e}")),
    };
    if let Err(e) = validate_threshold(parsed.set_threshold) {
        return error_reply(StatusCode::BAD_REQUEST, e.to_string());
    }
    if !state.control.submit(EngineCommand::SetThreshold(parsed.set_threshold)) {
        return error_reply(StatusCode::CONFLICT, "no training run is accepting commands");
    }
    (StatusCode::OK, Json(json!({ "threshold": parsed.set_threshold }))).into_response()
}

/// Background HTTP server on its own runtime thread.
pub struct TelemetryServer {
    addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    handle: Option<JoinHandle<()>>,
}

/// How long open connections may finish after shutdown is requested.
const SHUTDOWN_GRACE: Duration = Duration::from_millis(250);

impl TelemetryServer {
    /// Binds `addr` (port 0 picks a free port) and starts serving.
    pub fn start(addr: SocketAddr, hub: Arc<StreamHub>, control: Arc<EngineControl>) -> Result<Self> {
        let listener = std::net::TcpListener::bind(addr).map_err(|e| Error::io(addr.to_string(), e))?;
        let local = listener.local_addr().map_err(|e| Error::io(addr.to_string(), e))?;
        listener
            .set_nonblocking(true)
            .map_err(|e| Error::io(addr.to_string(), e))?;
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .thread_name("telemetry-http")
            .enable_all()
            .build()
            .map_err(|e| Error::io(addr.to_string(), e))?;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let app = router(hub, control);
        let handle = std::thread::Builder::new()
            .name("telemetry-server".into())
            .spawn(move || {
                runtime.block_on(async move {
                    let listener = match tokio::net::TcpListener::from_std(listener) {
                        Ok(l) => l,
                        Err(e) => {
                            log::error!("telemetry server failed to start: {e}");
                            return;
                        }
                    };
                    // Graceful, so streams the hub has already ended flush
                    // their final chunk; anything still open gets a short grace.
                    let stopping = Arc::new(tokio::sync::Notify::new());
                    let signal = Arc::clone(&stopping);
                    let serve = axum::serve(listener, app)
                        .with_graceful_shutdown(async move {
                            let _ = rx.await;
                            signal.notify_one();
                        });
                    tokio::select! {
                        res = serve => {
                            if let Err(e) = res {
                                log::error!("telemetry server stopped: {e}");
                            }
                        }
                        _ = async {
                            stopping.notified().await;
                            tokio::time::sleep(SHUTDOWN_GRACE).await;
                        } => {}
                    }
                });
                runtime.shutdown_timeout(Duration::from_secs(1));
            })
            .map_err(|e| Error::io("telemetry-server thread", e))?;
        Ok(Self {
            addr: local,
            shutdown: Some(tx),
            handle: Some(handle),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops the server; connections still open after a short grace are dropped.
    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for TelemetryServer {
    fn drop(&mut self) {
        self.stop();
    }
}
