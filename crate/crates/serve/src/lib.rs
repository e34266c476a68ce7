//! HTTP and WebSocket front end for a teleop [`Session`].
//!
//! One thread owns the session and steps it at 200 Hz (wall-clock paced, or as
//! fast as possible). Clients talk to it only through channels: commands go in
//! over an mpsc queue, serialized snapshots come out over a broadcast channel.
//! A client that falls behind loses snapshots; the loss is counted and reported
//! in `link.state_dropped`.
//!
//! Endpoints: `GET /health`, `GET /config`, `GET /ws` (upgrade), and optionally a
//! static directory for everything else.

use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use legtwin::teleop::{
    command_ingest, ScriptEntry, SchemaError, ServerMessage, Session, TeleopCommand, SCHEMA_VERSION,
};
use legtwin::Config;
use serde_json::{json, Value};
use tokio::sync::{broadcast, mpsc, oneshot, watch};
use tower_http::services::ServeDir;

/// Snapshots buffered per client before it starts losing them.
const CLIENT_BACKLOG: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pacing {
    #[default]
    RealTime,
    /// No sleeping between ticks.
    Fast,
}

#[derive(Debug, Clone, Default)]
pub struct ServeOptions {
    /// Effective parameters; also what `GET /config` reports.
    pub config: Config,
    pub pacing: Pacing,
    pub static_dir: Option<PathBuf>,
    /// Commands applied at fixed session times, as if a client sent them.
    pub script: Vec<ScriptEntry>,
    /// Stop stepping after this many ticks; the server keeps answering.
    pub max_ticks: Option<u64>,
}

type CommandMsg = (TeleopCommand, oneshot::Sender<Result<(), SchemaError>>);

#[derive(Clone)]
struct AppState {
    config: Arc<Value>,
    commands: mpsc::Sender<CommandMsg>,
    states: broadcast::Sender<Arc<str>>,
    tick: Arc<AtomicU64>,
    state_dropped: Arc<AtomicU64>,
    closing: watch::Receiver<bool>,
}

pub struct RunningServer {
    pub addr: SocketAddr,
    stop: Arc<AtomicBool>,
    world: Option<thread::JoinHandle<()>>,
    http: tokio::task::JoinHandle<io::Result<()>>,
    closing: watch::Sender<bool>,
}

impl RunningServer {
    pub async fn shutdown(mut self) -> io::Result<()> {
        self.stop.store(true, Ordering::Relaxed);
        let _ = self.closing.send(true);
        if let Some(world) = self.world.take() {
            let _ = tokio::task::spawn_blocking(move || world.join()).await;
        }
        self.http.await.map_err(io::Error::other)?
    }

    /// Serves until the HTTP server stops.
    pub async fn wait(mut self) -> io::Result<()> {
        let http = &mut self.http;
        let r = http.await.map_err(io::Error::other)?;
        self.stop.store(true, Ordering::Relaxed);
        r
    }
}

/// Binds `addr` (port 0 picks a free one) and starts the world loop.
pub async fn start(opts: ServeOptions, addr: SocketAddr) -> io::Result<RunningServer> {
    let robot = opts
        .config
        .robot_config()
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;
    let session = Session::new(robot, opts.config.gait, opts.config.link)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;
    if opts.script.windows(2).any(|w| w[1].t < w[0].t) {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            "script entries are not sorted by t",
        ));
    }

    let mut config = serde_json::to_value(opts.config).map_err(io::Error::other)?;
    config["v"] = json!(SCHEMA_VERSION);
    let (closing_tx, closing_rx) = watch::channel(false);
    let (cmd_tx, cmd_rx) = mpsc::channel(64);
    let (state_tx, _) = broadcast::channel(CLIENT_BACKLOG);
    let state = AppState {
        config: Arc::new(config),
        commands: cmd_tx,
        states: state_tx.clone(),
        tick: Arc::new(AtomicU64::new(0)),
        state_dropped: Arc::new(AtomicU64::new(0)),
        closing: closing_rx.clone(),
    };
    let stop = Arc::new(AtomicBool::new(false));

    let world = {
        let ctx = WorldLoop {
            session,
            commands: cmd_rx,
            states: state_tx,
            tick: state.tick.clone(),
            state_dropped: state.state_dropped.clone(),
            stop: stop.clone(),
            pacing: opts.pacing,
            script: opts.script,
            max_ticks: opts.max_ticks,
        };
        thread::Builder::new()
            .name("legtwin-world".into())
            .spawn(move || ctx.run())?
    };

    let mut app = Router::new()
        .route("/health", get(health))
        .route("/config", get(config_handler))
        .route("/ws", get(ws_handler))
        .with_state(state);
    if let Some(dir) = opts.static_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }

    let listener = tokio::net::TcpListener::bind(addr).await?;
    let addr = listener.local_addr()?;
    let mut closing = closing_rx;
    let http = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async move {
                let _ = closing.changed().await;
            })
            .await
    });
    tracing::info!(%addr, "serving");
    Ok(RunningServer {
        addr,
        stop,
        world: Some(world),
        http,
        closing: closing_tx,
    })
}

struct WorldLoop {
    session: Session,
    commands: mpsc::Receiver<CommandMsg>,
    states: broadcast::Sender<Arc<str>>,
    tick: Arc<AtomicU64>,
    state_dropped: Arc<AtomicU64>,
    stop: Arc<AtomicBool>,
    pacing: Pacing,
    script: Vec<ScriptEntry>,
    max_ticks: Option<u64>,
}

impl WorldLoop {
    fn run(mut self) {
        let dt = Duration::from_secs_f64(self.session.config().dt);
        let start = Instant::now();
        let mut next_script = 0;
        let mut ticks = 0u64;
        while !self.stop.load(Ordering::Relaxed) {
            // Drain in arrival order; the last one wins.
            while let Ok((cmd, reply)) = self.commands.try_recv() {
                let _ = reply.send(self.session.set_command(cmd));
            }
            if self.max_ticks.is_some_and(|m| ticks >= m) {
                thread::sleep(Duration::from_millis(5));
                continue;
            }
            let t = self.session.world().t;
            while next_script < self.script.len() && self.script[next_script].t <= t + 1e-12 {
                if let Err(e) = self.session.set_command(self.script[next_script].command) {
                    tracing::warn!(index = next_script, error = %e, "script command rejected");
                }
                next_script += 1;
            }
            self.session.state_dropped = self.state_dropped.load(Ordering::Relaxed);
            match self.session.step() {
                Ok(Some(update)) => {
                    let text: Arc<str> = serde_json::to_string(&ServerMessage::State(update))
                        .expect("state serializes")
                        .into();
                    // No subscribers is fine.
                    let _ = self.states.send(text);
                }
                Ok(None) => {}
                Err(e) => {
                    tracing::error!(error = %e, "world step failed; stopping");
                    break;
                }
            }
            ticks += 1;
            self.tick.store(ticks, Ordering::Relaxed);
            match self.pacing {
                Pacing::RealTime => {
                    let due = start + dt.mul_f64(ticks as f64);
                    if let Some(wait) = due.checked_duration_since(Instant::now()) {
                        thread::sleep(wait);
                    }
                }
                Pacing::Fast => {
                    if ticks.is_multiple_of(64) {
                        thread::yield_now();
                    }
                }
            }
        }
    }
}

async fn health(State(s): State<AppState>) -> Json<Value> {
    Json(json!({
        "v": SCHEMA_VERSION,
        "status": "ok",
        "tick": s.tick.load(Ordering::Relaxed),
    }))
}

async fn config_handler(State(s): State<AppState>) -> Json<Value> {
    Json((*s.config).clone())
}

async fn ws_handler(ws: WebSocketUpgrade, State(s): State<AppState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| client(socket, s))
}

fn error_text(e: SchemaError) -> String {
    serde_json::to_string(&ServerMessage::from(e)).expect("error serializes")
}

async fn client(socket: WebSocket, s: AppState) {
    let (mut tx, mut rx) = socket.split();
    let mut states = s.states.subscribe();
    let mut closing = s.closing.clone();
    loop {
        tokio::select! {
            _ = closing.changed() => {
                let _ = tx.send(Message::Close(None)).await;
                break;
            }
            update = states.recv() => match update {
                Ok(text) => {
                    if tx.send(Message::Text(text.as_ref().into())).await.is_err() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    s.state_dropped.fetch_add(n, Ordering::Relaxed);
                }
                Err(broadcast::error::RecvError::Closed) => break,
            },
            msg = rx.next() => {
                let text = match msg {
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Binary(_))) => {
                        let e = SchemaError { path: String::new(), message: "expected a JSON text message".into() };
                        if tx.send(Message::Text(error_text(e).into())).await.is_err() {
                            break;
                        }
                        continue;
                    }
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                let outcome = match command_ingest(text.as_str()) {
                    Ok(cmd) => {
                        let (reply_tx, reply_rx) = oneshot::channel();
                        if s.commands.send((cmd, reply_tx)).await.is_err() {
                            break;
                        }
                        reply_rx.await.unwrap_or(Ok(()))
                    }
                    Err(e) => Err(e),
                };
                if let Err(e) = outcome {
                    if tx.send(Message::Text(error_text(e).into())).await.is_err() {
                        break;
                    }
                }
            }
        }
    }
}
