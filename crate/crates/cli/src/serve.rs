//! WebSocket endpoint for live sessions, plus static assets.
//!
//! The simulation runs on its own thread and owns all simulation state.
//! Commands reach it through an mpsc queue; state frames leave through a
//! broadcast channel. The loop starts with the first successful `hello`.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::mpsc;
use std::sync::{Arc, Mutex, OnceLock};
use std::thread;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{Html, IntoResponse};
use axum::routing::get;
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use sharedwalk::behmap::plan_mission;
use sharedwalk::control::HumanInput;
use sharedwalk::harness::Artefacts;
use sharedwalk::harness::{
    run_live, session_info, ConnectionId, DriverCommand, ErrorCode, ExternalPolicy, HumanPolicy,
    ReplayPolicy, RunSettings, ServerMessage, SessionHub, DEFAULT_TAU_MAX,
};
use tokio::net::TcpListener;
use tokio::sync::broadcast;
use tower_http::services::ServeDir;

const PLACEHOLDER_INDEX: &str = include_str!("../assets/index.html");

pub struct ServeOptions {
    pub addr: SocketAddr,
    /// Directory of cockpit files; a placeholder page otherwise.
    pub assets: Option<PathBuf>,
    pub settings: RunSettings,
    pub tau_max: f64,
    /// Recorded human inputs to play back instead of a live driver.
    pub replay: Option<Vec<HumanInput>>,
    /// Pace the loop to wall-clock time.
    pub realtime: bool,
}

impl ServeOptions {
    pub fn new(addr: SocketAddr, settings: RunSettings) -> Self {
        Self {
            addr,
            assets: None,
            settings,
            tau_max: DEFAULT_TAU_MAX,
            replay: None,
            realtime: true,
        }
    }
}

struct Shared {
    hub: Mutex<SessionHub>,
    frames: broadcast::Sender<Arc<str>>,
    start: Mutex<Option<Box<dyn FnOnce() + Send>>>,
    /// The `finished` frame, for clients arriving after the run.
    finished: Arc<OnceLock<Arc<str>>>,
}

impl Shared {
    fn start_loop(&self) {
        if let Some(f) = self.start.lock().expect("start lock").take() {
            f();
        }
    }
}

/// Binds and returns the bound address with the server future.
pub async fn bind(
    art: Artefacts,
    opts: ServeOptions,
) -> anyhow::Result<(
    SocketAddr,
    impl std::future::Future<Output = std::io::Result<()>>,
)> {
    let mission = plan_mission(
        &art.grid,
        &art.roadmap,
        &art.behmap,
        &art.ae,
        &art.head,
        opts.settings.p0,
        opts.settings.pf,
    )?;
    let info = session_info(
        &art,
        &mission,
        &opts.settings,
        opts.tau_max,
        opts.replay.is_some(),
    );
    let (cmd_tx, cmd_rx) = mpsc::channel::<DriverCommand>();
    let (frames, _) = broadcast::channel::<Arc<str>>(1024);
    let finished = Arc::new(OnceLock::new());

    let loop_frames = frames.clone();
    let loop_finished = finished.clone();
    let settings = opts.settings.clone();
    let replay = opts.replay;
    let realtime = opts.realtime;
    let start: Box<dyn FnOnce() + Send> = Box::new(move || {
        thread::spawn(move || {
            let policy: Box<dyn HumanPolicy> = match replay {
                Some(inputs) => Box::new(ReplayPolicy::new(inputs)),
                None => Box::new(ExternalPolicy::new(cmd_rx)),
            };
            let result = run_live(&art, &settings, policy, realtime, |msg| {
                let text: Arc<str> = msg.to_json().into();
                if matches!(msg, ServerMessage::Finished { .. }) {
                    let _ = loop_finished.set(text.clone());
                }
                // no subscribers is fine; the run goes on
                let _ = loop_frames.send(text);
                true
            });
            if let Err(e) = result {
                let text: Arc<str> = ServerMessage::error(ErrorCode::Internal, e.to_string())
                    .to_json()
                    .into();
                let _ = loop_frames.send(text);
            }
        });
    });

    let shared = Arc::new(Shared {
        hub: Mutex::new(SessionHub::new(info, cmd_tx)),
        frames,
        start: Mutex::new(Some(start)),
        finished,
    });
    let mut app = Router::new().route("/ws", get(upgrade));
    app = match opts.assets {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.route("/", get(|| async { Html(PLACEHOLDER_INDEX) })),
    };
    let app = app.with_state(shared);
    let listener = TcpListener::bind(opts.addr).await?;
    let addr = listener.local_addr()?;
    Ok((addr, async move { axum::serve(listener, app).await }))
}

async fn upgrade(ws: WebSocketUpgrade, State(shared): State<Arc<Shared>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| session(socket, shared))
}

async fn session(socket: WebSocket, shared: Arc<Shared>) {
    let id = shared.hub.lock().expect("hub lock").connect();
    let (mut tx, mut rx) = socket.split();
    let mut frames: Option<broadcast::Receiver<Arc<str>>> = None;
    loop {
        tokio::select! {
            inbound = rx.next() => {
                let text = match inbound {
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Binary(_))) => {
                        let e = ServerMessage::error(ErrorCode::Malformed, "frames must be JSON text");
                        if tx.send(Message::Text(e.to_json().into())).await.is_err() { break; }
                        continue;
                    }
                    Some(Ok(_)) => continue,
                    _ => break,
                };
                let reply = handle(&shared, id, &text, &mut frames);
                for r in reply {
                    if tx.send(Message::Text(r.as_ref().into())).await.is_err() { break; }
                }
            }
            frame = next_frame(&mut frames) => {
                match frame {
                    Ok(text) => {
                        if tx.send(Message::Text(text.as_ref().into())).await.is_err() { break; }
                    }
                    // a slow client skips frames but never sees them out of order
                    Err(broadcast::error::RecvError::Lagged(_)) => {}
                    Err(broadcast::error::RecvError::Closed) => frames = None,
                }
            }
        }
    }
    shared.hub.lock().expect("hub lock").disconnect(id);
}

fn handle(
    shared: &Shared,
    id: ConnectionId,
    text: &str,
    frames: &mut Option<broadcast::Receiver<Arc<str>>>,
) -> Vec<Arc<str>> {
    let reply = shared.hub.lock().expect("hub lock").handle(id, text);
    let Some(reply) = reply else {
        return Vec::new();
    };
    let welcomed = matches!(reply, ServerMessage::Welcome { .. });
    let mut out: Vec<Arc<str>> = vec![reply.to_json().into()];
    if welcomed {
        match shared.finished.get() {
            Some(f) => out.push(f.clone()),
            None => {
                // subscribe before starting so the first frame is not missed
                *frames = Some(shared.frames.subscribe());
                shared.start_loop();
            }
        }
    }
    out
}

async fn next_frame(
    frames: &mut Option<broadcast::Receiver<Arc<str>>>,
) -> Result<Arc<str>, broadcast::error::RecvError> {
    match frames {
        Some(rx) => rx.recv().await,
        None => std::future::pending().await,
    }
}
