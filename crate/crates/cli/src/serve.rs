use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use magsteer::harness::{replay_paced, LiveSession, ServerFrame};
use magsteer::sim::TrialLog;
use tokio::sync::{broadcast, mpsc, watch};
use tower_http::services::ServeDir;

pub struct ServeOptions {
    pub addr: SocketAddr,
    pub speed: f64,
    pub out_dir: PathBuf,
    pub static_dir: Option<PathBuf>,
}

type Frame = Arc<str>;

/// A client message with the route back to its sender.
struct Inbound {
    text: String,
    reply: mpsc::Sender<Frame>,
}

#[derive(Clone)]
struct LiveState {
    frames: broadcast::Sender<Frame>,
    hello: watch::Receiver<Frame>,
    inbox: mpsc::Sender<Inbound>,
}

fn frame(f: &ServerFrame) -> Frame {
    Arc::from(f.to_json())
}

async fn bind(addr: SocketAddr) -> anyhow::Result<tokio::net::TcpListener> {
    match tokio::net::TcpListener::bind(addr).await {
        Ok(l) => Ok(l),
        Err(e) if e.kind() == std::io::ErrorKind::AddrInUse => Err(anyhow!("port busy: {addr} is already in use")),
        Err(e) => Err(e).with_context(|| format!("cannot bind {addr}")),
    }
}

fn runtime() -> anyhow::Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting async runtime")
}

fn write_logs(dir: &std::path::Path, logs: Vec<TrialLog>, counter: &mut usize) {
    for log in logs {
        *counter += 1;
        let path = dir.join(format!("session{:03}_{}_seed{}.jsonl", *counter, log.header.policy, log.header.seed));
        let result = std::fs::create_dir_all(dir).and_then(|_| std::fs::write(&path, log.to_jsonl()));
        match result {
            Ok(()) => log::info!("wrote {}", path.display()),
            Err(e) => log::warn!("cannot write {}: {e}", path.display()),
        }
    }
}

/// The single writer: applies queued client messages, advances the
/// session once per period and broadcasts the snapshot.
fn sim_loop(
    mut session: LiveSession,
    mut inbox: mpsc::Receiver<Inbound>,
    frames: broadcast::Sender<Frame>,
    hello: watch::Sender<Frame>,
    period: Duration,
    out_dir: PathBuf,
    stop: Arc<AtomicBool>,
) {
    let mut written = 0;
    let start = Instant::now();
    let mut k: u32 = 0;
    while !stop.load(Ordering::Relaxed) {
        while let Ok(msg) = inbox.try_recv() {
            if let Some(err) = session.handle_text(&msg.text) {
                let _ = msg.reply.try_send(frame(&err));
            }
        }
        let snap = session.step();
        let _ = frames.send(frame(&ServerFrame::Snapshot(Box::new(snap))));
        let logs = session.take_finished_logs();
        if !logs.is_empty() {
            write_logs(&out_dir, logs, &mut written);
            hello.send_replace(frame(&session.hello()));
        }
        k = k.wrapping_add(1);
        let due = start + period * k;
        let now = Instant::now();
        if due > now {
            std::thread::sleep(due - now);
        }
    }
    let log = session.current_log();
    if !log.records.is_empty() && log.footer.is_none() {
        write_logs(&out_dir, vec![log], &mut written);
    }
}

async fn live_ws(ws: WebSocketUpgrade, State(state): State<LiveState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| live_client(socket, state))
}

async fn live_client(socket: WebSocket, state: LiveState) {
    let (mut tx, mut rx) = socket.split();
    let (reply_tx, mut reply_rx) = mpsc::channel::<Frame>(16);
    let mut frames = state.frames.subscribe();
    let hello = state.hello.borrow().clone();
    if tx.send(Message::Text(hello.as_ref().into())).await.is_err() {
        return;
    }
    loop {
        tokio::select! {
            f = frames.recv() => match f {
                Ok(f) => {
                    if tx.send(Message::Text(f.as_ref().into())).await.is_err() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => log::debug!("client skipped {n} frames"),
                Err(broadcast::error::RecvError::Closed) => break,
            },
            Some(f) = reply_rx.recv() => {
                if tx.send(Message::Text(f.as_ref().into())).await.is_err() {
                    break;
                }
            }
            msg = rx.next() => match msg {
                Some(Ok(Message::Text(text))) => {
                    let inbound = Inbound { text: text.to_string(), reply: reply_tx.clone() };
                    if state.inbox.try_send(inbound).is_err() {
                        let busy = frame(&ServerFrame::error("input queue full; frame dropped"));
                        let _ = reply_tx.try_send(busy);
                    }
                }
                Some(Ok(Message::Binary(_))) => {
                    let _ = reply_tx.try_send(frame(&ServerFrame::error("binary frames are not supported")));
                }
                Some(Ok(_)) => {}
                Some(Err(_)) | None => break,
            },
        }
    }
}

fn with_static(router: Router, dir: Option<PathBuf>) -> Router {
    match dir {
        Some(d) => router.fallback_service(ServeDir::new(d)),
        None => router,
    }
}

async fn shutdown_signal() {
    let _ = tokio::signal::ctrl_c().await;
}

pub fn run_live(session: LiveSession, queue: usize, opts: ServeOptions) -> anyhow::Result<()> {
    let rt = runtime()?;
    rt.block_on(async move {
        let listener = bind(opts.addr).await?;
        println!("listening on ws://{}/ws", listener.local_addr()?);
        let (frames, _) = broadcast::channel(256);
        let (hello_tx, hello_rx) = watch::channel(frame(&session.hello()));
        let (in_tx, in_rx) = mpsc::channel(queue.max(1));
        let stop = Arc::new(AtomicBool::new(false));
        let period = Duration::from_secs_f64(session.dt() / opts.speed);
        let sim = {
            let frames = frames.clone();
            let stop = stop.clone();
            let out = opts.out_dir.clone();
            std::thread::spawn(move || sim_loop(session, in_rx, frames, hello_tx, period, out, stop))
        };
        let state = LiveState {
            frames,
            hello: hello_rx,
            inbox: in_tx,
        };
        let app = Router::new()
            .route("/ws", get(live_ws))
            .route("/healthz", get(|| async { "ok" }))
            .with_state(state);
        let app = with_static(app, opts.static_dir);
        let served = axum::serve(listener, app).with_graceful_shutdown(shutdown_signal()).await;
        stop.store(true, Ordering::Relaxed);
        let _ = sim.join();
        served.context("server error")
    })
}

async fn replay_ws(ws: WebSocketUpgrade, State((log, speed)): State<(Arc<TrialLog>, f64)>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| replay_client(socket, log, speed))
}

async fn replay_client(socket: WebSocket, log: Arc<TrialLog>, speed: f64) {
    let (mut tx, _rx) = socket.split();
    let (ftx, mut frx) = mpsc::channel::<Frame>(64);
    tokio::task::spawn_blocking(move || {
        replay_paced(&log, speed, |f| ftx.blocking_send(frame(f)).is_ok());
    });
    while let Some(f) = frx.recv().await {
        if tx.send(Message::Text(f.as_ref().into())).await.is_err() {
            return;
        }
    }
    let _ = tx.send(Message::Close(None)).await;
}

/// Serve the replay of `log` to every client that connects.
pub fn run_replay(log: TrialLog, speed: f64, addr: SocketAddr) -> anyhow::Result<()> {
    let rt = runtime()?;
    rt.block_on(async move {
        let listener = bind(addr).await?;
        println!("listening on ws://{}/ws", listener.local_addr()?);
        let app = Router::new()
            .route("/ws", get(replay_ws))
            .with_state((Arc::new(log), speed));
        axum::serve(listener, app)
            .with_graceful_shutdown(shutdown_signal())
            .await
            .context("server error")
    })
}
