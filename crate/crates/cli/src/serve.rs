//! Live session endpoint. The session runs on its own thread at the fast tick
//! rate; websocket tasks only forward text both ways. Inbound commands are
//! queued and applied by the session at the next tick boundary.

use std::io::Write as _;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use pvrnn_hri::config::RunConfig;
use pvrnn_hri::live::{Body, LiveSession, SessionMessage};
use tokio::sync::mpsc as tmpsc;

use crate::commands::{checkpoint_path, observer_for};
use crate::{CliError, CliResult, ServeArgs};

pub const MESSAGE_SCHEMA: &str = include_str!("../../../docs/session-messages.schema.json");

enum Inbound {
    Connect(tmpsc::UnboundedSender<String>),
    Text(String),
    Disconnect,
}

#[derive(Clone)]
struct AppState {
    tx: mpsc::Sender<Inbound>,
    busy: Arc<AtomicBool>,
}

pub fn serve(config: &RunConfig, args: ServeArgs) -> CliResult {
    let path = checkpoint_path(&args.checkpoint, args.profile.into());
    if !path.is_file() {
        return Err(CliError::Usage(format!("checkpoint {} not found", path.display())));
    }
    let ck = pvrnn_hri::checkpoint::Checkpoint::load(&path)?;
    let observer = observer_for(config, args.observer.as_deref(), &ck)?;
    let session = LiveSession::new(ck, observer, &config.session, &args.intent, args.seed)?;

    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Io(format!("runtime: {e}")))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port))
            .await
            .map_err(|e| CliError::Io(format!("cannot bind {}:{}: {e}", args.host, args.port)))?;
        let addr = listener.local_addr().map_err(|e| CliError::Io(e.to_string()))?;
        println!("listening on {addr}");
        let _ = std::io::stdout().flush();

        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || session_loop(session, rx));
        let app = Router::new()
            .route("/ws", get(ws_handler))
            .route("/schema", get(schema))
            .with_state(AppState { tx, busy: Arc::new(AtomicBool::new(false)) });
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| CliError::Io(format!("server: {e}")))
    })
}

async fn schema() -> Response {
    ([(header::CONTENT_TYPE, "application/schema+json")], MESSAGE_SCHEMA).into_response()
}

async fn ws_handler(ws: WebSocketUpgrade, State(st): State<AppState>) -> Response {
    if st.busy.swap(true, Ordering::SeqCst) {
        return (StatusCode::CONFLICT, "a client is already connected\n").into_response();
    }
    let busy = st.busy.clone();
    ws.on_failed_upgrade(move |_| busy.store(false, Ordering::SeqCst))
        .on_upgrade(move |socket| client(socket, st))
}

async fn client(mut socket: WebSocket, st: AppState) {
    let (out_tx, mut out_rx) = tmpsc::unbounded_channel::<String>();
    if st.tx.send(Inbound::Connect(out_tx)).is_ok() {
        loop {
            tokio::select! {
                out = out_rx.recv() => match out {
                    Some(text) => {
                        if socket.send(Message::Text(text.into())).await.is_err() {
                            break;
                        }
                    }
                    None => break,
                },
                inc = socket.recv() => match inc {
                    Some(Ok(Message::Text(t))) => {
                        if st.tx.send(Inbound::Text(t.to_string())).is_err() {
                            break;
                        }
                    }
                    Some(Ok(Message::Binary(b))) => {
                        let _ = st.tx.send(Inbound::Text(String::from_utf8_lossy(&b).into_owned()));
                    }
                    Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                    Some(Ok(_)) => {}
                },
            }
        }
    }
    let _ = st.tx.send(Inbound::Disconnect);
    st.busy.store(false, Ordering::SeqCst);
}

fn session_loop(mut s: LiveSession, rx: mpsc::Receiver<Inbound>) {
    let period = Duration::from_micros(s.fast_tick_us());
    let mut client: Option<tmpsc::UnboundedSender<String>> = None;
    let mut next = Instant::now();
    let send = |c: &mut Option<tmpsc::UnboundedSender<String>>, m: &SessionMessage| {
        if let Some(tx) = c {
            if tx.send(m.to_json()).is_err() {
                *c = None;
            }
        }
    };
    loop {
        if client.is_none() {
            // Paused: the plant holds until a client connects.
            match rx.recv() {
                Ok(Inbound::Connect(tx)) => {
                    client = Some(tx);
                    for m in s.greeting() {
                        send(&mut client, &m);
                    }
                    next = Instant::now();
                }
                Ok(_) => {}
                Err(_) => return,
            }
            continue;
        }
        loop {
            match rx.try_recv() {
                Ok(Inbound::Text(t)) => {
                    if let Some(reply) = s.submit_text(&t) {
                        send(&mut client, &reply);
                    }
                }
                Ok(Inbound::Connect(tx)) => {
                    client = Some(tx);
                    for m in s.greeting() {
                        send(&mut client, &m);
                    }
                }
                Ok(Inbound::Disconnect) => {
                    s.release();
                    client = None;
                    break;
                }
                Err(mpsc::TryRecvError::Empty) => break,
                Err(mpsc::TryRecvError::Disconnected) => return,
            }
        }
        if client.is_none() {
            continue;
        }
        match s.step() {
            Ok(msgs) => {
                for m in &msgs {
                    send(&mut client, m);
                }
            }
            Err(e) => {
                let m = SessionMessage::new(s.ticks(), Body::Error { message: format!("session stopped: {e}") });
                send(&mut client, &m);
                return;
            }
        }
        next += period;
        let now = Instant::now();
        if next > now {
            std::thread::sleep(next - now);
        } else {
            next = now;
        }
    }
}
