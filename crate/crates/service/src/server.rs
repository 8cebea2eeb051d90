use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use duiopt::live::LiveSession;
use futures_util::{sink, stream, Sink, SinkExt, Stream, StreamExt};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, watch};
use tokio::task::JoinHandle;
use tower_http::services::ServeDir;

use crate::wire::{self, ClientMessage, ErrorCode, WireMessage};

/// Messages a client may fall behind by before it is disconnected.
pub const DEFAULT_OUTBOX: usize = 256;

#[derive(Debug, Clone)]
pub struct ServeConfig {
    /// HTTP address; the websocket lives at `/ws`.
    pub ws_addr: SocketAddr,
    /// Plain TCP address speaking one JSON message per line.
    pub ndjson_addr: Option<SocketAddr>,
    /// Directory served at `/` (the simulator build, for instance).
    pub assets: Option<PathBuf>,
    pub outbox: usize,
}

impl ServeConfig {
    pub fn new(ws_addr: SocketAddr) -> Self {
        Self { ws_addr, ndjson_addr: None, assets: None, outbox: DEFAULT_OUTBOX }
    }
}

pub struct ServerHandle {
    pub ws_addr: SocketAddr,
    pub ndjson_addr: Option<SocketAddr>,
    stop: watch::Sender<bool>,
    tasks: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    /// Stops accepting, closes every connection and waits for the tasks.
    pub async fn shutdown(self) {
        let _ = self.stop.send(true);
        for t in self.tasks {
            let _ = t.await;
        }
    }

    /// Resolves once shutdown has been requested.
    pub async fn stopped(&self) {
        stopped(&mut self.stop.subscribe()).await;
    }
}

async fn stopped(rx: &mut watch::Receiver<bool>) {
    let _ = rx.wait_for(|s| *s).await;
}

#[derive(Clone)]
struct Shared {
    live: LiveSession,
    outbox: usize,
    stop: watch::Receiver<bool>,
}

/// Binds the listeners and starts serving the session.
pub async fn serve(live: LiveSession, config: ServeConfig) -> io::Result<ServerHandle> {
    let (stop, stop_rx) = watch::channel(false);
    let shared = Shared { live, outbox: config.outbox.max(1), stop: stop_rx };
    let mut tasks = Vec::new();

    let listener = TcpListener::bind(config.ws_addr).await?;
    let ws_addr = listener.local_addr()?;
    let mut app = Router::new().route("/ws", get(upgrade)).with_state(shared.clone());
    if let Some(dir) = &config.assets {
        app = app.fallback_service(ServeDir::new(dir));
    }
    let mut stop_http = shared.stop.clone();
    tasks.push(tokio::spawn(async move {
        let graceful = async move { stopped(&mut stop_http).await };
        if let Err(e) = axum::serve(listener, app).with_graceful_shutdown(graceful).await {
            log::error!("http server: {e}");
        }
    }));
    log::info!("websocket endpoint ws://{ws_addr}/ws");

    let mut ndjson_addr = None;
    if let Some(addr) = config.ndjson_addr {
        let listener = TcpListener::bind(addr).await?;
        ndjson_addr = Some(listener.local_addr()?);
        log::info!("ndjson endpoint {}", listener.local_addr()?);
        tasks.push(tokio::spawn(accept_ndjson(listener, shared)));
    }
    Ok(ServerHandle { ws_addr, ndjson_addr, stop, tasks })
}

async fn upgrade(ws: WebSocketUpgrade, State(shared): State<Shared>) -> Response {
    ws.on_upgrade(move |socket| websocket_client(socket, shared))
}

async fn websocket_client(socket: WebSocket, shared: Shared) {
    let (tx, rx) = socket.split();
    let outgoing = tx.with(|text: String| async move { Ok::<_, axum::Error>(Message::Text(text.into())) });
    let incoming = rx
        .take_while(|m| std::future::ready(matches!(m, Ok(m) if !matches!(m, Message::Close(_)))))
        .filter_map(|m| {
            std::future::ready(match m {
                Ok(Message::Text(t)) => Some(t.to_string()),
                Ok(Message::Binary(b)) => Some(String::from_utf8_lossy(&b).into_owned()),
                _ => None,
            })
        });
    run_client(shared, incoming, outgoing).await;
}

async fn accept_ndjson(listener: TcpListener, shared: Shared) {
    let mut stop = shared.stop.clone();
    loop {
        tokio::select! {
            accepted = listener.accept() => match accepted {
                Ok((stream, peer)) => {
                    log::debug!("ndjson client {peer}");
                    tokio::spawn(ndjson_client(stream, shared.clone()));
                }
                Err(e) => log::warn!("accept: {e}"),
            },
            _ = stopped(&mut stop) => break,
        }
    }
}

async fn ndjson_client(stream: TcpStream, shared: Shared) {
    let (read, write) = stream.into_split();
    let lines = BufReader::new(read).lines();
    let incoming = stream::unfold(lines, |mut lines| async move {
        match lines.next_line().await {
            Ok(Some(line)) => Some((line, lines)),
            _ => None,
        }
    })
    .filter(|line| std::future::ready(!line.trim().is_empty()));
    let outgoing = sink::unfold(write, |mut w, text: String| async move {
        w.write_all(text.as_bytes()).await?;
        w.write_all(b"\n").await?;
        Ok::<_, io::Error>(w)
    });
    run_client(shared, incoming, outgoing).await;
}

/// Serves one connection until either side closes, the client overflows
/// its outbox, or the server stops.
async fn run_client<I, O, E>(shared: Shared, incoming: I, outgoing: O)
where
    I: Stream<Item = String>,
    O: Sink<String, Error = E>,
{
    let (tx, mut outbox) = mpsc::channel::<String>(shared.outbox);
    let subscribed = shared.live.subscribe_with_snapshot(Box::new(move |update| {
        let Some(msg) = wire::from_update(update) else { return true };
        match tx.try_send(msg.to_text()) {
            Ok(()) => true,
            Err(mpsc::error::TrySendError::Full(_)) => {
                log::warn!("client fell behind; disconnecting");
                false
            }
            Err(mpsc::error::TrySendError::Closed(_)) => false,
        }
    }));
    if subscribed.is_err() {
        return;
    }
    let mut incoming = std::pin::pin!(incoming);
    let mut outgoing = std::pin::pin!(outgoing);
    let mut stop = shared.stop.clone();
    loop {
        tokio::select! {
            biased;
            _ = stopped(&mut stop) => break,
            out = outbox.recv() => match out {
                Some(text) => {
                    if outgoing.send(text).await.is_err() {
                        break;
                    }
                }
                None => break,
            },
            frame = incoming.next() => match frame {
                Some(text) => {
                    if let Some(reply) = handle(&shared.live, &text).await {
                        if outgoing.send(reply.to_text()).await.is_err() {
                            break;
                        }
                    }
                }
                None => break,
            },
        }
    }
    let _ = outgoing.close().await;
}

/// Reacts to one client frame, returning a direct reply if there is one.
async fn handle(live: &LiveSession, text: &str) -> Option<WireMessage> {
    let (seq, parsed) = wire::parse_client(text);
    match parsed {
        Err(detail) => Some(wire::error(seq, ErrorCode::BadMessage, detail)),
        Ok(ClientMessage::Hello { client_id, user_id }) => {
            log::info!("hello from {client_id} (user {user_id:?})");
            None
        }
        Ok(ClientMessage::Event(event)) => {
            let live = live.clone();
            match tokio::task::spawn_blocking(move || live.submit(event)).await {
                Ok(Ok(_)) => None,
                Ok(Err(e)) => Some(wire::error(seq, ErrorCode::Rejected, e.to_string())),
                Err(e) => Some(wire::error(seq, ErrorCode::Rejected, e.to_string())),
            }
        }
        Ok(ClientMessage::GetState) => {
            let live = live.clone();
            match tokio::task::spawn_blocking(move || live.snapshot()).await {
                Ok(Ok((seq, instance, _))) => Some(wire::state(seq, &instance)),
                Ok(Err(e)) => Some(wire::session_error(seq, &e)),
                Err(e) => Some(wire::error(seq, ErrorCode::Rejected, e.to_string())),
            }
        }
    }
}
