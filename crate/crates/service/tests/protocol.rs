use std::net::SocketAddr;
use std::path::Path;
use std::time::Duration;

use duiopt::live::LiveSession;
use duiopt::{ProblemInstance, Session, SolveOptions};
use duiopt_service::{serve, ServeConfig, ServerHandle, WireMessage};
use futures_util::{SinkExt, StreamExt};
use serde_json::json;
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader, Lines};
use tokio::net::tcp::{OwnedReadHalf, OwnedWriteHalf};
use tokio::net::TcpStream;
use tokio::time::timeout;
use tokio_tungstenite::tungstenite::Message;

const WAIT: Duration = Duration::from_secs(10);

fn media_sharing() -> ProblemInstance {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/media_sharing.json");
    ProblemInstance::load(path).unwrap()
}

async fn start() -> (ServerHandle, LiveSession) {
    let live = LiveSession::start(Session::new(media_sharing(), SolveOptions::default()));
    let any: SocketAddr = "127.0.0.1:0".parse().unwrap();
    let mut config = ServeConfig::new(any);
    config.ndjson_addr = Some(any);
    (serve(live.clone(), config).await.unwrap(), live)
}

struct Client {
    lines: Lines<BufReader<OwnedReadHalf>>,
    write: OwnedWriteHalf,
}

impl Client {
    async fn connect(server: &ServerHandle) -> Self {
        let stream = TcpStream::connect(server.ndjson_addr.unwrap()).await.unwrap();
        let (read, write) = stream.into_split();
        Self { lines: BufReader::new(read).lines(), write }
    }

    async fn send_raw(&mut self, text: &str) {
        self.write.write_all(text.as_bytes()).await.unwrap();
        self.write.write_all(b"\n").await.unwrap();
    }

    async fn send(&mut self, kind: &str, seq: u64, body: serde_json::Value) {
        self.send_raw(&WireMessage::new(kind, seq, body).to_text()).await;
    }

    async fn recv(&mut self) -> WireMessage {
        let line = timeout(WAIT, self.lines.next_line()).await.expect("no message in time").unwrap().expect("closed");
        serde_json::from_str(&line).unwrap()
    }

    /// Next message of the given type, skipping others.
    async fn recv_kind(&mut self, kind: &str) -> WireMessage {
        loop {
            let msg = self.recv().await;
            if msg.kind == kind {
                return msg;
            }
        }
    }

    /// Everything that arrives within `window`.
    async fn drain(&mut self, window: Duration) -> Vec<WireMessage> {
        let mut out = Vec::new();
        while let Ok(Ok(Some(line))) = timeout(window, self.lines.next_line()).await {
            out.push(serde_json::from_str(&line).unwrap());
        }
        out
    }
}

fn importance(value: f64) -> serde_json::Value {
    json!({"kind": "set_importance", "element": "voting", "user": "alice", "value": value})
}

#[tokio::test(flavor = "multi_thread")]
async fn new_clients_get_state_then_solution() {
    let (server, live) = start().await;
    let mut c = Client::connect(&server).await;
    let first = c.recv().await;
    assert_eq!(first.kind, "state");
    assert_eq!(first.seq, 0);
    let inst: ProblemInstance = serde_json::from_value(first.body).unwrap();
    assert_eq!(inst, media_sharing());
    let sol = c.recv().await;
    assert_eq!(sol.kind, "solution");
    assert_eq!(sol.body["seq"], 0);
    assert_eq!(sol.body["stale"], false);
    assert_eq!(sol.body["status"], "optimal");
    server.shutdown().await;
    live.shutdown();
}

#[tokio::test(flavor = "multi_thread")]
async fn events_reach_every_client() {
    let (server, live) = start().await;
    let mut a = Client::connect(&server).await;
    let mut b = Client::connect(&server).await;
    a.recv_kind("solution").await;
    b.recv_kind("solution").await;

    a.send("hello", 1, json!({"client_id": "ui-a", "user_id": "alice"})).await;
    a.send("event", 2, importance(0.9)).await;
    let state = b.recv().await;
    assert_eq!(state.kind, "state");
    assert_eq!(state.seq, 1);
    let inst: ProblemInstance = serde_json::from_value(state.body).unwrap();
    let (e, u) = (inst.element_index("voting").unwrap(), inst.user_index("alice").unwrap());
    assert_eq!(inst.importance[e][u], 0.9);
    let sol = b.recv_kind("solution").await;
    assert_eq!(sol.seq, 1);
    server.shutdown().await;
    live.shutdown();
}

#[tokio::test(flavor = "multi_thread")]
async fn a_burst_inside_the_window_is_solved_once() {
    let (server, live) = start().await;
    let mut c = Client::connect(&server).await;
    c.recv_kind("solution").await;
    c.send("event", 1, importance(0.2)).await;
    c.send("event", 2, importance(0.3)).await;
    let got = c.drain(Duration::from_millis(600)).await;
    let solutions: Vec<u64> = got.iter().filter(|m| m.kind == "solution").map(|m| m.seq).collect();
    let states: Vec<u64> = got.iter().filter(|m| m.kind == "state").map(|m| m.seq).collect();
    assert_eq!(states, vec![1, 2]);
    assert_eq!(solutions, vec![2]);
    server.shutdown().await;
    live.shutdown();
}

#[tokio::test(flavor = "multi_thread")]
async fn solution_seqs_increase() {
    let (server, live) = start().await;
    let mut c = Client::connect(&server).await;
    let mut last = c.recv_kind("solution").await.seq;
    for k in 0..4 {
        c.send("event", k, importance(0.1 * k as f64)).await;
        let sol = c.recv_kind("solution").await;
        assert!(sol.seq > last, "{} after {last}", sol.seq);
        last = sol.seq;
    }
    server.shutdown().await;
    live.shutdown();
}

#[tokio::test(flavor = "multi_thread")]
async fn bad_input_is_answered_without_disconnecting() {
    let (server, live) = start().await;
    let mut c = Client::connect(&server).await;
    c.recv_kind("solution").await;

    c.send_raw("{not json").await;
    let err = c.recv().await;
    assert_eq!(err.kind, "error");
    assert_eq!(err.body["code"], "bad_message");

    c.send("event", 7, json!({"kind": "user_leave", "user": "nobody"})).await;
    let err = c.recv().await;
    assert_eq!(err.kind, "error");
    assert_eq!(err.seq, 7);
    assert_eq!(err.body["code"], "rejected");

    c.send("event", 8, importance(1.5)).await;
    assert_eq!(c.recv().await.body["code"], "rejected");

    // still connected and served
    c.send("get_state", 9, json!(null)).await;
    let state = c.recv().await;
    assert_eq!(state.kind, "state");
    assert_eq!(state.seq, 0);
    server.shutdown().await;
    live.shutdown();
}

#[tokio::test(flavor = "multi_thread")]
async fn reconnecting_sees_the_same_snapshot() {
    let (server, live) = start().await;
    let mut c = Client::connect(&server).await;
    c.recv_kind("solution").await;
    c.send("event", 1, json!({"kind": "user_leave", "user": "bob"})).await;
    c.recv_kind("solution").await;
    c.send("get_state", 2, json!(null)).await;
    let state = c.recv_kind("state").await;
    drop(c);

    let mut again = Client::connect(&server).await;
    let fresh_state = again.recv().await;
    let fresh_sol = again.recv().await;
    assert_eq!(fresh_state, state);
    assert_eq!(fresh_sol.kind, "solution");
    assert_eq!(fresh_sol.seq, 1);
    server.shutdown().await;
    live.shutdown();
}

#[tokio::test(flavor = "multi_thread")]
async fn websocket_clients_speak_the_same_protocol() {
    let (server, live) = start().await;
    let url = format!("ws://{}/ws", server.ws_addr);
    let (mut ws, _) = tokio_tungstenite::connect_async(url).await.unwrap();
    assert_eq!(ws_recv(&mut ws).await.kind, "state");
    assert_eq!(ws_recv(&mut ws).await.kind, "solution");

    let text = WireMessage::new("event", 1, importance(0.7)).to_text();
    ws.send(Message::Text(text.into())).await.unwrap();
    let state = ws_recv(&mut ws).await;
    let sol = ws_recv(&mut ws).await;
    assert_eq!((state.kind.as_str(), state.seq), ("state", 1));
    assert_eq!((sol.kind.as_str(), sol.seq), ("solution", 1));
    server.shutdown().await;
    live.shutdown();
}

async fn ws_recv<S>(ws: &mut S) -> WireMessage
where
    S: futures_util::Stream<Item = Result<Message, tokio_tungstenite::tungstenite::Error>> + Unpin,
{
    loop {
        let frame = timeout(WAIT, ws.next()).await.expect("no frame in time").expect("closed").unwrap();
        if let Message::Text(t) = frame {
            return serde_json::from_str(t.as_str()).unwrap();
        }
    }
}
