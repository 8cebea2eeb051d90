//! JSON messages exchanged with clients.
//!
//! Every frame (websocket text frame or NDJSON line) is one object
//! `{"type": ..., "seq": ..., "body": {...}}`.

use duiopt::live::SessionUpdate;
use duiopt::{ProblemInstance, SessionError, SessionEvent, Solution};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub seq: u64,
    #[serde(default)]
    pub body: Value,
}

impl WireMessage {
    pub fn new(kind: &str, seq: u64, body: Value) -> Self {
        Self { kind: kind.into(), seq, body }
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("wire messages always serialize")
    }
}

/// Client to server.
#[derive(Debug, Clone, PartialEq)]
pub enum ClientMessage {
    Hello { client_id: String, user_id: Option<String> },
    Event(SessionEvent),
    GetState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadMessage,
    Rejected,
    Infeasible,
}

#[derive(Deserialize)]
struct HelloBody {
    client_id: String,
    #[serde(default)]
    user_id: Option<String>,
}

/// Parses one incoming frame into the client's seq (0 when unreadable) and
/// the message. The error text goes back to the client.
pub fn parse_client(text: &str) -> (u64, Result<ClientMessage, String>) {
    match serde_json::from_str::<WireMessage>(text) {
        Ok(msg) => (msg.seq, decode(msg)),
        Err(e) => (0, Err(format!("not a message: {e}"))),
    }
}

fn decode(msg: WireMessage) -> Result<ClientMessage, String> {
    match msg.kind.as_str() {
        "hello" => {
            let body: HelloBody = serde_json::from_value(msg.body).map_err(|e| format!("bad hello: {e}"))?;
            Ok(ClientMessage::Hello { client_id: body.client_id, user_id: body.user_id })
        }
        "event" => serde_json::from_value(msg.body).map(ClientMessage::Event).map_err(|e| format!("bad event: {e}")),
        "get_state" => Ok(ClientMessage::GetState),
        other => Err(format!("unknown message type {other:?}")),
    }
}

pub fn state(seq: u64, instance: &ProblemInstance) -> WireMessage {
    WireMessage::new("state", seq, serde_json::to_value(instance).expect("instance serializes"))
}

pub fn solution(seq: u64, stale: bool, sol: &Solution) -> WireMessage {
    WireMessage::new(
        "solution",
        seq,
        json!({
            "assignment": sol.assignment,
            "sizes": sol.sizes,
            "per_user_completeness": sol.per_user_completeness,
            "r_min": sol.r_min,
            "objective": sol.objective,
            "gap": sol.gap,
            "solve_ms": sol.solve_millis,
            "status": sol.status,
            "seq": seq,
            "stale": stale,
        }),
    )
}

pub fn error(seq: u64, code: ErrorCode, detail: impl Into<String>) -> WireMessage {
    WireMessage::new("error", seq, json!({ "code": code, "detail": detail.into() }))
}

pub fn session_error(seq: u64, err: &SessionError) -> WireMessage {
    let code = match err {
        SessionError::Infeasible | SessionError::Formulation(_) => ErrorCode::Infeasible,
        _ => ErrorCode::Rejected,
    };
    error(seq, code, err.to_string())
}

/// Outgoing frame for a session update, if clients should see it.
pub fn from_update(update: &SessionUpdate) -> Option<WireMessage> {
    match update {
        SessionUpdate::State { seq, instance } => Some(state(*seq, instance)),
        SessionUpdate::Solution { solution: sol, diff } => Some(solution(diff.seq, diff.stale, sol)),
        SessionUpdate::Error { seq, error } => Some(session_error(*seq, error)),
        SessionUpdate::Warning { .. } => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_client_messages() {
        let (seq, hello) = parse_client(r#"{"type":"hello","seq":1,"body":{"client_id":"ui-1"}}"#);
        assert_eq!(seq, 1);
        assert_eq!(hello.unwrap(), ClientMessage::Hello { client_id: "ui-1".into(), user_id: None });
        let ev = parse_client(r#"{"type":"event","body":{"kind":"user_leave","user":"bob"}}"#).1.unwrap();
        assert_eq!(ev, ClientMessage::Event(SessionEvent::UserLeave { user: "bob".into() }));
        assert_eq!(parse_client(r#"{"type":"get_state"}"#).1.unwrap(), ClientMessage::GetState);
    }

    #[test]
    fn rejects_what_it_cannot_read() {
        assert!(parse_client("{").1.unwrap_err().starts_with("not a message"));
        assert!(parse_client(r#"{"type":"launch","seq":4}"#).1.unwrap_err().contains("unknown message type"));
        assert_eq!(parse_client(r#"{"type":"launch","seq":4}"#).0, 4);
        assert!(parse_client(r#"{"type":"event","body":{"kind":"explode"}}"#).1.unwrap_err().starts_with("bad event"));
    }

    #[test]
    fn error_frames_carry_codes() {
        let text = error(3, ErrorCode::BadMessage, "nope").to_text();
        assert_eq!(text, r#"{"type":"error","seq":3,"body":{"code":"bad_message","detail":"nope"}}"#);
        let msg = session_error(0, &SessionError::Infeasible);
        assert_eq!(msg.body["code"], "infeasible");
    }
}
