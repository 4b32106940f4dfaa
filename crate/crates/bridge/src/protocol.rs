//! Wire protocol: one JSON object per WebSocket text frame.
//!
//! Every message is an envelope `{"type": ..., "seq": ..., "payload": ...}`.
//! Client commands carry a client-chosen `seq`; the server echoes it on the
//! reply (`ack`, `snapshot` or `rejected`). Broadcast events (`telemetry`,
//! `heartbeat`, `servo_event`) carry the session's stream sequence number,
//! which increases by one per broadcast event. `gap` notices are generated
//! per connection and reuse the `seq` of the event they precede.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use rcmservo_core::simulator::MetricsRecord;
use rcmservo_core::view_graph::{GraphFile, PoseRecord};
use rcmservo_core::vision::FeatureObservation;

use crate::session::SessionState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("unknown command type {0:?}")]
    UnknownType(String),
    #[error("bad payload for {command}: {reason}")]
    Payload { command: &'static str, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    GetState,
    Jog,
    Capture,
    SelectAndExecute,
    Abort,
    Reset,
}

impl CommandKind {
    pub const ALL: [CommandKind; 6] = [Self::GetState, Self::Jog, Self::Capture, Self::SelectAndExecute, Self::Abort, Self::Reset];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::GetState => "get_state",
            Self::Jog => "jog",
            Self::Capture => "capture",
            Self::SelectAndExecute => "select_and_execute",
            Self::Abort => "abort",
            Self::Reset => "reset",
        }
    }
}

impl std::fmt::Display for CommandKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A client command.
#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    GetState,
    /// Body twist `[v_x, v_y, v_z, w_x, w_y, w_z]` applied for one frame.
    Jog { twist: [f64; 6] },
    Capture,
    SelectAndExecute { target: usize },
    Abort,
    Reset,
}

impl Command {
    pub fn kind(&self) -> CommandKind {
        match self {
            Self::GetState => CommandKind::GetState,
            Self::Jog { .. } => CommandKind::Jog,
            Self::Capture => CommandKind::Capture,
            Self::SelectAndExecute { .. } => CommandKind::SelectAndExecute,
            Self::Abort => CommandKind::Abort,
            Self::Reset => CommandKind::Reset,
        }
    }

    fn payload(&self) -> Value {
        match self {
            Self::Jog { twist } => serde_json::json!({ "twist": twist }),
            Self::SelectAndExecute { target } => serde_json::json!({ "target": target }),
            _ => Value::Object(Map::new()),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnvelope {
    #[serde(rename = "type")]
    kind: String,
    seq: u64,
    #[serde(default)]
    payload: Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JogPayload {
    twist: [f64; 6],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SelectPayload {
    target: usize,
}

/// Best-effort `seq` of a message that failed to parse, for the rejection reply.
pub fn salvage_seq(text: &str) -> u64 {
    serde_json::from_str::<Value>(text).ok().and_then(|v| v.get("seq").and_then(Value::as_u64)).unwrap_or(0)
}

/// Parses a client command envelope.
pub fn parse_command(text: &str) -> Result<(u64, Command), ProtocolError> {
    let raw: RawEnvelope = serde_json::from_str(text).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    let kind = CommandKind::ALL
        .into_iter()
        .find(|k| k.as_str() == raw.kind)
        .ok_or_else(|| ProtocolError::UnknownType(raw.kind.clone()))?;
    let bad = |reason: String| ProtocolError::Payload { command: kind.as_str(), reason };
    let empty = |p: &Value| match p {
        Value::Null => Ok(()),
        Value::Object(m) if m.is_empty() => Ok(()),
        _ => Err(bad("expected an empty payload".into())),
    };
    let command = match kind {
        CommandKind::GetState => empty(&raw.payload).map(|_| Command::GetState)?,
        CommandKind::Capture => empty(&raw.payload).map(|_| Command::Capture)?,
        CommandKind::Abort => empty(&raw.payload).map(|_| Command::Abort)?,
        CommandKind::Reset => empty(&raw.payload).map(|_| Command::Reset)?,
        CommandKind::Jog => {
            let p: JogPayload = serde_json::from_value(raw.payload).map_err(|e| bad(e.to_string()))?;
            if !p.twist.iter().all(|v| v.is_finite()) {
                return Err(bad("twist must be finite".into()));
            }
            Command::Jog { twist: p.twist }
        }
        CommandKind::SelectAndExecute => {
            let p: SelectPayload = serde_json::from_value(raw.payload).map_err(|e| bad(e.to_string()))?;
            Command::SelectAndExecute { target: p.target }
        }
    };
    Ok((raw.seq, command))
}

pub fn encode_command(seq: u64, command: &Command) -> String {
    serde_json::json!({ "type": command.kind().as_str(), "seq": seq, "payload": command.payload() }).to_string()
}

// ---------------------------------------------------------------------------
// Server messages

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum ServerMessage {
    Ack(Ack),
    Rejected(Rejection),
    Snapshot(Box<Snapshot>),
    Telemetry(Box<Telemetry>),
    Heartbeat(Heartbeat),
    Gap(Gap),
    ServoEvent(ServoEvent),
}

impl ServerMessage {
    pub fn type_name(&self) -> &'static str {
        match self {
            Self::Ack(_) => "ack",
            Self::Rejected(_) => "rejected",
            Self::Snapshot(_) => "snapshot",
            Self::Telemetry(_) => "telemetry",
            Self::Heartbeat(_) => "heartbeat",
            Self::Gap(_) => "gap",
            Self::ServoEvent(_) => "servo_event",
        }
    }
}

pub fn encode_server_message(seq: u64, message: &ServerMessage) -> String {
    let mut v = serde_json::to_value(message).expect("server messages serialize");
    v.as_object_mut().expect("adjacently tagged").insert("seq".into(), Value::from(seq));
    v.to_string()
}

pub fn decode_server_message(text: &str) -> Result<(u64, ServerMessage), ProtocolError> {
    let mut v: Value = serde_json::from_str(text).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    let obj = v.as_object_mut().ok_or_else(|| ProtocolError::Malformed("expected an object".into()))?;
    let seq = obj.remove("seq").and_then(|s| s.as_u64()).ok_or_else(|| ProtocolError::Malformed("missing seq".into()))?;
    let message = serde_json::from_value(v).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    Ok((seq, message))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub command: CommandKind,
    /// State after the command.
    pub state: SessionState,
    #[serde(default)]
    pub result: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    /// `None` when the message could not be parsed.
    pub command: Option<CommandKind>,
    pub state: SessionState,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServoProgress {
    pub target: usize,
    pub path: Vec<usize>,
    pub active_vertex: usize,
    pub step: usize,
    pub mpd_px: Option<f64>,
}

/// Ground truth for display and evaluation only. The controller never reads it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalData {
    pub note: String,
    pub camera_pose: PoseRecord,
    pub tip_mm: [f64; 3],
    pub trocar_mm: [f64; 3],
}

pub const EVAL_NOTE: &str = "evaluation only, not used by control";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub state: SessionState,
    pub fault: Option<String>,
    pub time_s: f64,
    pub q: Vec<f64>,
    pub rcm_error_mm: f64,
    /// `[width, height]` of the working image in pixels.
    pub frame_size: [f64; 2],
    /// Features currently inside the field of view.
    pub observations: Vec<FeatureObservation>,
    pub graph: GraphFile,
    pub servo: Option<ServoProgress>,
    pub metrics_tail: Vec<MetricsRecord>,
    pub eval: EvalData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Telemetry {
    pub record: MetricsRecord,
    pub state: SessionState,
    pub servo: Option<ServoProgress>,
    pub observations: Vec<FeatureObservation>,
    pub eval: EvalData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heartbeat {
    pub state: SessionState,
    pub time_s: f64,
    pub vertices: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    /// `lagged` when buffered events were dropped, `joined` when a client
    /// connects while a servo is running.
    pub reason: String,
    pub missed: u64,
    pub state: SessionState,
    pub current_step: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServoEvent {
    /// `started`, `advance`, `converged`, `failed`, `max_steps`, `aborted` or `error`.
    pub kind: String,
    pub target: usize,
    pub path: Vec<usize>,
    pub active_vertex: usize,
    pub step: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_examples() {
        assert_eq!(parse_command(r#"{"type":"get_state","seq":1}"#).unwrap(), (1, Command::GetState));
        assert_eq!(parse_command(r#"{"type":"capture","seq":2,"payload":{}}"#).unwrap(), (2, Command::Capture));
        assert_eq!(
            parse_command(r#"{"type":"jog","seq":3,"payload":{"twist":[0.01,0,0,0,0,0.2]}}"#).unwrap(),
            (3, Command::Jog { twist: [0.01, 0.0, 0.0, 0.0, 0.0, 0.2] })
        );
        assert_eq!(
            parse_command(r#"{"type":"select_and_execute","seq":4,"payload":{"target":0}}"#).unwrap(),
            (4, Command::SelectAndExecute { target: 0 })
        );
    }

    #[test]
    fn rejects_malformed_commands() {
        for text in [
            "",
            "[]",
            r#"{"type":"jog","seq":1}"#,
            r#"{"type":"jog","seq":1,"payload":{"twist":[0,0,0]}}"#,
            r#"{"type":"jog","seq":1,"payload":{"twist":[0,0,0,0,0,0],"extra":1}}"#,
            r#"{"type":"abort","seq":1,"payload":{"now":true}}"#,
            r#"{"type":"fly","seq":1}"#,
            r#"{"type":"reset"}"#,
            r#"{"type":"reset","seq":-1}"#,
            r#"{"type":"reset","seq":1,"other":2}"#,
            r#"{"type":"select_and_execute","seq":1,"payload":{"target":-2}}"#,
        ] {
            assert!(parse_command(text).is_err(), "{text}");
        }
    }

    #[test]
    fn commands_round_trip() {
        for (i, c) in [
            Command::GetState,
            Command::Jog { twist: [0.1, -0.2, 0.3, 0.0, 1e-3, -5.0] },
            Command::Capture,
            Command::SelectAndExecute { target: 7 },
            Command::Abort,
            Command::Reset,
        ]
        .into_iter()
        .enumerate()
        {
            assert_eq!(parse_command(&encode_command(i as u64, &c)).unwrap(), (i as u64, c));
        }
    }

    #[test]
    fn server_messages_round_trip() {
        let m = ServerMessage::Heartbeat(Heartbeat { state: SessionState::Idle, time_s: 1.5, vertices: 0 });
        let text = encode_server_message(9, &m);
        assert!(text.contains(r#""type":"heartbeat""#));
        assert_eq!(decode_server_message(&text).unwrap(), (9, m));
    }
}
