//! Message envelope `{v, type, payload}` in both directions.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thirdview::harness::Snapshot;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub v: u32,
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub payload: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Driver,
    Viewer,
}

/// Messages a console sends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum ClientMessage {
    /// Asks for a role. Sessions start as viewers.
    Hello {
        role: Role,
    },
    /// Raw command object; validated against the live robot list.
    Command(Value),
    Ping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum ServerMessage {
    Welcome {
        role: Role,
        robots: Vec<String>,
        rate: f64,
    },
    /// Role actually granted after a hello.
    Role {
        role: Role,
    },
    Snapshot(Box<Snapshot>),
    /// The command was queued for the next tick.
    Ack {
        command: String,
    },
    Error {
        reason: String,
    },
    Pong,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("protocol version {found} not supported (expected {PROTOCOL_VERSION})")]
    Version { found: u32 },
}

fn with_version(mut value: Value) -> Value {
    if let Value::Object(map) = &mut value {
        map.insert("v".into(), Value::from(PROTOCOL_VERSION));
    }
    value
}

impl ServerMessage {
    pub fn to_text(&self) -> String {
        with_version(serde_json::to_value(self).expect("server messages serialise")).to_string()
    }

    pub fn parse(text: &str) -> Result<Self, ProtocolError> {
        parse_enveloped(text)
    }
}

impl ClientMessage {
    pub fn to_text(&self) -> String {
        with_version(serde_json::to_value(self).expect("client messages serialise")).to_string()
    }

    pub fn parse(text: &str) -> Result<Self, ProtocolError> {
        parse_enveloped(text)
    }
}

fn parse_enveloped<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, ProtocolError> {
    let env: Envelope = serde_json::from_str(text).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    if env.v != PROTOCOL_VERSION {
        return Err(ProtocolError::Version { found: env.v });
    }
    let mut inner = serde_json::Map::new();
    inner.insert("type".into(), Value::String(env.kind));
    if !env.payload.is_null() {
        inner.insert("payload".into(), env.payload);
    }
    serde_json::from_value(Value::Object(inner)).map_err(|e| ProtocolError::Malformed(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn command_envelope_parses() {
        let msg = ClientMessage::parse(r#"{"v":1,"type":"command","payload":{"type":"return_home"}}"#).unwrap();
        assert_eq!(msg, ClientMessage::Command(json!({"type": "return_home"})));
    }

    #[test]
    fn ping_needs_no_payload() {
        assert_eq!(
            ClientMessage::parse(r#"{"v":1,"type":"ping"}"#).unwrap(),
            ClientMessage::Ping
        );
    }

    #[test]
    fn wrong_version_is_rejected() {
        assert_eq!(
            ClientMessage::parse(r#"{"v":2,"type":"ping"}"#),
            Err(ProtocolError::Version { found: 2 })
        );
    }

    #[test]
    fn garbage_is_malformed() {
        assert!(matches!(
            ClientMessage::parse("{nope"),
            Err(ProtocolError::Malformed(_))
        ));
        assert!(matches!(
            ClientMessage::parse(r#"{"v":1,"type":"launch"}"#),
            Err(ProtocolError::Malformed(_))
        ));
    }

    #[test]
    fn server_messages_carry_version() {
        let text = ServerMessage::Error { reason: "x".into() }.to_text();
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v, json!({"v": 1, "type": "error", "payload": {"reason": "x"}}));
        assert_eq!(
            ServerMessage::parse(&text).unwrap(),
            ServerMessage::Error { reason: "x".into() }
        );
    }

    #[test]
    fn hello_round_trips() {
        let m = ClientMessage::Hello { role: Role::Driver };
        assert_eq!(ClientMessage::parse(&m.to_text()).unwrap(), m);
    }
}
