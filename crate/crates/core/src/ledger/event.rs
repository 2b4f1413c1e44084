use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::types::{Address, Epoch};

/// Event payload. Keys serialize in sorted order.
pub type Payload = Map<String, Value>;

/// Builds a payload from a `json!({...})` object literal.
///
/// Panics if `value` is not an object.
pub fn payload(value: Value) -> Payload {
    match value {
        Value::Object(map) => map,
        other => panic!("event payload must be an object, got {other}"),
    }
}

/// One entry in the append-only log. Field order is the serialized order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub epoch: Epoch,
    pub seq: u64,
    pub emitter: Address,
    pub tag: String,
    pub payload: Payload,
}

impl Event {
    pub fn get_u64(&self, key: &str) -> Option<u64> {
        self.payload.get(key).and_then(Value::as_u64)
    }

    pub fn get_address(&self, key: &str) -> Option<Address> {
        self.get_u64(key).map(|a| Address(a as u32))
    }
}

/// Serializes events as JSON lines, one object per line, trailing newline.
pub fn to_jsonl(events: &[Event]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).expect("events serialize"));
        out.push('\n');
    }
    out
}

pub fn from_jsonl(text: &str) -> Result<Vec<Event>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

/// Hex SHA-256 of the JSON-lines rendering.
pub fn digest(events: &[Event]) -> String {
    hex::encode(Sha256::digest(to_jsonl(events).as_bytes()))
}
