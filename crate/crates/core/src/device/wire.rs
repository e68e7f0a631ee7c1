use std::io::{BufRead, Read};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::attendance::Millis;
use crate::ecosmart::{Actuator, Switch};

/// Largest accepted frame, excluding the trailing newline.
pub const MAX_FRAME_BYTES: usize = 64 * 1024;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("frame of {len} bytes exceeds the {MAX_FRAME_BYTES} byte limit")]
    FrameTooLong { len: usize },
    #[error("frame is not valid UTF-8")]
    Utf8,
    #[error("malformed frame: {0}")]
    Json(String),
    #[error("unknown message type {0:?}")]
    UnknownType(String),
    #[error("invalid {kind} body: {message}")]
    Body { kind: String, message: String },
    #[error("connection closed mid-frame")]
    Truncated,
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeType {
    Attendance,
    Eco,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hello {
    pub node_type: NodeType,
    pub room_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RfidScan {
    pub tag_uid: String,
    pub timestamp: Millis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WifiJoin {
    pub mac: String,
    pub network_id: String,
    pub timestamp: Millis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorReport {
    pub timestamp: Millis,
    pub temp_c: f64,
    pub humidity_pct: f64,
    pub lux_raw: i64,
    pub air_raw: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuatorCmd {
    pub actuator: Actuator,
    pub state: Switch,
    pub cause: String,
    pub timestamp: Millis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisplayText {
    pub lines: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AckBody {
    pub ack_seq: u64,
    pub ok: bool,
    #[serde(default)]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MessageBody {
    Hello(Hello),
    RfidScan(RfidScan),
    WifiJoin(WifiJoin),
    SensorReport(SensorReport),
    ActuatorCmd(ActuatorCmd),
    DisplayText(DisplayText),
    Ack(AckBody),
}

impl MessageBody {
    pub fn type_name(&self) -> &'static str {
        match self {
            MessageBody::Hello(_) => "Hello",
            MessageBody::RfidScan(_) => "RfidScan",
            MessageBody::WifiJoin(_) => "WifiJoin",
            MessageBody::SensorReport(_) => "SensorReport",
            MessageBody::ActuatorCmd(_) => "ActuatorCmd",
            MessageBody::DisplayText(_) => "DisplayText",
            MessageBody::Ack(_) => "Ack",
        }
    }

    fn to_value(&self) -> Value {
        let v = match self {
            MessageBody::Hello(b) => serde_json::to_value(b),
            MessageBody::RfidScan(b) => serde_json::to_value(b),
            MessageBody::WifiJoin(b) => serde_json::to_value(b),
            MessageBody::SensorReport(b) => serde_json::to_value(b),
            MessageBody::ActuatorCmd(b) => serde_json::to_value(b),
            MessageBody::DisplayText(b) => serde_json::to_value(b),
            MessageBody::Ack(b) => serde_json::to_value(b),
        };
        v.expect("message bodies always serialize")
    }

    fn from_value(kind: &str, body: Value) -> Result<Self, DecodeError> {
        fn de<T: serde::de::DeserializeOwned>(kind: &str, body: Value) -> Result<T, DecodeError> {
            serde_json::from_value(body).map_err(|e| DecodeError::Body { kind: kind.to_string(), message: e.to_string() })
        }
        Ok(match kind {
            "Hello" => MessageBody::Hello(de(kind, body)?),
            "RfidScan" => MessageBody::RfidScan(de(kind, body)?),
            "WifiJoin" => MessageBody::WifiJoin(de(kind, body)?),
            "SensorReport" => MessageBody::SensorReport(de(kind, body)?),
            "ActuatorCmd" => MessageBody::ActuatorCmd(de(kind, body)?),
            "DisplayText" => MessageBody::DisplayText(de(kind, body)?),
            "Ack" => MessageBody::Ack(de(kind, body)?),
            other => return Err(DecodeError::UnknownType(other.to_string())),
        })
    }
}

/// One protocol frame. On the wire this is a single JSON object with exactly
/// the fields `type`, `node_id`, `seq` and `body`, followed by `\n`.
#[derive(Debug, Clone, PartialEq)]
pub struct WireMessage {
    pub node_id: String,
    pub seq: u64,
    pub body: MessageBody,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Envelope {
    #[serde(rename = "type")]
    kind: String,
    node_id: String,
    seq: u64,
    body: Value,
}

impl WireMessage {
    pub fn new(node_id: &str, seq: u64, body: MessageBody) -> Self {
        Self { node_id: node_id.to_string(), seq, body }
    }

    pub fn ack_seq(&self) -> Option<u64> {
        match &self.body {
            MessageBody::Ack(a) => Some(a.ack_seq),
            _ => None,
        }
    }
}

/// Serializes `msg` as one newline-terminated frame.
pub fn encode_message(msg: &WireMessage) -> Vec<u8> {
    let env = Envelope {
        kind: msg.body.type_name().to_string(),
        node_id: msg.node_id.clone(),
        seq: msg.seq,
        body: msg.body.to_value(),
    };
    let mut out = serde_json::to_vec(&env).expect("envelope serializes");
    out.push(b'\n');
    out
}

/// Parses one frame. A single trailing `\n` (or `\r\n`) is allowed.
pub fn decode_message(frame: &[u8]) -> Result<WireMessage, DecodeError> {
    let frame = frame.strip_suffix(b"\n").unwrap_or(frame);
    let frame = frame.strip_suffix(b"\r").unwrap_or(frame);
    if frame.len() > MAX_FRAME_BYTES {
        return Err(DecodeError::FrameTooLong { len: frame.len() });
    }
    let text = std::str::from_utf8(frame).map_err(|_| DecodeError::Utf8)?;
    let env: Envelope = serde_json::from_str(text).map_err(|e| DecodeError::Json(e.to_string()))?;
    let body = MessageBody::from_value(&env.kind, env.body)?;
    Ok(WireMessage { node_id: env.node_id, seq: env.seq, body })
}

/// Reads the next newline-terminated frame. `Ok(None)` on a clean end of
/// stream; a partial final frame is [`DecodeError::Truncated`]. Never buffers
/// more than one byte past [`MAX_FRAME_BYTES`].
pub fn read_frame<R: BufRead>(reader: &mut R) -> Result<Option<Vec<u8>>, DecodeError> {
    let mut buf = Vec::new();
    let limit = (MAX_FRAME_BYTES + 2) as u64;
    let n = reader
        .by_ref()
        .take(limit)
        .read_until(b'\n', &mut buf)
        .map_err(|e| DecodeError::Io(e.to_string()))?;
    if n == 0 {
        return Ok(None);
    }
    if buf.last() != Some(&b'\n') {
        if buf.len() as u64 >= limit {
            return Err(DecodeError::FrameTooLong { len: buf.len() });
        }
        return Err(DecodeError::Truncated);
    }
    Ok(Some(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hello() -> WireMessage {
        WireMessage::new("door-1", 1, MessageBody::Hello(Hello { node_type: NodeType::Attendance, room_id: "r101".into() }))
    }

    #[test]
    fn hello_round_trips_with_exact_field_names() {
        let bytes = encode_message(&hello());
        let v: Value = serde_json::from_slice(&bytes).unwrap();
        let mut keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        keys.sort();
        assert_eq!(keys, ["body", "node_id", "seq", "type"]);
        assert_eq!(v["type"], "Hello");
        assert_eq!(decode_message(&bytes).unwrap(), hello());
    }

    #[test]
    fn truncated_and_unknown() {
        let bytes = encode_message(&hello());
        assert!(matches!(decode_message(&bytes[..bytes.len() - 5]), Err(DecodeError::Json(_))));
        let odd = br#"{"type":"Teleport","node_id":"n","seq":1,"body":{}}"#;
        assert_eq!(decode_message(odd), Err(DecodeError::UnknownType("Teleport".into())));
    }

    #[test]
    fn oversized_frame() {
        let big = WireMessage::new("n", 1, MessageBody::DisplayText(DisplayText { lines: vec!["x".repeat(MAX_FRAME_BYTES)] }));
        let bytes = encode_message(&big);
        assert!(matches!(decode_message(&bytes), Err(DecodeError::FrameTooLong { .. })));
        let mut r = std::io::BufReader::new(bytes.as_slice());
        assert!(matches!(read_frame(&mut r), Err(DecodeError::FrameTooLong { .. })));
    }

    #[test]
    fn frame_reader() {
        let mut data = encode_message(&hello());
        data.extend(encode_message(&hello()));
        data.extend(b"{\"partial");
        let mut r = std::io::BufReader::new(data.as_slice());
        assert!(read_frame(&mut r).unwrap().is_some());
        assert!(read_frame(&mut r).unwrap().is_some());
        assert_eq!(read_frame(&mut r), Err(DecodeError::Truncated));
        let mut empty = std::io::BufReader::new(&b""[..]);
        assert_eq!(read_frame(&mut empty), Ok(None));
    }

    pub(crate) fn arb_message() -> impl Strategy<Value = WireMessage> {
        let text = "[ -~]{0,24}";
        let finite = -1.0e6f64..1.0e6;
        let body = prop_oneof![
            (any::<bool>(), text).prop_map(|(a, room_id)| MessageBody::Hello(Hello {
                node_type: if a { NodeType::Attendance } else { NodeType::Eco },
                room_id
            })),
            (text, any::<u64>()).prop_map(|(tag_uid, timestamp)| MessageBody::RfidScan(RfidScan { tag_uid, timestamp })),
            (text, text, any::<u64>()).prop_map(|(mac, network_id, timestamp)| MessageBody::WifiJoin(WifiJoin { mac, network_id, timestamp })),
            (any::<u64>(), finite.clone(), finite, any::<i64>(), any::<i64>()).prop_map(|(timestamp, temp_c, humidity_pct, lux_raw, air_raw)| {
                MessageBody::SensorReport(SensorReport { timestamp, temp_c, humidity_pct, lux_raw, air_raw })
            }),
            (0usize..3, any::<bool>(), text, any::<u64>()).prop_map(|(a, on, cause, timestamp)| MessageBody::ActuatorCmd(ActuatorCmd {
                actuator: Actuator::ALL[a],
                state: if on { Switch::On } else { Switch::Off },
                cause,
                timestamp
            })),
            proptest::collection::vec(text, 0..5).prop_map(|lines| MessageBody::DisplayText(DisplayText { lines })),
            (any::<u64>(), any::<bool>(), proptest::option::of(text)).prop_map(|(ack_seq, ok, reason)| MessageBody::Ack(AckBody { ack_seq, ok, reason })),
        ];
        ("[a-z0-9-]{1,12}", any::<u64>(), body).prop_map(|(node_id, seq, body)| WireMessage { node_id, seq, body })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn codec_round_trip(m in arb_message()) {
            prop_assert_eq!(decode_message(&encode_message(&m)).unwrap(), m);
        }

        #[test]
        fn decode_is_total(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let _ = decode_message(&bytes);
        }

        #[test]
        fn decode_survives_mutated_frames(m in arb_message(), at in any::<prop::sample::Index>(), b in any::<u8>()) {
            let mut bytes = encode_message(&m);
            let i = at.index(bytes.len());
            bytes[i] = b;
            let _ = decode_message(&bytes);
        }
    }
}
