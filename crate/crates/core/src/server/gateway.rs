use std::sync::Arc;

use super::platform::Platform;
use crate::attendance::{RawPayload, Reason};
use crate::device::{
    AckBody, ActuatorCmd, DisplayText, MessageBody, MessageHandler, NodeType, WireMessage, TAKEN_TEXT,
};
use crate::ecosmart::TraceRecord;

/// Server end of one device connection. A node must say Hello before
/// anything else; every node message except an Ack is answered with exactly
/// one Ack, preceded by any display or actuator messages it caused.
pub struct DeviceGateway {
    platform: Arc<Platform>,
    node: Option<(String, NodeType, String)>,
    seq: u64,
}

impl DeviceGateway {
    pub fn new(platform: Arc<Platform>) -> Self {
        Self { platform, node: None, seq: 0 }
    }

    fn message(&mut self, body: MessageBody) -> WireMessage {
        self.seq += 1;
        WireMessage::new("server", self.seq, body)
    }

    fn ack(&mut self, ack_seq: u64, ok: bool, reason: Option<String>) -> WireMessage {
        self.message(MessageBody::Ack(AckBody { ack_seq, ok, reason }))
    }

    fn auth(&mut self, msg: &WireMessage, room: &str, timestamp: u64, payload: RawPayload) -> Vec<WireMessage> {
        let session = self.platform.snapshot().open_session_for_room(room).map(str::to_string);
        let Some(session) = session else {
            return vec![self.ack(msg.seq, false, Some(format!("no open session in room {room}")))];
        };
        match self.platform.ingest_auth(&session, timestamp, &msg.node_id, payload) {
            Ok((_, ack)) => {
                let mut out = Vec::new();
                if ack.completes {
                    out.push(self.message(MessageBody::DisplayText(DisplayText { lines: vec![TAKEN_TEXT.into()] })));
                }
                let reason = (ack.reason != Reason::Ok).then(|| ack.reason.to_string());
                out.push(self.ack(msg.seq, true, reason));
                out
            }
            Err(e) => vec![self.ack(msg.seq, false, Some(e.to_string()))],
        }
    }

    fn sensors(&mut self, msg: &WireMessage, room: &str, record: TraceRecord) -> Vec<WireMessage> {
        match self.platform.sample_environment(room, record) {
            Ok((_, outcome)) => {
                let mut out: Vec<WireMessage> = outcome
                    .commands
                    .into_iter()
                    .map(|c| {
                        self.message(MessageBody::ActuatorCmd(ActuatorCmd {
                            actuator: c.actuator,
                            state: c.state,
                            cause: c.cause,
                            timestamp: record.timestamp_ms,
                        }))
                    })
                    .collect();
                out.push(self.ack(msg.seq, true, None));
                out
            }
            Err(e) => vec![self.ack(msg.seq, false, Some(e.to_string()))],
        }
    }
}

impl MessageHandler for DeviceGateway {
    fn handle(&mut self, msg: &WireMessage) -> Vec<WireMessage> {
        if let MessageBody::Ack(_) = msg.body {
            return Vec::new();
        }
        if let MessageBody::Hello(h) = &msg.body {
            return match self.platform.node_connected(&msg.node_id, h.node_type, &h.room_id) {
                Ok(_) => {
                    self.node = Some((msg.node_id.clone(), h.node_type, h.room_id.clone()));
                    vec![self.ack(msg.seq, true, None)]
                }
                Err(e) => vec![self.ack(msg.seq, false, Some(e.to_string()))],
            };
        }
        let Some((node_id, node_type, room)) = self.node.clone() else {
            return vec![self.ack(msg.seq, false, Some("hello required first".into()))];
        };
        if msg.node_id != node_id {
            return vec![self.ack(msg.seq, false, Some(format!("connection belongs to node {node_id}")))];
        }
        match (&msg.body, node_type) {
            (MessageBody::RfidScan(s), NodeType::Attendance) => {
                self.auth(msg, &room, s.timestamp, RawPayload::Rfid { tag_uid: s.tag_uid.clone() })
            }
            (MessageBody::WifiJoin(w), NodeType::Attendance) => self.auth(
                msg,
                &room,
                w.timestamp,
                RawPayload::Wifi { mac: w.mac.clone(), network_id: w.network_id.clone() },
            ),
            (MessageBody::SensorReport(r), NodeType::Eco) => {
                let record = TraceRecord {
                    timestamp_ms: r.timestamp,
                    temp_c: r.temp_c,
                    humidity_pct: r.humidity_pct,
                    lux_raw: r.lux_raw,
                    air_raw: r.air_raw,
                };
                self.sensors(msg, &room, record)
            }
            (body, _) => {
                let reason = format!("{} not accepted from a {node_type:?} node", body.type_name());
                vec![self.ack(msg.seq, false, Some(reason))]
            }
        }
    }
}
