use std::collections::VecDeque;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::debounce::{debounce, ButtonSampleStream, Edge};
use super::display::{render_display, DisplayState, TAKEN_TEXT};
use super::script::{Action, ScenarioScript, SensorField};
use super::wire::{
    decode_message, encode_message, read_frame, AckBody, Hello, MessageBody, NodeType, RfidScan, SensorReport,
    WifiJoin, WireMessage,
};
use super::DeviceError;
use crate::attendance::Millis;
use crate::ecosmart::ActuatorState;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeDescriptor {
    pub node_id: String,
    pub node_type: NodeType,
    pub room_id: String,
}

/// Timing of the simulated hardware.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NodeParams {
    pub sample_period_ms: Millis,
    pub stable_samples: usize,
    pub poll_period_ms: Millis,
}

impl Default for NodeParams {
    fn default() -> Self {
        Self { sample_period_ms: 10, stable_samples: 5, poll_period_ms: 1000 }
    }
}

/// A bidirectional message channel to the platform.
pub trait Connection {
    fn send(&mut self, msg: &WireMessage) -> Result<(), DeviceError>;
    fn recv(&mut self) -> Result<WireMessage, DeviceError>;
}

/// Server side of a connection: consumes one message and returns the
/// messages to send back, in order.
pub trait MessageHandler {
    fn handle(&mut self, msg: &WireMessage) -> Vec<WireMessage>;
}

/// In-process connection straight into a handler. Every message still goes
/// through the wire codec in both directions.
pub struct Loopback<H> {
    handler: H,
    inbox: VecDeque<WireMessage>,
}

impl<H: MessageHandler> Loopback<H> {
    pub fn new(handler: H) -> Self {
        Self { handler, inbox: VecDeque::new() }
    }

    pub fn into_handler(self) -> H {
        self.handler
    }
}

impl<H: MessageHandler> Connection for Loopback<H> {
    fn send(&mut self, msg: &WireMessage) -> Result<(), DeviceError> {
        let decoded = decode_message(&encode_message(msg))?;
        for reply in self.handler.handle(&decoded) {
            self.inbox.push_back(decode_message(&encode_message(&reply))?);
        }
        Ok(())
    }

    fn recv(&mut self) -> Result<WireMessage, DeviceError> {
        self.inbox.pop_front().ok_or_else(|| DeviceError::ConnectionLost("no reply pending".into()))
    }
}

/// Newline-delimited frames over a byte stream such as a TCP socket.
pub struct StreamConnection<R, W> {
    reader: R,
    writer: W,
}

impl<R: BufRead, W: Write> StreamConnection<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        Self { reader, writer }
    }
}

impl<R: BufRead, W: Write> Connection for StreamConnection<R, W> {
    fn send(&mut self, msg: &WireMessage) -> Result<(), DeviceError> {
        self.writer
            .write_all(&encode_message(msg))
            .and_then(|_| self.writer.flush())
            .map_err(|e| DeviceError::ConnectionLost(e.to_string()))
    }

    fn recv(&mut self) -> Result<WireMessage, DeviceError> {
        match read_frame(&mut self.reader)? {
            Some(frame) => Ok(decode_message(&frame)?),
            None => Err(DeviceError::ConnectionLost("stream closed".into())),
        }
    }
}

/// Runs the server side of a stream until the peer disconnects. Frames that
/// fail to decode are answered with a negative ack for seq 0.
pub fn serve_stream<R: BufRead, W: Write, H: MessageHandler>(
    mut reader: R,
    mut writer: W,
    handler: &mut H,
) -> Result<(), DeviceError> {
    loop {
        let replies = match read_frame(&mut reader) {
            Ok(None) => return Ok(()),
            Ok(Some(frame)) => match decode_message(&frame) {
                Ok(msg) => handler.handle(&msg),
                Err(e) => vec![nack("server", 0, &e.to_string())],
            },
            Err(e) => return Err(e.into()),
        };
        for r in replies {
            writer.write_all(&encode_message(&r)).map_err(|e| DeviceError::ConnectionLost(e.to_string()))?;
        }
        writer.flush().map_err(|e| DeviceError::ConnectionLost(e.to_string()))?;
    }
}

fn nack(node_id: &str, ack_seq: u64, reason: &str) -> WireMessage {
    WireMessage::new(node_id, 0, MessageBody::Ack(AckBody { ack_seq, ok: false, reason: Some(reason.to_string()) }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Sent,
    Received,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptEntry {
    pub direction: Direction,
    pub message: WireMessage,
}

/// Everything a node run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeRun {
    pub transcript: Vec<TranscriptEntry>,
    /// Every screen shown, starting with the initial one.
    pub displays: Vec<Vec<String>>,
    /// Local mirror of actuator relays, driven by received commands.
    pub actuators: ActuatorState,
    /// Set when the run stopped early.
    pub error: Option<DeviceError>,
}

impl NodeRun {
    pub fn sent(&self) -> impl Iterator<Item = &WireMessage> {
        self.transcript.iter().filter(|e| e.direction == Direction::Sent).map(|e| &e.message)
    }

    pub fn received(&self) -> impl Iterator<Item = &WireMessage> {
        self.transcript.iter().filter(|e| e.direction == Direction::Received).map(|e| &e.message)
    }

    pub fn display(&self) -> &[String] {
        self.displays.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Level of the button line at `t` implied by press and glitch actions.
fn button_level(script: &ScenarioScript, period: Millis, t: Millis) -> bool {
    script.actions.iter().any(|a| {
        if t < a.at {
            return false;
        }
        let dt = t - a.at;
        match &a.action {
            Action::Press { hold_ms, bounces, .. } => {
                let chatter = 2 * *bounces as Millis * period;
                if dt < chatter {
                    (dt / period) % 2 == 0
                } else if dt < chatter + hold_ms {
                    true
                } else if dt < 2 * chatter + hold_ms {
                    ((dt - chatter - hold_ms) / period) % 2 == 1
                } else {
                    false
                }
            }
            Action::Glitch { duration_ms } => dt < *duration_ms,
            _ => false,
        }
    })
}

/// Samples the button line over the span of all press and glitch actions,
/// with settled margins on both sides.
pub fn button_stream(script: &ScenarioScript, params: &NodeParams) -> ButtonSampleStream {
    let p = params.sample_period_ms.max(1);
    let margin = (params.stable_samples as Millis + 1) * p;
    let mut span: Option<(Millis, Millis)> = None;
    for a in &script.actions {
        let len = match &a.action {
            Action::Press { hold_ms, bounces, .. } => hold_ms + 4 * *bounces as Millis * p,
            Action::Glitch { duration_ms } => *duration_ms,
            _ => continue,
        };
        let (s, e) = span.unwrap_or((a.at, a.at));
        span = Some((s.min(a.at), e.max(a.at + len)));
    }
    let Some((start, end)) = span else {
        return ButtonSampleStream { sample_period_ms: p, samples: vec![] };
    };
    let start = start.saturating_sub(margin);
    let count = (end + margin - start) / p + 1;
    ButtonSampleStream::from_levels(start, p, (0..count).map(|i| button_level(script, p, start + i * p)))
}

/// Tag of the press whose active span contains `t`.
fn press_at(script: &ScenarioScript, period: Millis, t: Millis) -> Option<&str> {
    script.actions.iter().rev().find_map(|a| match &a.action {
        Action::Press { tag_uid, hold_ms, bounces } if a.at <= t && t < a.at + hold_ms + 4 * *bounces as Millis * period => {
            Some(tag_uid.as_str())
        }
        _ => None,
    })
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    at: Millis,
    from: f64,
    to: f64,
    duration: Millis,
}

impl Segment {
    fn value(&self, t: Millis) -> f64 {
        if self.duration == 0 || t >= self.at + self.duration {
            return self.to;
        }
        self.from + (self.to - self.from) * (t - self.at) as f64 / self.duration as f64
    }
}

fn field_index(f: SensorField) -> usize {
    match f {
        SensorField::TempC => 0,
        SensorField::HumidityPct => 1,
        SensorField::LuxRaw => 2,
        SensorField::AirRaw => 3,
    }
}

/// Sensor reports at every poll tick from the first `sensors` action to the
/// end of the script.
pub fn sensor_reports(script: &ScenarioScript, params: &NodeParams) -> Vec<SensorReport> {
    let mut tracks: [Vec<Segment>; 4] = Default::default();
    let value = |tracks: &[Vec<Segment>; 4], i: usize, t: Millis| {
        tracks[i].iter().rev().find(|s| s.at <= t).map(|s| s.value(t))
    };
    let mut start = None;
    let mut end: Millis = 0;
    for a in &script.actions {
        end = end.max(a.at);
        match &a.action {
            Action::Sensors { temp_c, humidity_pct, lux_raw, air_raw } => {
                start.get_or_insert(a.at);
                for (i, v) in [*temp_c, *humidity_pct, *lux_raw as f64, *air_raw as f64].into_iter().enumerate() {
                    tracks[i].push(Segment { at: a.at, from: v, to: v, duration: 0 });
                }
            }
            Action::Ramp { field, to, duration_ms } => {
                let i = field_index(*field);
                if let Some(from) = value(&tracks, i, a.at) {
                    tracks[i].push(Segment { at: a.at, from, to: *to, duration: *duration_ms });
                    end = end.max(a.at + duration_ms);
                }
            }
            _ => {}
        }
    }
    let Some(start) = start else { return vec![] };
    let period = params.poll_period_ms.max(1);
    (0..)
        .map(|k| start + k * period)
        .take_while(|t| *t <= end)
        .map(|t| {
            let v = |i| value(&tracks, i, t).expect("all fields set by the first sensors action");
            SensorReport {
                timestamp: t,
                temp_c: v(0),
                humidity_pct: v(1),
                lux_raw: v(2).round() as i64,
                air_raw: v(3).round() as i64,
            }
        })
        .collect()
}

/// Messages the node will send after Hello, in virtual-time order.
pub fn planned_messages(script: &ScenarioScript, params: &NodeParams) -> Vec<(Millis, MessageBody)> {
    let mut out: Vec<(Millis, MessageBody)> = Vec::new();
    let stream = button_stream(script, params);
    for (t, edge) in debounce(&stream.samples, params.stable_samples) {
        if edge == Edge::Rising {
            if let Some(tag) = press_at(script, stream.sample_period_ms, t) {
                out.push((t, MessageBody::RfidScan(RfidScan { tag_uid: tag.to_string(), timestamp: t })));
            }
        }
    }
    for a in &script.actions {
        match &a.action {
            Action::Scan { tag_uid } => {
                out.push((a.at, MessageBody::RfidScan(RfidScan { tag_uid: tag_uid.clone(), timestamp: a.at })))
            }
            Action::Wifi { mac, network_id } => out.push((
                a.at,
                MessageBody::WifiJoin(WifiJoin { mac: mac.clone(), network_id: network_id.clone(), timestamp: a.at }),
            )),
            _ => {}
        }
    }
    out.extend(sensor_reports(script, params).into_iter().map(|r| (r.timestamp, MessageBody::SensorReport(r))));
    out.sort_by_key(|(t, _)| *t);
    out
}

struct NodeState<'a, C> {
    node_id: &'a str,
    conn: &'a mut C,
    seq: u64,
    run: NodeRun,
}

impl<C: Connection> NodeState<'_, C> {
    fn send(&mut self, body: MessageBody) -> Result<u64, DeviceError> {
        self.seq += 1;
        let msg = WireMessage::new(self.node_id, self.seq, body);
        self.conn.send(&msg)?;
        self.run.transcript.push(TranscriptEntry { direction: Direction::Sent, message: msg });
        Ok(self.seq)
    }

    /// Sends `body` and processes server messages until its ack arrives.
    fn exchange(&mut self, body: MessageBody) -> Result<(), DeviceError> {
        let seq = self.send(body)?;
        loop {
            let msg = self.conn.recv()?;
            self.run.transcript.push(TranscriptEntry { direction: Direction::Received, message: msg.clone() });
            match &msg.body {
                MessageBody::Ack(a) if a.ack_seq == seq => return Ok(()),
                MessageBody::Ack(a) => {
                    return Err(DeviceError::Protocol(format!("expected ack for {seq}, got ack for {}", a.ack_seq)))
                }
                MessageBody::DisplayText(d) => {
                    let state = if d.lines.len() == 1 && d.lines[0] == TAKEN_TEXT {
                        DisplayState::AttendanceTaken
                    } else {
                        DisplayState::Text(d.lines.clone())
                    };
                    self.run.displays.push(render_display(&state));
                }
                MessageBody::ActuatorCmd(c) => self.run.actuators.set(c.actuator, c.state),
                _ => {}
            }
            self.send(MessageBody::Ack(AckBody { ack_seq: msg.seq, ok: true, reason: None }))?;
        }
    }
}

/// Plays `script` as node `descriptor` over `conn` in virtual time. The run
/// stops at the first connection or protocol failure; the transcript up to
/// that point is kept.
pub fn run_node<C: Connection>(descriptor: &NodeDescriptor, script: &ScenarioScript, params: &NodeParams, conn: &mut C) -> NodeRun {
    let mut node = NodeState {
        node_id: &descriptor.node_id,
        conn,
        seq: 0,
        run: NodeRun {
            transcript: Vec::new(),
            displays: vec![render_display(&DisplayState::Ready)],
            actuators: ActuatorState::default(),
            error: None,
        },
    };
    let hello = MessageBody::Hello(Hello { node_type: descriptor.node_type, room_id: descriptor.room_id.clone() });
    let result = std::iter::once(hello)
        .chain(planned_messages(script, params).into_iter().map(|(_, b)| b))
        .try_for_each(|body| node.exchange(body));
    node.run.error = result.err();
    node.run
}
