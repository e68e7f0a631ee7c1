//! Virtual edge nodes: button debouncing, the OLED panel, scripted
//! scenarios and the newline-delimited JSON wire protocol.

mod debounce;
mod display;
mod node;
mod script;
mod wire;

use thiserror::Error;

pub use debounce::{debounce, ButtonSampleStream, Edge};
pub use display::{render_display, DisplayState, DISPLAY_COLUMNS, DISPLAY_LINES, READY_TEXT, TAKEN_TEXT};
pub use node::{
    button_stream, planned_messages, run_node, sensor_reports, serve_stream, Connection, Direction, Loopback,
    MessageHandler, NodeDescriptor, NodeParams, NodeRun, StreamConnection, TranscriptEntry,
};
pub use script::{Action, ScenarioScript, ScriptAction, ScriptError, SensorField};
pub use wire::{
    decode_message, encode_message, read_frame, AckBody, ActuatorCmd, DecodeError, DisplayText, Hello, MessageBody,
    NodeType, RfidScan, SensorReport, WifiJoin, WireMessage, MAX_FRAME_BYTES,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeviceError {
    #[error("connection lost: {0}")]
    ConnectionLost(String),
    #[error(transparent)]
    Script(#[from] ScriptError),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}
