//! Dual-factor attendance.
//!
//! A student counts as present in a [`ClassSession`] when an RFID scan of
//! their tag and a WiFi presence event of their registered device both fall
//! inside the session window and lie within `pairing_window_ms` of each other.
//! Every ingested event gets a sequence number; evaluation is a pure function
//! of the event list, so results can be recomputed at any time.

mod evaluate;
mod registry;
mod session;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use evaluate::{detect_fraud, evaluate_attendance, FraudFlag, FraudRule};
pub use registry::{Registry, StudentRecord};
pub use session::{
    open_session, Ack, AuthEvent, AuthPayload, ClassSession, CloseOutcome, FailureLogEntry,
    FraudRules, RawPayload, SessionParams, SessionState,
};

/// Milliseconds since the epoch, always supplied by the event source.
pub type Millis = u64;

pub const DEFAULT_PAIRING_WINDOW_MS: Millis = 300_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AttendanceError {
    #[error("tag {0} is already registered")]
    DuplicateTag(TagUid),
    #[error("mac {0} is already registered")]
    DuplicateMac(MacAddr),
    #[error("student id {0:?} is already registered")]
    DuplicateStudentId(String),
    #[error("invalid tag uid {0:?}: expected 4 to 10 bytes of hex")]
    InvalidTag(String),
    #[error("invalid mac address {0:?}")]
    InvalidMac(String),
    #[error("{0} must not be empty")]
    EmptyField(&'static str),
    #[error("invalid session window: start {start} must be before end {end}")]
    InvalidWindow { start: Millis, end: Millis },
    #[error("pairing window must be positive")]
    InvalidPairingWindow,
    #[error("session {0} is closed")]
    SessionClosed(String),
    #[error("registry file line {line}: {message}")]
    Bootstrap { line: u64, message: String },
}

/// RFID tag identifier: 4 to 10 bytes, held as lowercase hex.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TagUid(String);

impl TagUid {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for TagUid {
    type Err = AttendanceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let ok = s.len() % 2 == 0
            && (8..=20).contains(&s.len())
            && s.bytes().all(|b| b.is_ascii_hexdigit());
        if ok {
            Ok(TagUid(s.to_ascii_lowercase()))
        } else {
            Err(AttendanceError::InvalidTag(s.to_string()))
        }
    }
}

impl TryFrom<String> for TagUid {
    type Error = AttendanceError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<TagUid> for String {
    fn from(t: TagUid) -> String {
        t.0
    }
}

impl fmt::Display for TagUid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// 48-bit device MAC address. Parses `:` or `-` separated hex in any case and
/// displays in canonical lowercase colon form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MacAddr([u8; 6]);

impl MacAddr {
    pub fn new(bytes: [u8; 6]) -> Self {
        MacAddr(bytes)
    }

    pub fn octets(&self) -> [u8; 6] {
        self.0
    }
}

impl FromStr for MacAddr {
    type Err = AttendanceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || AttendanceError::InvalidMac(s.to_string());
        let parts: Vec<&str> = s.trim().split([':', '-']).collect();
        if parts.len() != 6 {
            return Err(bad());
        }
        let mut out = [0u8; 6];
        for (slot, part) in out.iter_mut().zip(parts) {
            if part.len() != 2 {
                return Err(bad());
            }
            *slot = u8::from_str_radix(part, 16).map_err(|_| bad())?;
        }
        Ok(MacAddr(out))
    }
}

impl TryFrom<String> for MacAddr {
    type Error = AttendanceError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<MacAddr> for String {
    fn from(m: MacAddr) -> String {
        m.to_string()
    }
}

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            b[0], b[1], b[2], b[3], b[4], b[5]
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    RfidScan,
    WifiPresence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AttendanceStatus {
    Present,
    Absent,
    Flagged,
}

/// Why a student has the status they have, or why an event failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Reason {
    Ok,
    NoRfid,
    NoWifi,
    OutsideWindow,
    PairingTooFar,
    WrongNetwork,
    TagMacMismatch,
    DuplicateTagUse,
    /// Payload could not be parsed. Only seen in acks and the failure log.
    Malformed,
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Sequence numbers of the RFID and WiFi events that proved presence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Evidence {
    pub rfid_seq: u64,
    pub wifi_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttendanceResult {
    pub student_id: String,
    pub status: AttendanceStatus,
    pub evidence: Option<Evidence>,
    pub reason: Reason,
}
