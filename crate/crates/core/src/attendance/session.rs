use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use tracing::warn;

use super::evaluate::evaluate_attendance;
use super::{
    AttendanceError, AttendanceStatus, EventKind, MacAddr, Millis, Reason, Registry, TagUid,
    DEFAULT_PAIRING_WINDOW_MS,
};

/// Individually switchable fraud rules. All on by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FraudRules {
    /// A tag scanned while only other students' devices are nearby.
    pub proxy_scan: bool,
    /// The same tag scanned twice within one pairing window.
    pub duplicate_tag: bool,
    /// One device used as evidence for two students.
    pub shared_device: bool,
}

impl Default for FraudRules {
    fn default() -> Self {
        Self { proxy_scan: true, duplicate_tag: true, shared_device: true }
    }
}

impl FraudRules {
    pub fn none() -> Self {
        Self { proxy_scan: false, duplicate_tag: false, shared_device: false }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionParams {
    pub class_id: String,
    pub window_start: Millis,
    pub window_end: Millis,
    pub pairing_window_ms: Millis,
    pub network_id: String,
    #[serde(default)]
    pub fraud_rules: FraudRules,
}

impl SessionParams {
    pub fn validate(&self) -> Result<(), AttendanceError> {
        if self.window_start >= self.window_end {
            return Err(AttendanceError::InvalidWindow {
                start: self.window_start,
                end: self.window_end,
            });
        }
        if self.pairing_window_ms == 0 {
            return Err(AttendanceError::InvalidPairingWindow);
        }
        if self.network_id.trim().is_empty() {
            return Err(AttendanceError::EmptyField("network_id"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SessionState {
    Open,
    Closed,
}

/// A validated authentication factor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuthPayload {
    RfidScan { tag_uid: TagUid },
    WifiPresence { mac: MacAddr, network_id: String },
}

/// Payload as received from a device, before validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RawPayload {
    Rfid { tag_uid: String },
    Wifi { mac: String, network_id: String },
}

impl RawPayload {
    pub fn kind(&self) -> EventKind {
        match self {
            RawPayload::Rfid { .. } => EventKind::RfidScan,
            RawPayload::Wifi { .. } => EventKind::WifiPresence,
        }
    }

    fn parse(&self) -> Option<AuthPayload> {
        match self {
            RawPayload::Rfid { tag_uid } => {
                tag_uid.parse().ok().map(|tag_uid| AuthPayload::RfidScan { tag_uid })
            }
            RawPayload::Wifi { mac, network_id } => {
                let network_id = network_id.trim();
                if network_id.is_empty() {
                    return None;
                }
                mac.parse().ok().map(|mac| AuthPayload::WifiPresence {
                    mac,
                    network_id: network_id.to_string(),
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthEvent {
    pub seq: u64,
    pub timestamp: Millis,
    pub node_id: String,
    pub payload: AuthPayload,
}

impl AuthEvent {
    pub fn kind(&self) -> EventKind {
        match self.payload {
            AuthPayload::RfidScan { .. } => EventKind::RfidScan,
            AuthPayload::WifiPresence { .. } => EventKind::WifiPresence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureLogEntry {
    pub timestamp: Millis,
    pub student_id: Option<String>,
    pub seq: u64,
    pub reason: Reason,
    pub retry_count: u32,
}

/// Immediate feedback for one ingested event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub seq: u64,
    /// The student this event belongs to is now present.
    pub completes: bool,
    pub student_id: Option<String>,
    pub reason: Reason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloseOutcome {
    Closed,
    AlreadyClosed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSession {
    pub session_id: String,
    pub class_id: String,
    pub window_start: Millis,
    pub window_end: Millis,
    pub pairing_window_ms: Millis,
    pub network_id: String,
    pub fraud_rules: FraudRules,
    pub state: SessionState,
    events: Vec<AuthEvent>,
    failures: Vec<FailureLogEntry>,
    next_seq: u64,
}

static SESSION_COUNTER: AtomicU64 = AtomicU64::new(1);

/// Opens a session with a process-unique id and the default fraud rules.
pub fn open_session(
    class_id: &str,
    window_start: Millis,
    window_end: Millis,
    pairing_window_ms: Millis,
    network_id: &str,
) -> Result<ClassSession, AttendanceError> {
    let n = SESSION_COUNTER.fetch_add(1, Ordering::Relaxed);
    ClassSession::open(
        format!("session-{n}"),
        SessionParams {
            class_id: class_id.to_string(),
            window_start,
            window_end,
            pairing_window_ms,
            network_id: network_id.to_string(),
            fraud_rules: FraudRules::default(),
        },
    )
}

impl ClassSession {
    pub fn open(session_id: String, params: SessionParams) -> Result<Self, AttendanceError> {
        params.validate()?;
        Ok(ClassSession {
            session_id,
            class_id: params.class_id,
            window_start: params.window_start,
            window_end: params.window_end,
            pairing_window_ms: params.pairing_window_ms,
            network_id: params.network_id,
            fraud_rules: params.fraud_rules,
            state: SessionState::Open,
            events: Vec::new(),
            failures: Vec::new(),
            next_seq: 0,
        })
    }

    /// Session with default pairing window and no fraud rules; handy for tests.
    pub fn simple(window_start: Millis, window_end: Millis, network_id: &str) -> Self {
        Self::open(
            "session".into(),
            SessionParams {
                class_id: "class".into(),
                window_start,
                window_end,
                pairing_window_ms: DEFAULT_PAIRING_WINDOW_MS,
                network_id: network_id.into(),
                fraud_rules: FraudRules::none(),
            },
        )
        .expect("valid window")
    }

    pub fn is_open(&self) -> bool {
        self.state == SessionState::Open
    }

    pub fn events(&self) -> &[AuthEvent] {
        &self.events
    }

    pub fn failures(&self) -> &[FailureLogEntry] {
        &self.failures
    }

    pub fn in_window(&self, t: Millis) -> bool {
        self.window_start <= t && t <= self.window_end
    }

    /// Ingests one event. Malformed payloads and unknown credentials are not
    /// errors: they are logged to the failure log and reported in the ack.
    pub fn record_event(
        &mut self,
        registry: &Registry,
        timestamp: Millis,
        node_id: &str,
        payload: &RawPayload,
    ) -> Result<Ack, AttendanceError> {
        if !self.is_open() {
            return Err(AttendanceError::SessionClosed(self.session_id.clone()));
        }
        self.next_seq += 1;
        let seq = self.next_seq;

        let Some(parsed) = payload.parse() else {
            self.log_failure(timestamp, None, seq, Reason::Malformed);
            return Ok(Ack { seq, completes: false, student_id: None, reason: Reason::Malformed });
        };

        let owner = match &parsed {
            AuthPayload::RfidScan { tag_uid } => registry.by_tag(tag_uid),
            AuthPayload::WifiPresence { mac, .. } => registry.by_mac(mac),
        }
        .map(|s| s.student_id.clone());

        // Event-local failures, independent of anything else in the session.
        let local_failure = if !self.in_window(timestamp) {
            Some(Reason::OutsideWindow)
        } else {
            match &parsed {
                AuthPayload::WifiPresence { network_id, .. } if *network_id != self.network_id => {
                    Some(Reason::WrongNetwork)
                }
                _ => None,
            }
        };

        self.events.push(AuthEvent {
            seq,
            timestamp,
            node_id: node_id.to_string(),
            payload: parsed,
        });

        let Some(student_id) = owner else {
            self.log_failure(timestamp, None, seq, Reason::TagMacMismatch);
            return Ok(Ack { seq, completes: false, student_id: None, reason: Reason::TagMacMismatch });
        };

        let result = evaluate_attendance(self, registry)
            .into_iter()
            .find(|r| r.student_id == student_id)
            .expect("owner is registered");

        let (completes, reason) = match (result.status, local_failure) {
            (AttendanceStatus::Present, _) => (true, Reason::Ok),
            (AttendanceStatus::Flagged, _) => (false, result.reason),
            (AttendanceStatus::Absent, Some(r)) => (false, r),
            (AttendanceStatus::Absent, None) => (false, result.reason),
        };
        if !completes && (local_failure.is_some() || result.status == AttendanceStatus::Flagged) {
            self.log_failure(timestamp, Some(student_id.clone()), seq, reason);
        }
        Ok(Ack { seq, completes, student_id: Some(student_id), reason })
    }

    fn log_failure(&mut self, timestamp: Millis, student_id: Option<String>, seq: u64, reason: Reason) {
        let retry_count = match &student_id {
            Some(id) => self
                .failures
                .iter()
                .filter(|f| f.student_id.as_deref() == Some(id.as_str()))
                .count() as u32,
            None => 0,
        };
        warn!(session = %self.session_id, seq, ?student_id, %reason, retry_count, "authentication failure");
        self.failures.push(FailureLogEntry { timestamp, student_id, seq, reason, retry_count });
    }

    /// Closes the session. Closing twice is a no-op.
    pub fn close(&mut self) -> CloseOutcome {
        match self.state {
            SessionState::Open => {
                self.state = SessionState::Closed;
                CloseOutcome::Closed
            }
            SessionState::Closed => CloseOutcome::AlreadyClosed,
        }
    }

    /// Appends an already-validated event as-is. Used by tests and oracles
    /// that need control over sequence numbers.
    pub fn push_event(&mut self, timestamp: Millis, node_id: &str, payload: AuthPayload) -> u64 {
        self.next_seq += 1;
        self.events.push(AuthEvent {
            seq: self.next_seq,
            timestamp,
            node_id: node_id.to_string(),
            payload,
        });
        self.next_seq
    }

    /// Copy of this session keeping only the events accepted by `keep`.
    pub fn filtered(&self, keep: impl Fn(&AuthEvent) -> bool) -> Self {
        let mut s = self.clone();
        s.events.retain(|e| keep(e));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn registry() -> Registry {
        let mut r = Registry::new();
        r.register("s1", "Ada", "04a3b2c1", "aa:bb:cc:dd:ee:01").unwrap();
        r.register("s2", "Bob", "04a3b2c2", "aa:bb:cc:dd:ee:02").unwrap();
        r
    }

    fn rfid(tag: &str) -> RawPayload {
        RawPayload::Rfid { tag_uid: tag.into() }
    }

    fn wifi(mac: &str, net: &str) -> RawPayload {
        RawPayload::Wifi { mac: mac.into(), network_id: net.into() }
    }

    #[test]
    fn open_validates_window() {
        let s = open_session("c1", 0, 3_600_000, 300_000, "campus-wifi").unwrap();
        assert!(s.is_open());
        assert!(s.events().is_empty());
        assert_eq!(
            open_session("c1", 5, 5, 300_000, "campus-wifi").unwrap_err(),
            AttendanceError::InvalidWindow { start: 5, end: 5 }
        );
        assert_eq!(
            open_session("c1", 0, 5, 0, "campus-wifi").unwrap_err(),
            AttendanceError::InvalidPairingWindow
        );
    }

    #[test]
    fn back_to_back_sessions_get_distinct_ids() {
        let a = open_session("c1", 0, 10, 5, "n").unwrap();
        let b = open_session("c1", 0, 10, 5, "n").unwrap();
        assert_ne!(a.session_id, b.session_id);
    }

    #[test]
    fn rfid_then_wifi_completes() {
        let reg = registry();
        let mut s = open_session("c1", 0, 3_600_000, 300_000, "campus-wifi").unwrap();
        let ack = s.record_event(&reg, 100_000, "door-1", &rfid("04a3b2c1")).unwrap();
        assert_eq!(ack.seq, 1);
        assert!(!ack.completes);
        assert_eq!(ack.reason, Reason::NoWifi);
        let ack = s
            .record_event(&reg, 130_000, "door-1", &wifi("aa:bb:cc:dd:ee:01", "campus-wifi"))
            .unwrap();
        assert!(ack.completes);
        assert_eq!(ack.reason, Reason::Ok);
        assert_eq!(ack.student_id.as_deref(), Some("s1"));
        assert!(s.failures().is_empty());
    }

    #[test]
    fn unknown_tag_is_logged() {
        let reg = registry();
        let mut s = open_session("c1", 0, 3_600_000, 300_000, "campus-wifi").unwrap();
        let ack = s.record_event(&reg, 100, "door-1", &rfid("ffffffff")).unwrap();
        assert!(!ack.completes);
        assert_eq!(ack.reason, Reason::TagMacMismatch);
        assert_eq!(s.failures().len(), 1);
        assert_eq!(s.failures()[0].student_id, None);
    }

    #[test]
    fn malformed_payload_is_logged_not_stored() {
        let reg = registry();
        let mut s = open_session("c1", 0, 3_600_000, 300_000, "campus-wifi").unwrap();
        let ack = s.record_event(&reg, 100, "door-1", &rfid("xyz")).unwrap();
        assert_eq!(ack.reason, Reason::Malformed);
        let ack = s.record_event(&reg, 100, "door-1", &wifi("aa:bb", "campus-wifi")).unwrap();
        assert_eq!(ack.reason, Reason::Malformed);
        assert_eq!(ack.seq, 2);
        assert!(s.events().is_empty());
        assert_eq!(s.failures().len(), 2);
    }

    #[test]
    fn wrong_network_and_retry_count() {
        let reg = registry();
        let mut s = open_session("c1", 0, 3_600_000, 300_000, "campus-wifi").unwrap();
        for i in 0..3 {
            let ack = s
                .record_event(&reg, 100 + i, "door-1", &wifi("aa:bb:cc:dd:ee:01", "guest"))
                .unwrap();
            assert_eq!(ack.reason, Reason::WrongNetwork);
        }
        let retries: Vec<u32> = s.failures().iter().map(|f| f.retry_count).collect();
        assert_eq!(retries, vec![0, 1, 2]);
    }

    #[test]
    fn outside_window_event() {
        let reg = registry();
        let mut s = open_session("c1", 1_000, 2_000, 300_000, "campus-wifi").unwrap();
        let ack = s.record_event(&reg, 5_000, "door-1", &rfid("04a3b2c1")).unwrap();
        assert_eq!(ack.reason, Reason::OutsideWindow);
        assert_eq!(s.failures().len(), 1);
    }

    #[test]
    fn closed_session_rejects_events_and_close_is_idempotent() {
        let reg = registry();
        let mut s = open_session("c1", 0, 3_600_000, 300_000, "campus-wifi").unwrap();
        assert_eq!(s.close(), CloseOutcome::Closed);
        assert_eq!(s.close(), CloseOutcome::AlreadyClosed);
        assert!(matches!(
            s.record_event(&reg, 1, "door-1", &rfid("04a3b2c1")),
            Err(AttendanceError::SessionClosed(_))
        ));
    }
}
