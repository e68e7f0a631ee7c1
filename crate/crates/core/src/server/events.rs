use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::assistant::Answer;
use crate::attendance::{
    evaluate_attendance, Ack, AttendanceResult, ClassSession, Millis, RawPayload, Registry, SessionParams, StudentRecord,
};
use crate::device::NodeType;
use crate::ecosmart::{ActuatorCommand, ActuatorState, Reading, TraceRecord};
use crate::quizgen::Quiz;
use crate::retrieval::Document;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Attendance,
    Environment,
    Chat,
    Quiz,
    Device,
}

/// A state change, fully determined before it is logged. Applying it never
/// fails, so replaying a log reproduces the live state exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum PlatformEvent {
    StudentRegistered {
        record: StudentRecord,
    },
    SessionOpened {
        session_id: String,
        room_id: String,
        params: SessionParams,
    },
    AuthEventIngested {
        session_id: String,
        timestamp: Millis,
        node_id: String,
        payload: RawPayload,
    },
    SessionClosed {
        session_id: String,
        results: Vec<AttendanceResult>,
    },
    DocumentIngested {
        document: Document,
    },
    EnvironmentSampled {
        room_id: String,
        record: TraceRecord,
        reading: Reading,
        state: ActuatorState,
        commands: Vec<ActuatorCommand>,
    },
    ChatAnswered {
        session_id: String,
        student_id: String,
        doc_id: String,
        doc_version: String,
        question: String,
        answer: Answer,
    },
    QuizGenerated {
        doc_version: String,
        quiz: Quiz,
    },
    NodeConnected {
        node_id: String,
        node_type: NodeType,
        room_id: String,
    },
}

impl PlatformEvent {
    pub fn category(&self) -> Category {
        match self {
            PlatformEvent::StudentRegistered { .. }
            | PlatformEvent::SessionOpened { .. }
            | PlatformEvent::AuthEventIngested { .. }
            | PlatformEvent::SessionClosed { .. } => Category::Attendance,
            PlatformEvent::DocumentIngested { .. } | PlatformEvent::ChatAnswered { .. } => Category::Chat,
            PlatformEvent::EnvironmentSampled { .. } => Category::Environment,
            PlatformEvent::QuizGenerated { .. } => Category::Quiz,
            PlatformEvent::NodeConnected { .. } => Category::Device,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEntry {
    pub room_id: String,
    pub session: ClassSession,
    /// Frozen at close.
    pub final_results: Option<Vec<AttendanceResult>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RoomEnvironment {
    pub last_reading: Option<Reading>,
    pub last_record: Option<TraceRecord>,
    pub actuators: ActuatorState,
    pub samples: u64,
    pub toggles: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeInfo {
    pub node_type: NodeType,
    pub room_id: String,
}

/// Everything the platform knows, rebuilt by folding events in order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlatformState {
    pub registry: Registry,
    pub sessions: BTreeMap<String, SessionEntry>,
    pub documents: BTreeMap<String, Document>,
    pub rooms: BTreeMap<String, RoomEnvironment>,
    pub nodes: BTreeMap<String, NodeInfo>,
    /// Document versions that have been indexed for a chat or quiz, latest
    /// per document, matching what the index cache holds.
    pub indexed: BTreeMap<String, String>,
    pub chats: u64,
    /// Quizzes generated per document.
    pub quizzes: BTreeMap<String, u64>,
    pub last_seq: u64,
}

/// What applying an event produced, for the caller's response.
#[derive(Debug, Clone, PartialEq)]
pub enum Applied {
    Nothing,
    Ack(Ack),
}

/// Hex SHA-256 over the canonical JSON of the digest-relevant state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateDigest(pub String);

impl std::fmt::Display for StateDigest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Serialize)]
struct CanonicalState<'a> {
    attendance: BTreeMap<&'a str, Vec<AttendanceResult>>,
    actuators: BTreeMap<&'a str, ActuatorState>,
    cache_keys: &'a BTreeMap<String, String>,
    quiz_counters: &'a BTreeMap<String, u64>,
}

impl PlatformState {
    /// Current results for a session: live while open, frozen once closed.
    pub fn session_results(&self, session_id: &str) -> Option<Vec<AttendanceResult>> {
        let entry = self.sessions.get(session_id)?;
        Some(match &entry.final_results {
            Some(r) => r.clone(),
            None => evaluate_attendance(&entry.session, &self.registry),
        })
    }

    /// The open session a device in `room_id` reports to: the most recently
    /// opened one by id order when several are open.
    pub fn open_session_for_room(&self, room_id: &str) -> Option<&str> {
        self.sessions
            .iter()
            .rev()
            .find(|(_, e)| e.room_id == room_id && e.session.is_open())
            .map(|(id, _)| id.as_str())
    }

    pub fn any_session_open(&self) -> bool {
        self.sessions.values().any(|e| e.session.is_open())
    }

    pub fn digest(&self) -> StateDigest {
        let canonical = CanonicalState {
            attendance: self
                .sessions
                .keys()
                .map(|id| (id.as_str(), self.session_results(id).expect("session exists")))
                .collect(),
            actuators: self.rooms.iter().map(|(id, r)| (id.as_str(), r.actuators)).collect(),
            cache_keys: &self.indexed,
            quiz_counters: &self.quizzes,
        };
        let json = serde_json::to_vec(&canonical).expect("state serializes");
        StateDigest(crate::sha256_hex(&json))
    }

    /// Folds one event into the state. Callers validate first; an event that
    /// slipped through invalid is ignored rather than corrupting the state.
    pub fn apply(&mut self, seq: u64, event: &PlatformEvent) -> Applied {
        self.last_seq = seq;
        match event {
            PlatformEvent::StudentRegistered { record } => {
                let _ = self.registry.insert(record.clone());
            }
            PlatformEvent::SessionOpened { session_id, room_id, params } => {
                if let Ok(session) = ClassSession::open(session_id.clone(), params.clone()) {
                    self.sessions.insert(
                        session_id.clone(),
                        SessionEntry { room_id: room_id.clone(), session, final_results: None },
                    );
                }
            }
            PlatformEvent::AuthEventIngested { session_id, timestamp, node_id, payload } => {
                if let Some(entry) = self.sessions.get_mut(session_id) {
                    if let Ok(ack) = entry.session.record_event(&self.registry, *timestamp, node_id, payload) {
                        return Applied::Ack(ack);
                    }
                }
            }
            PlatformEvent::SessionClosed { session_id, results } => {
                if let Some(entry) = self.sessions.get_mut(session_id) {
                    entry.session.close();
                    entry.final_results = Some(results.clone());
                }
            }
            PlatformEvent::DocumentIngested { document } => {
                self.documents.insert(document.doc_id.clone(), document.clone());
            }
            PlatformEvent::EnvironmentSampled { room_id, record, reading, state, commands } => {
                let room = self.rooms.entry(room_id.clone()).or_default();
                room.last_reading = Some(*reading);
                room.last_record = Some(*record);
                room.actuators = *state;
                room.samples += 1;
                for c in commands {
                    *room.toggles.entry(c.actuator.name().to_string()).or_default() += 1;
                }
            }
            PlatformEvent::ChatAnswered { doc_id, doc_version, .. } => {
                self.indexed.insert(doc_id.clone(), doc_version.clone());
                self.chats += 1;
            }
            PlatformEvent::QuizGenerated { doc_version, quiz } => {
                self.indexed.insert(quiz.request.doc_id.clone(), doc_version.clone());
                *self.quizzes.entry(quiz.request.doc_id.clone()).or_default() += 1;
            }
            PlatformEvent::NodeConnected { node_id, node_type, room_id } => {
                self.nodes.insert(node_id.clone(), NodeInfo { node_type: *node_type, room_id: room_id.clone() });
            }
        }
        Applied::Nothing
    }

    /// Ids of documents currently known, for listings.
    pub fn document_ids(&self) -> BTreeSet<&str> {
        self.documents.keys().map(String::as_str).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attendance::FraudRules;

    fn opened() -> PlatformEvent {
        PlatformEvent::SessionOpened {
            session_id: "s1".into(),
            room_id: "r1".into(),
            params: SessionParams {
                class_id: "c".into(),
                window_start: 0,
                window_end: 1000,
                pairing_window_ms: 100,
                network_id: "net".into(),
                fraud_rules: FraudRules::none(),
            },
        }
    }

    #[test]
    fn empty_state_digest_is_stable() {
        let a = PlatformState::default().digest();
        assert_eq!(a, PlatformState::default().digest());
        assert_eq!(a.0.len(), 64);
    }

    #[test]
    fn digest_tracks_attendance() {
        let mut s = PlatformState::default();
        s.apply(
            1,
            &PlatformEvent::StudentRegistered {
                record: StudentRecord {
                    student_id: "s-1".into(),
                    display_name: "A".into(),
                    tag_uid: "04a3b2c1".parse().unwrap(),
                    mac: "aa:bb:cc:dd:ee:01".parse().unwrap(),
                },
            },
        );
        s.apply(2, &opened());
        let before = s.digest();
        let ack = s.apply(
            3,
            &PlatformEvent::AuthEventIngested {
                session_id: "s1".into(),
                timestamp: 10,
                node_id: "n".into(),
                payload: RawPayload::Rfid { tag_uid: "04a3b2c1".into() },
            },
        );
        assert!(matches!(ack, Applied::Ack(Ack { completes: false, .. })));
        // Absent with NoWifi instead of NoRfid.
        assert_ne!(before, s.digest());
        s.apply(
            4,
            &PlatformEvent::AuthEventIngested {
                session_id: "s1".into(),
                timestamp: 20,
                node_id: "n".into(),
                payload: RawPayload::Wifi { mac: "aa:bb:cc:dd:ee:01".into(), network_id: "net".into() },
            },
        );
        assert_eq!(s.session_results("s1").unwrap()[0].status, crate::attendance::AttendanceStatus::Present);
        assert_eq!(s.last_seq, 4);
    }

    #[test]
    fn events_round_trip_through_json() {
        let e = opened();
        let json = serde_json::to_string(&e).unwrap();
        assert!(json.starts_with("{\"event\":\"session_opened\""));
        assert_eq!(serde_json::from_str::<PlatformEvent>(&json).unwrap(), e);
        assert_eq!(e.category(), Category::Attendance);
    }
}
