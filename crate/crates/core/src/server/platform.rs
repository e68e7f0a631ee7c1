use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::PlatformConfig;
use super::events::{Applied, PlatformEvent, PlatformState, StateDigest};
use super::log::{EventLog, EventLogRecord, LogError};
use crate::assistant::{Answer, Assistant, AssistantError, AttendanceView, ChatQuery};
use crate::attendance::{
    Ack, AttendanceError, AttendanceResult, AttendanceStatus, FraudRules, Millis, RawPayload, Reason, SessionParams,
    StudentRecord,
};
use crate::device::NodeType;
use crate::ecosmart::{control_step, validate_reading, ActuatorCommand, ActuatorState, Reading, TraceRecord};
use crate::quizgen::{Quiz, QuizError, QuizGenerator, QuizRequest};
use crate::retrieval::{Document, HashingEmbedder, IndexCache, RetrievalError};

/// Failures surfaced to API clients, each with an HTTP status.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlatformError {
    #[error("{message}")]
    BadRequest { field: Option<String>, message: String },
    #[error("missing or wrong admin token")]
    Unauthorized,
    #[error("access denied: student is {status:?} ({reason})")]
    AccessDenied { status: AttendanceStatus, reason: Reason },
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    MethodNotAllowed(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error("{0}")]
    Upstream(String),
    #[error(transparent)]
    Storage(#[from] LogError),
}

impl PlatformError {
    pub fn status(&self) -> u16 {
        match self {
            PlatformError::BadRequest { .. } => 400,
            PlatformError::Unauthorized => 401,
            PlatformError::AccessDenied { .. } => 403,
            PlatformError::NotFound(_) => 404,
            PlatformError::MethodNotAllowed(_) => 405,
            PlatformError::Conflict(_) => 409,
            PlatformError::Unprocessable(_) => 422,
            PlatformError::Upstream(_) => 502,
            PlatformError::Storage(_) => 500,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PlatformError::BadRequest { .. } => "bad_request",
            PlatformError::Unauthorized => "unauthorized",
            PlatformError::AccessDenied { .. } => "access_denied",
            PlatformError::NotFound(_) => "not_found",
            PlatformError::MethodNotAllowed(_) => "method_not_allowed",
            PlatformError::Conflict(_) => "conflict",
            PlatformError::Unprocessable(_) => "unprocessable",
            PlatformError::Upstream(_) => "upstream",
            PlatformError::Storage(_) => "storage_failure",
        }
    }

    pub fn bad(field: &str, message: impl Into<String>) -> Self {
        PlatformError::BadRequest { field: Some(field.to_string()), message: message.into() }
    }
}

impl From<AttendanceError> for PlatformError {
    fn from(e: AttendanceError) -> Self {
        use AttendanceError::*;
        let field = match &e {
            DuplicateTag(_) | DuplicateMac(_) | DuplicateStudentId(_) | SessionClosed(_) => {
                return PlatformError::Conflict(e.to_string())
            }
            InvalidTag(_) => "tag_uid",
            InvalidMac(_) => "mac",
            EmptyField(f) => f,
            InvalidWindow { .. } => "window_end",
            InvalidPairingWindow => "pairing_window_ms",
            Bootstrap { .. } => "registry",
        };
        PlatformError::bad(field, e.to_string())
    }
}

impl From<AssistantError> for PlatformError {
    fn from(e: AssistantError) -> Self {
        match e {
            AssistantError::UnknownSession(_) | AssistantError::UnknownStudent(_) | AssistantError::UnknownDocument(_) => {
                PlatformError::NotFound(e.to_string())
            }
            AssistantError::AccessDenied { status, reason } => PlatformError::AccessDenied { status, reason },
            AssistantError::EmptyQuestion => PlatformError::bad("text", e.to_string()),
            AssistantError::Retrieval(RetrievalError::InvalidK) => PlatformError::bad("k", e.to_string()),
            AssistantError::NoContext | AssistantError::Retrieval(_) => PlatformError::Unprocessable(e.to_string()),
            AssistantError::BadPrompt(_) | AssistantError::GeneratorUnavailable(_) => {
                PlatformError::Upstream(e.to_string())
            }
        }
    }
}

impl From<QuizError> for PlatformError {
    fn from(e: QuizError) -> Self {
        match e {
            QuizError::InvalidRequest { field, .. } => PlatformError::bad(field, e.to_string()),
            QuizError::UnknownDocument(_) => PlatformError::NotFound(e.to_string()),
            QuizError::NoContext | QuizError::InsufficientMaterial { .. } | QuizError::Retrieval(_) => {
                PlatformError::Unprocessable(e.to_string())
            }
            QuizError::BadPrompt(_) => PlatformError::Upstream(e.to_string()),
        }
    }
}

impl AttendanceView for PlatformState {
    fn attendance(&self, session_id: &str, student_id: &str) -> Result<AttendanceResult, AssistantError> {
        let results =
            self.session_results(session_id).ok_or_else(|| AssistantError::UnknownSession(session_id.to_string()))?;
        results
            .into_iter()
            .find(|r| r.student_id == student_id)
            .ok_or_else(|| AssistantError::UnknownStudent(student_id.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpenSessionRequest {
    #[serde(default)]
    pub session_id: Option<String>,
    pub class_id: String,
    /// Room whose devices report to this session. Defaults to the class id.
    #[serde(default)]
    pub room_id: Option<String>,
    pub window_start: Millis,
    pub window_end: Millis,
    #[serde(default)]
    pub pairing_window_ms: Option<Millis>,
    pub network_id: String,
    #[serde(default)]
    pub fraud_rules: Option<FraudRules>,
}

/// An environment sample after control, as returned to the caller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub reading: Reading,
    pub state: ActuatorState,
    pub commands: Vec<ActuatorCommand>,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

fn valid_id(field: &str, id: &str) -> Result<(), PlatformError> {
    if id.trim().is_empty() {
        return Err(PlatformError::bad(field, "must not be empty"));
    }
    if id.contains(|c: char| c == '/' || c == '?' || c == '#' || c.is_whitespace() || c.is_control()) {
        return Err(PlatformError::bad(field, "must not contain whitespace, '/', '?' or '#'"));
    }
    Ok(())
}

/// Folds records from the empty state.
pub fn replay(records: &[EventLogRecord]) -> PlatformState {
    let mut state = PlatformState::default();
    for r in records {
        state.apply(r.seq, &r.payload);
    }
    state
}

/// The running platform. Mutations are serialized through one log writer;
/// readers take cheap snapshots and never wait on generation or disk I/O.
pub struct Platform {
    config: PlatformConfig,
    writer: Mutex<EventLog>,
    state: RwLock<Arc<PlatformState>>,
    assistant: Assistant,
    quizgen: QuizGenerator,
}

impl Platform {
    /// A platform over `log`, whose records are replayed first.
    pub fn with_log(config: PlatformConfig, log: EventLog) -> Self {
        let state = replay(log.records());
        let embedder = Arc::new(HashingEmbedder::new(config.retrieval.dims));
        let cache = Arc::new(IndexCache::new(config.retrieval.splitter.clone(), embedder));
        let remote = config.generator.remote();
        let assistant = Assistant::new(cache.clone(), remote.clone()).with_default_k(config.retrieval.default_k);
        let quizgen = QuizGenerator::new(cache, remote).with_k(config.retrieval.default_k);
        Self { config, writer: Mutex::new(log), state: RwLock::new(Arc::new(state)), assistant, quizgen }
    }

    /// Opens the configured log file, or an in-memory log when none is set.
    pub fn open(config: PlatformConfig) -> Result<Self, LogError> {
        let log = match &config.server.log_path {
            Some(path) => EventLog::open(path)?,
            None => EventLog::in_memory(),
        };
        Ok(Self::with_log(config, log))
    }

    pub fn in_memory(config: PlatformConfig) -> Self {
        Self::with_log(config, EventLog::in_memory())
    }

    pub fn config(&self) -> &PlatformConfig {
        &self.config
    }

    pub fn assistant(&self) -> &Assistant {
        &self.assistant
    }

    pub fn snapshot(&self) -> Arc<PlatformState> {
        self.state.read().expect("state lock poisoned").clone()
    }

    pub fn digest(&self) -> StateDigest {
        self.snapshot().digest()
    }

    pub fn records(&self) -> Vec<EventLogRecord> {
        self.writer.lock().expect("log lock poisoned").records().to_vec()
    }

    /// Validates against the current state, appends, then applies. Nothing
    /// changes if validation or the append fails.
    fn commit<T>(
        &self,
        decide: impl FnOnce(&PlatformState) -> Result<(PlatformEvent, T), PlatformError>,
    ) -> Result<(u64, Applied, T), PlatformError> {
        let mut log = self.writer.lock().expect("log lock poisoned");
        let (event, extra) = decide(&self.snapshot())?;
        let record = log.append(now_ms(), event)?;
        let mut state = self.state.write().expect("state lock poisoned");
        let applied = Arc::make_mut(&mut state).apply(record.seq, &record.payload);
        Ok((record.seq, applied, extra))
    }

    pub fn register_student(
        &self,
        student_id: &str,
        display_name: &str,
        tag_uid: &str,
        mac: &str,
    ) -> Result<(u64, StudentRecord), PlatformError> {
        valid_id("student_id", student_id)?;
        let record = StudentRecord {
            student_id: student_id.trim().to_string(),
            display_name: display_name.trim().to_string(),
            tag_uid: tag_uid.parse()?,
            mac: mac.parse()?,
        };
        let (seq, _, record) = self.commit(|s| {
            if s.any_session_open() {
                return Err(PlatformError::Conflict("cannot register students while a session is open".into()));
            }
            s.registry.check(&record)?;
            Ok((PlatformEvent::StudentRegistered { record: record.clone() }, record))
        })?;
        Ok((seq, record))
    }

    pub fn open_session(&self, req: OpenSessionRequest) -> Result<(u64, String), PlatformError> {
        if let Some(id) = &req.session_id {
            valid_id("session_id", id)?;
        }
        valid_id("class_id", &req.class_id)?;
        let room_id = req.room_id.clone().unwrap_or_else(|| req.class_id.clone());
        valid_id("room_id", &room_id)?;
        let params = SessionParams {
            class_id: req.class_id,
            window_start: req.window_start,
            window_end: req.window_end,
            pairing_window_ms: req.pairing_window_ms.unwrap_or(self.config.attendance.pairing_window_ms),
            network_id: req.network_id,
            fraud_rules: req.fraud_rules.unwrap_or(self.config.attendance.fraud_rules),
        };
        params.validate()?;
        let (seq, _, id) = self.commit(|s| {
            let session_id = match req.session_id {
                Some(id) if s.sessions.contains_key(&id) => {
                    return Err(PlatformError::Conflict(format!("session {id} already exists")))
                }
                Some(id) => id,
                None => (s.sessions.len() + 1..)
                    .map(|n| format!("session-{n}"))
                    .find(|id| !s.sessions.contains_key(id))
                    .expect("unbounded"),
            };
            Ok((PlatformEvent::SessionOpened { session_id: session_id.clone(), room_id, params }, session_id))
        })?;
        Ok((seq, id))
    }

    /// Closes a session and freezes its results. Closing a closed session
    /// changes nothing and returns no seq.
    pub fn close_session(&self, session_id: &str) -> Result<(Option<u64>, Vec<AttendanceResult>), PlatformError> {
        let result = self.commit(|s| {
            let entry = s.sessions.get(session_id).ok_or_else(|| not_found_session(session_id))?;
            if entry.final_results.is_some() {
                return Err(PlatformError::Conflict(format!("session {session_id} is closed")));
            }
            let results = s.session_results(session_id).expect("session exists");
            Ok((PlatformEvent::SessionClosed { session_id: session_id.to_string(), results: results.clone() }, results))
        });
        match result {
            Ok((seq, _, results)) => Ok((Some(seq), results)),
            Err(PlatformError::Conflict(_)) => {
                Ok((None, self.snapshot().session_results(session_id).expect("closed session exists")))
            }
            Err(e) => Err(e),
        }
    }

    pub fn ingest_auth(
        &self,
        session_id: &str,
        timestamp: Millis,
        node_id: &str,
        payload: RawPayload,
    ) -> Result<(u64, Ack), PlatformError> {
        let (seq, applied, _) = self.commit(|s| {
            let entry = s.sessions.get(session_id).ok_or_else(|| not_found_session(session_id))?;
            if !entry.session.is_open() {
                return Err(PlatformError::Conflict(format!("session {session_id} is closed")));
            }
            let event = PlatformEvent::AuthEventIngested {
                session_id: session_id.to_string(),
                timestamp,
                node_id: node_id.to_string(),
                payload,
            };
            Ok((event, ()))
        })?;
        match applied {
            Applied::Ack(ack) => Ok((seq, ack)),
            Applied::Nothing => unreachable!("validated auth events always produce an ack"),
        }
    }

    /// Stores a document. Re-ingesting identical content is a no-op without a
    /// seq.
    pub fn ingest_document(&self, doc_id: &str, title: &str, text: &str) -> Result<(Option<u64>, Document), PlatformError> {
        valid_id("doc_id", doc_id)?;
        if text.trim().is_empty() {
            return Err(PlatformError::bad("text", "must not be empty"));
        }
        let document = Document::new(doc_id, title, text).map_err(|e| PlatformError::bad("text", e.to_string()))?;
        if self.snapshot().documents.get(doc_id) == Some(&document) {
            return Ok((None, document));
        }
        let (seq, _, doc) =
            self.commit(|_| Ok((PlatformEvent::DocumentIngested { document: document.clone() }, document)))?;
        Ok((Some(seq), doc))
    }

    /// Calibrates, range-checks and controls one sensor sample for a room.
    /// Rejected samples leave the room's last good reading in place.
    pub fn sample_environment(&self, room_id: &str, record: TraceRecord) -> Result<(u64, SampleOutcome), PlatformError> {
        valid_id("room_id", room_id)?;
        let sample = record.calibrate(&self.config.calibration).map_err(|e| PlatformError::Unprocessable(e.to_string()))?;
        let reading = validate_reading(sample).map_err(|e| PlatformError::Unprocessable(e.to_string()))?;
        let (seq, _, outcome) = self.commit(|s| {
            let prev = s.rooms.get(room_id).map(|r| r.actuators).unwrap_or_default();
            let (state, commands) = control_step(&reading, &prev, &self.config.control);
            let outcome = SampleOutcome { reading, state, commands: commands.clone() };
            let event =
                PlatformEvent::EnvironmentSampled { room_id: room_id.to_string(), record, reading, state, commands };
            Ok((event, outcome))
        })?;
        Ok((seq, outcome))
    }

    pub fn node_connected(&self, node_id: &str, node_type: NodeType, room_id: &str) -> Result<u64, PlatformError> {
        valid_id("node_id", node_id)?;
        valid_id("room_id", room_id)?;
        let event =
            PlatformEvent::NodeConnected { node_id: node_id.to_string(), node_type, room_id: room_id.to_string() };
        Ok(self.commit(|_| Ok((event, ())))?.0)
    }

    /// Answers a question for a student who is Present in the session. The
    /// answer is computed on a snapshot, outside the writer lock.
    pub fn chat(&self, query: &ChatQuery) -> Result<(u64, Answer), PlatformError> {
        let snapshot = self.snapshot();
        let doc = snapshot.documents.get(&query.doc_id);
        let (answer, _) = self.assistant.answer(query, snapshot.as_ref(), doc)?;
        let doc_version = doc.expect("answer needs the document").version.clone();
        let event = PlatformEvent::ChatAnswered {
            session_id: query.session_id.clone(),
            student_id: query.student_id.clone(),
            doc_id: query.doc_id.clone(),
            doc_version,
            question: query.text.clone(),
            answer: answer.clone(),
        };
        drop(snapshot);
        let (seq, _, answer) = self.commit(|_| Ok((event, answer)))?;
        Ok((seq, answer))
    }

    pub fn quiz(&self, doc_id: &str, topic: &str, num_questions: Option<usize>) -> Result<(u64, Quiz), PlatformError> {
        let request = QuizRequest::new(doc_id, topic, Some(num_questions.unwrap_or(self.config.default_questions)))?;
        let snapshot = self.snapshot();
        let doc = snapshot
            .documents
            .get(doc_id)
            .ok_or_else(|| PlatformError::NotFound(format!("unknown document {doc_id}")))?;
        let quiz = self.quizgen.generate(&request, doc)?;
        let event = PlatformEvent::QuizGenerated { doc_version: doc.version.clone(), quiz: quiz.clone() };
        drop(snapshot);
        let (seq, _, quiz) = self.commit(|_| Ok((event, quiz)))?;
        Ok((seq, quiz))
    }
}

fn not_found_session(id: &str) -> PlatformError {
    PlatformError::NotFound(format!("unknown session {id}"))
}
