//! Scripted deployments: a TOML file naming students, sessions, documents,
//! virtual nodes with their scripts, and the chats and quizzes to run after
//! the nodes finish. Nodes run one after another in file order, so a given
//! file always produces the same log and digest.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::events::StateDigest;
use super::gateway::DeviceGateway;
use super::platform::{OpenSessionRequest, Platform, PlatformError};
use crate::assistant::{Answer, ChatQuery};
use crate::attendance::{AttendanceResult, FraudRules, Millis};
use crate::device::{run_node, Loopback, NodeDescriptor, NodeRun, NodeType, ScenarioScript};
use crate::ecosmart::ActuatorState;
use crate::quizgen::Quiz;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("scenario file: {0}")]
    Parse(String),
    #[error("node {node}: {source}")]
    Script {
        node: String,
        #[source]
        source: crate::device::ScriptError,
    },
    #[error("{step}: {source}")]
    Step {
        step: String,
        #[source]
        source: PlatformError,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudentSpec {
    pub student_id: String,
    #[serde(default)]
    pub display_name: String,
    pub tag_uid: String,
    pub mac: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionSpec {
    pub session_id: Option<String>,
    pub class_id: String,
    pub room_id: Option<String>,
    pub window_start: Millis,
    pub window_end: Millis,
    pub pairing_window_ms: Option<Millis>,
    pub network_id: String,
    pub fraud_rules: Option<FraudRules>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocumentSpec {
    pub doc_id: String,
    pub title: Option<String>,
    /// Inline text, or `path` relative to the scenario file.
    pub text: Option<String>,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub node_id: String,
    pub node_type: NodeType,
    pub room_id: String,
    /// Script text, one action per line.
    pub script: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuizSpec {
    pub doc_id: String,
    pub topic: String,
    pub num_questions: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub students: Vec<StudentSpec>,
    #[serde(default)]
    pub sessions: Vec<SessionSpec>,
    #[serde(default)]
    pub documents: Vec<DocumentSpec>,
    #[serde(default)]
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub chat: Vec<ChatQuery>,
    #[serde(default)]
    pub quiz: Vec<QuizSpec>,
    /// Sessions to close after everything else ran.
    #[serde(default)]
    pub close: Vec<String>,
    /// Directory that document paths are relative to.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ScenarioFile {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, ScenarioError> {
        let mut s: ScenarioFile = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        s.base_dir = base_dir.to_path_buf();
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_toml_str(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeOutcome {
    pub node_id: String,
    pub messages_sent: usize,
    pub messages_received: usize,
    pub display: Vec<String>,
    pub actuators: ActuatorState,
    pub error: Option<String>,
}

impl NodeOutcome {
    fn new(node_id: &str, run: &NodeRun) -> Self {
        Self {
            node_id: node_id.to_string(),
            messages_sent: run.sent().count(),
            messages_received: run.received().count(),
            display: run.display().to_vec(),
            actuators: run.actuators,
            error: run.error.as_ref().map(ToString::to_string),
        }
    }
}

/// Outcome of one request; refusals such as a gated chat are results, not
/// scenario failures.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Outcome<T> {
    Ok(T),
    Refused { status: u16, message: String },
}

impl<T> Outcome<T> {
    fn from(r: Result<(u64, T), PlatformError>) -> Self {
        match r {
            Ok((_, v)) => Outcome::Ok(v),
            Err(e) => Outcome::Refused { status: e.status(), message: e.to_string() },
        }
    }

    pub fn ok(&self) -> Option<&T> {
        match self {
            Outcome::Ok(v) => Some(v),
            Outcome::Refused { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub digest: StateDigest,
    pub last_seq: u64,
    pub attendance: Vec<(String, Vec<AttendanceResult>)>,
    pub nodes: Vec<NodeOutcome>,
    pub chats: Vec<Outcome<Answer>>,
    pub quizzes: Vec<Outcome<Quiz>>,
    pub elapsed: Duration,
}

impl ScenarioReport {
    /// Plain-text summary: the digest and one attendance table per session.
    pub fn render(&self) -> String {
        let mut out = format!("digest {}\nrecords {}\n", self.digest, self.last_seq);
        for (session, rows) in &self.attendance {
            out.push_str(&format!("\nsession {session}\n{:<16} {:<8} {}\n", "student", "status", "reason"));
            for r in rows {
                out.push_str(&format!("{:<16} {:<8} {}\n", r.student_id, format!("{:?}", r.status), r.reason));
            }
        }
        for n in &self.nodes {
            out.push_str(&format!("\nnode {}: display {:?}", n.node_id, n.display));
            if let Some(e) = &n.error {
                out.push_str(&format!(", error: {e}"));
            }
        }
        out.push('\n');
        out
    }
}

/// Runs `scenario` against `platform`.
pub fn run_scenario(platform: &Arc<Platform>, scenario: &ScenarioFile) -> Result<ScenarioReport, ScenarioError> {
    let started = Instant::now();
    let step = |name: String| move |source| ScenarioError::Step { step: name, source };

    for s in &scenario.students {
        platform
            .register_student(&s.student_id, &s.display_name, &s.tag_uid, &s.mac)
            .map_err(step(format!("student {}", s.student_id)))?;
    }
    for d in &scenario.documents {
        let text = match (&d.text, &d.path) {
            (Some(t), None) => t.clone(),
            (None, Some(p)) => {
                let p = scenario.base_dir.join(p);
                std::fs::read_to_string(&p)
                    .map_err(|e| ScenarioError::Io { path: p.display().to_string(), message: e.to_string() })?
            }
            _ => return Err(ScenarioError::Parse(format!("document {}: give exactly one of text or path", d.doc_id))),
        };
        let title = d.title.clone().unwrap_or_else(|| d.doc_id.clone());
        platform.ingest_document(&d.doc_id, &title, &text).map_err(step(format!("document {}", d.doc_id)))?;
    }
    let mut session_ids = Vec::new();
    for s in &scenario.sessions {
        let req = OpenSessionRequest {
            session_id: s.session_id.clone(),
            class_id: s.class_id.clone(),
            room_id: s.room_id.clone(),
            window_start: s.window_start,
            window_end: s.window_end,
            pairing_window_ms: s.pairing_window_ms,
            network_id: s.network_id.clone(),
            fraud_rules: s.fraud_rules,
        };
        let (_, id) = platform.open_session(req).map_err(step(format!("session {}", s.class_id)))?;
        session_ids.push(id);
    }

    let mut nodes = Vec::new();
    for n in &scenario.nodes {
        let script: ScenarioScript =
            n.script.parse().map_err(|source| ScenarioError::Script { node: n.node_id.clone(), source })?;
        let desc = NodeDescriptor { node_id: n.node_id.clone(), node_type: n.node_type, room_id: n.room_id.clone() };
        let mut conn = Loopback::new(DeviceGateway::new(platform.clone()));
        let run = run_node(&desc, &script, &platform.config().device, &mut conn);
        nodes.push(NodeOutcome::new(&n.node_id, &run));
    }

    let chats = scenario.chat.iter().map(|q| Outcome::from(platform.chat(q))).collect();
    let quizzes = scenario
        .quiz
        .iter()
        .map(|q| Outcome::from(platform.quiz(&q.doc_id, &q.topic, q.num_questions)))
        .collect();
    for id in &scenario.close {
        platform.close_session(id).map_err(step(format!("close {id}")))?;
    }

    let snapshot = platform.snapshot();
    let attendance = snapshot
        .sessions
        .keys()
        .map(|id| (id.clone(), snapshot.session_results(id).expect("session exists")))
        .collect();
    Ok(ScenarioReport {
        digest: snapshot.digest(),
        last_seq: snapshot.last_seq,
        attendance,
        nodes,
        chats,
        quizzes,
        elapsed: started.elapsed(),
    })
}
