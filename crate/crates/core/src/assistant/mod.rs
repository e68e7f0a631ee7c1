//! Attendance-gated question answering over course material.

mod prompt;
mod stub;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::attendance::{evaluate_attendance, AttendanceResult, AttendanceStatus, ClassSession, Reason, Registry};
use crate::generator::{GeneratorError, TextGenerator};
use crate::retrieval::{search, Document, IndexCache, RetrievalError, RetrievalQuery, DEFAULT_K};

pub use prompt::{parse_passages, write_passages, Passage};
pub use stub::{ExtractiveGenerator, FRAMING_LINE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssistantError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("unknown student {0}")]
    UnknownStudent(String),
    #[error("unknown document {0}")]
    UnknownDocument(String),
    #[error("access denied: student is {status:?} ({reason})")]
    AccessDenied { status: AttendanceStatus, reason: Reason },
    #[error("question text is empty")]
    EmptyQuestion,
    #[error("no passages to answer from")]
    NoContext,
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("prompt not understood: {0}")]
    BadPrompt(String),
    #[error("no generator could answer: {0}")]
    GeneratorUnavailable(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatQuery {
    pub student_id: String,
    pub session_id: String,
    pub doc_id: String,
    pub text: String,
    #[serde(default)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerContext {
    /// Best first.
    pub passages: Vec<Passage>,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    /// Chunk ids of the passages the answer draws on.
    pub citations: Vec<usize>,
    pub generator_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AccessDecision {
    Allowed,
    Denied { status: AttendanceStatus, reason: Reason },
}

/// Read-only view of live attendance.
pub trait AttendanceView {
    fn attendance(&self, session_id: &str, student_id: &str) -> Result<AttendanceResult, AssistantError>;
}

/// Attendance view over sessions evaluated against one registry.
pub struct SessionView<'a> {
    pub registry: &'a Registry,
    pub sessions: &'a BTreeMap<String, ClassSession>,
}

impl AttendanceView for SessionView<'_> {
    fn attendance(&self, session_id: &str, student_id: &str) -> Result<AttendanceResult, AssistantError> {
        let session = self
            .sessions
            .get(session_id)
            .ok_or_else(|| AssistantError::UnknownSession(session_id.to_string()))?;
        if self.registry.get(student_id).is_none() {
            return Err(AssistantError::UnknownStudent(student_id.to_string()));
        }
        Ok(evaluate_attendance(session, self.registry)
            .into_iter()
            .find(|r| r.student_id == student_id)
            .expect("registered student has a result"))
    }
}

/// Allowed exactly when the student is currently Present in the session.
pub fn authorize(view: &dyn AttendanceView, student_id: &str, session_id: &str) -> Result<AccessDecision, AssistantError> {
    let r = view.attendance(session_id, student_id)?;
    Ok(match r.status {
        AttendanceStatus::Present => AccessDecision::Allowed,
        status => AccessDecision::Denied { status, reason: r.reason },
    })
}

const INSTRUCTIONS: &str = "You are a classroom teaching assistant. Answer the question using only \
the numbered passages below, and cite the passages you use by their [n] markers.";

/// Fixed prompt template: instructions, numbered passages, then the question.
pub fn compose_prompt(question: &str, passages: &[Passage]) -> Result<String, AssistantError> {
    if passages.is_empty() {
        return Err(AssistantError::NoContext);
    }
    let mut out = String::new();
    out.push_str(INSTRUCTIONS);
    out.push_str("\n\n");
    write_passages(&mut out, passages);
    out.push_str("Question: ");
    out.push_str(question);
    out.push_str("\nAnswer:\n");
    Ok(out)
}

/// Splits a prompt made by [`compose_prompt`] back into passages and question.
pub fn parse_prompt(prompt: &str) -> Result<(Vec<Passage>, &str), AssistantError> {
    let bad = |m: &str| AssistantError::BadPrompt(m.to_string());
    let body = prompt
        .strip_prefix(INSTRUCTIONS)
        .and_then(|s| s.strip_prefix("\n\n"))
        .ok_or_else(|| bad("missing instructions"))?;
    let (passages, rest) = parse_passages(body)?;
    let question = rest
        .strip_prefix("Question: ")
        .and_then(|s| s.strip_suffix("\nAnswer:\n"))
        .ok_or_else(|| bad("missing question"))?;
    if passages.is_empty() {
        return Err(AssistantError::NoContext);
    }
    Ok((passages, question))
}

/// Chunk ids for the `[n]` markers in `text`, in first-mention order. Falls
/// back to every passage when the text cites nothing recognisable.
pub fn citations_from_markers(text: &str, passages: &[Passage]) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    let mut rest = text;
    while let Some(i) = rest.find('[') {
        rest = &rest[i + 1..];
        let Some(j) = rest.find(']') else { break };
        if let Ok(n) = rest[..j].trim().parse::<usize>() {
            if let Some(p) = n.checked_sub(1).and_then(|i| passages.get(i)) {
                if !out.contains(&p.chunk_id) {
                    out.push(p.chunk_id);
                }
            }
        }
    }
    if out.is_empty() {
        out = passages.iter().map(|p| p.chunk_id).collect();
    }
    out
}

/// The question-answering pipeline: gate, retrieve, prompt, generate.
pub struct Assistant {
    cache: Arc<IndexCache>,
    remote: Option<Arc<dyn TextGenerator>>,
    stub: ExtractiveGenerator,
    default_k: usize,
    retrievals: AtomicU64,
}

impl Assistant {
    pub fn new(cache: Arc<IndexCache>, remote: Option<Arc<dyn TextGenerator>>) -> Self {
        Self { cache, remote, stub: ExtractiveGenerator, default_k: DEFAULT_K, retrievals: AtomicU64::new(0) }
    }

    pub fn with_default_k(mut self, k: usize) -> Self {
        self.default_k = k.max(1);
        self
    }

    pub fn cache(&self) -> &Arc<IndexCache> {
        &self.cache
    }

    /// Number of queries that got past the gate and reached retrieval.
    pub fn retrievals(&self) -> u64 {
        self.retrievals.load(Ordering::SeqCst)
    }

    /// Answers `query` against `doc`. The gate is checked before anything
    /// else touches the document.
    pub fn answer(
        &self,
        query: &ChatQuery,
        view: &dyn AttendanceView,
        doc: Option<&Document>,
    ) -> Result<(Answer, AnswerContext), AssistantError> {
        if query.text.trim().is_empty() {
            return Err(AssistantError::EmptyQuestion);
        }
        if let AccessDecision::Denied { status, reason } = authorize(view, &query.student_id, &query.session_id)? {
            return Err(AssistantError::AccessDenied { status, reason });
        }
        let doc = doc.ok_or_else(|| AssistantError::UnknownDocument(query.doc_id.clone()))?;
        self.retrievals.fetch_add(1, Ordering::SeqCst);

        let index = self.cache.get_or_build(doc);
        let rq = RetrievalQuery::new(&query.text, query.k.unwrap_or(self.default_k))?;
        let hits = search(&index, &rq, self.cache.embedder())?;
        let passages: Vec<Passage> = hits
            .iter()
            .map(|h| Passage {
                chunk_id: h.chunk_id,
                text: index.entries[h.chunk_id].chunk.text.clone(),
                score: h.score,
            })
            .collect();
        let prompt = compose_prompt(&query.text, &passages)?;
        let answer = self.generate(&prompt, &passages)?;
        Ok((answer, AnswerContext { passages, prompt }))
    }

    fn generate(&self, prompt: &str, passages: &[Passage]) -> Result<Answer, AssistantError> {
        if let Some(remote) = &self.remote {
            match remote.generate(prompt) {
                Ok(text) if !text.trim().is_empty() => {
                    return Ok(Answer {
                        citations: citations_from_markers(&text, passages),
                        text,
                        generator_id: remote.id().to_string(),
                    })
                }
                Ok(_) => warn!(generator = remote.id(), "empty answer, using extractive stub"),
                Err(e) => warn!(generator = remote.id(), error = %e, "generator failed, using extractive stub"),
            }
        }
        let text = self
            .stub
            .generate(prompt)
            .map_err(|e: GeneratorError| AssistantError::GeneratorUnavailable(e.to_string()))?;
        Ok(Answer { text, citations: vec![passages[0].chunk_id], generator_id: self.stub.id().to_string() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attendance::{AuthPayload, ClassSession};
    use crate::retrieval::{HashingEmbedder, SplitterParams};

    fn passages() -> Vec<Passage> {
        vec![
            Passage { chunk_id: 4, text: "Relays drive the fans.".into(), score: 0.9 },
            Passage { chunk_id: 1, text: "Sensors sample air.".into(), score: 0.5 },
            Passage { chunk_id: 2, text: "Quizzes test recall.".into(), score: 0.1 },
        ]
    }

    #[test]
    fn prompt_contains_passages_in_order() {
        let ps = passages();
        let p = compose_prompt("What drives the fans?", &ps[..1]).unwrap();
        assert!(p.contains("[1]"));
        assert!(p.contains("Relays drive the fans."));
        let p = compose_prompt("q", &ps).unwrap();
        let positions: Vec<usize> = ps.iter().map(|x| p.find(&x.text).unwrap()).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(crate::sha256_hex(p.as_bytes()), crate::sha256_hex(compose_prompt("q", &ps).unwrap().as_bytes()));
        assert_eq!(compose_prompt("q", &[]), Err(AssistantError::NoContext));
    }

    #[test]
    fn prompt_parses_back() {
        let ps = passages();
        let p = compose_prompt("multi\nline question?", &ps).unwrap();
        let (back, q) = parse_prompt(&p).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back[0].chunk_id, 4);
        assert_eq!(q, "multi\nline question?");
    }

    #[test]
    fn marker_citations() {
        let ps = passages();
        assert_eq!(citations_from_markers("see [2] and [1], also [2]", &ps), vec![1, 4]);
        assert_eq!(citations_from_markers("see [9]", &ps), vec![4, 1, 2]);
    }

    fn fixture() -> (Registry, BTreeMap<String, ClassSession>) {
        let mut reg = Registry::new();
        reg.register("s1", "Ada", "04a3b2c1", "aa:bb:cc:dd:ee:01").unwrap();
        reg.register("s2", "Bo", "04a3b2c2", "aa:bb:cc:dd:ee:02").unwrap();
        let mut s = ClassSession::simple(0, 3_600_000, "campus");
        s.session_id = "sess-1".into();
        s.push_event(100_000, "n", AuthPayload::RfidScan { tag_uid: "04a3b2c1".parse().unwrap() });
        s.push_event(130_000, "n", AuthPayload::WifiPresence { mac: "aa:bb:cc:dd:ee:01".parse().unwrap(), network_id: "campus".into() });
        s.push_event(100_000, "n", AuthPayload::RfidScan { tag_uid: "04a3b2c2".parse().unwrap() });
        let mut sessions = BTreeMap::new();
        sessions.insert("sess-1".to_string(), s);
        (reg, sessions)
    }

    #[test]
    fn gate_follows_attendance() {
        let (reg, sessions) = fixture();
        let view = SessionView { registry: &reg, sessions: &sessions };
        assert_eq!(authorize(&view, "s1", "sess-1").unwrap(), AccessDecision::Allowed);
        assert_eq!(
            authorize(&view, "s2", "sess-1").unwrap(),
            AccessDecision::Denied { status: AttendanceStatus::Absent, reason: Reason::NoWifi }
        );
        assert!(matches!(authorize(&view, "s9", "sess-1"), Err(AssistantError::UnknownStudent(_))));
        assert!(matches!(authorize(&view, "s1", "nope"), Err(AssistantError::UnknownSession(_))));
    }

    #[test]
    fn denied_query_never_retrieves() {
        let (reg, sessions) = fixture();
        let view = SessionView { registry: &reg, sessions: &sessions };
        let cache = Arc::new(IndexCache::new(SplitterParams::default(), Arc::new(HashingEmbedder::default())));
        let a = Assistant::new(cache.clone(), None);
        let doc = Document::new("d", "t", "Relays drive the fans. Sensors sample air.").unwrap();
        let q = ChatQuery { student_id: "s2".into(), session_id: "sess-1".into(), doc_id: "d".into(), text: "fans".into(), k: None };
        assert!(matches!(a.answer(&q, &view, Some(&doc)), Err(AssistantError::AccessDenied { .. })));
        assert_eq!(cache.builds(), 0);
        assert_eq!(a.retrievals(), 0);
        let q = ChatQuery { student_id: "s1".into(), ..q };
        let (ans, ctx) = a.answer(&q, &view, Some(&doc)).unwrap();
        assert_eq!(a.retrievals(), 1);
        assert_eq!(ans.generator_id, "extractive-stub");
        assert!(ans.citations.iter().all(|c| ctx.passages.iter().any(|p| p.chunk_id == *c)));
    }

    struct Failing;
    impl TextGenerator for Failing {
        fn id(&self) -> &str {
            "remote"
        }
        fn generate(&self, _: &str) -> Result<String, GeneratorError> {
            Err(GeneratorError::Unavailable("timeout".into()))
        }
    }

    struct Echo;
    impl TextGenerator for Echo {
        fn id(&self) -> &str {
            "echo"
        }
        fn generate(&self, _: &str) -> Result<String, GeneratorError> {
            Ok("It is in [1].".into())
        }
    }

    #[test]
    fn remote_failure_falls_back_to_stub() {
        let (reg, sessions) = fixture();
        let view = SessionView { registry: &reg, sessions: &sessions };
        let cache = Arc::new(IndexCache::new(SplitterParams::default(), Arc::new(HashingEmbedder::default())));
        let doc = Document::new("d", "t", "Relays drive the fans.").unwrap();
        let q = ChatQuery { student_id: "s1".into(), session_id: "sess-1".into(), doc_id: "d".into(), text: "fans".into(), k: Some(2) };
        let a = Assistant::new(cache.clone(), Some(Arc::new(Failing)));
        assert_eq!(a.answer(&q, &view, Some(&doc)).unwrap().0.generator_id, "extractive-stub");
        let a = Assistant::new(cache, Some(Arc::new(Echo)));
        let ans = a.answer(&q, &view, Some(&doc)).unwrap().0;
        assert_eq!(ans.generator_id, "echo");
        assert_eq!(ans.citations, vec![0]);
    }
}
