//! Multiple-choice quiz generation from course material.

mod cloze;
mod grammar;

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::assistant::{parse_passages, write_passages, AssistantError, Passage};
use crate::generator::TextGenerator;
use crate::text::tokens;
use crate::retrieval::{search, Document, IndexCache, RetrievalError, RetrievalQuery, DEFAULT_K};

pub use cloze::{cloze_questions, ClozeGenerator, BLANK};
pub use grammar::{parse_quiz_response, serialize_questions, validate_quiz, Issue, IssueKind, ParseReport, LABELS};

pub const DEFAULT_NUM_QUESTIONS: usize = 5;
pub const MAX_NUM_QUESTIONS: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuizError {
    #[error("invalid {field}: {message}")]
    InvalidRequest { field: &'static str, message: String },
    #[error("unknown document {0}")]
    UnknownDocument(String),
    #[error("topic matches nothing in the document")]
    NoContext,
    #[error("need {needed} usable sentences, found {available}")]
    InsufficientMaterial { needed: usize, available: usize },
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("prompt not understood: {0}")]
    BadPrompt(String),
}

impl From<AssistantError> for QuizError {
    fn from(e: AssistantError) -> Self {
        QuizError::BadPrompt(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuizRequest {
    pub doc_id: String,
    pub topic: String,
    pub num_questions: usize,
}

impl QuizRequest {
    /// `num_questions` defaults to 5.
    pub fn new(doc_id: &str, topic: &str, num_questions: Option<usize>) -> Result<Self, QuizError> {
        let invalid = |field, message: &str| QuizError::InvalidRequest { field, message: message.to_string() };
        let n = num_questions.unwrap_or(DEFAULT_NUM_QUESTIONS);
        if n == 0 {
            return Err(invalid("num_questions", "must be at least 1"));
        }
        if n > MAX_NUM_QUESTIONS {
            return Err(invalid("num_questions", &format!("must be at most {MAX_NUM_QUESTIONS}")));
        }
        let topic = topic.trim();
        if topic.is_empty() {
            return Err(invalid("topic", "must not be empty"));
        }
        if topic.contains(|c: char| c.is_control()) {
            return Err(invalid("topic", "must be a single line"));
        }
        if doc_id.trim().is_empty() {
            return Err(invalid("doc_id", "must not be empty"));
        }
        Ok(Self { doc_id: doc_id.to_string(), topic: topic.to_string(), num_questions: n })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub stem: String,
    /// Labeled A to D in order.
    pub options: [String; 4],
    pub correct: usize,
    /// Chunk the question was built from, when known.
    pub source_chunk: Option<usize>,
}

/// Rough difficulty tag from stem length. Informational only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

/// Tags each question by the tercile of its stem length within the quiz.
pub fn difficulty_tags(questions: &[Question]) -> Vec<Difficulty> {
    let mut order: Vec<usize> = (0..questions.len()).collect();
    order.sort_by_key(|&i| questions[i].stem.chars().count());
    let mut tags = vec![Difficulty::Easy; questions.len()];
    for (rank, &i) in order.iter().enumerate() {
        tags[i] = match rank * 3 / questions.len() {
            0 => Difficulty::Easy,
            1 => Difficulty::Medium,
            _ => Difficulty::Hard,
        };
    }
    tags
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quiz {
    pub request: QuizRequest,
    pub questions: Vec<Question>,
    pub generator_id: String,
}

impl Quiz {
    /// The quiz in the output grammar.
    pub fn text(&self) -> String {
        serialize_questions(&self.questions)
    }
}

const PROMPT_HEAD: &str = "Write exactly ";
const PROMPT_PASSAGES: &str = "Passages:\n";
const PROMPT_END: &str = "End of passages.\n";

/// Fixed quiz prompt: count, topic, rules, the output grammar, then the passages.
pub fn build_quiz_prompt(
    topic: &str,
    num_questions: usize,
    passages: &[Passage],
    source: &Document,
) -> Result<String, QuizError> {
    if passages.is_empty() {
        return Err(QuizError::NoContext);
    }
    let plural = if num_questions == 1 { "" } else { "s" };
    let mut out = format!(
        "{PROMPT_HEAD}{num_questions} multiple-choice question{plural} about the topic: {topic}\n\
Source: {} version {}\n\
Rules:\n\
- Each question has exactly four options and exactly one correct answer.\n\
- Plain text only. Do not use the characters * # ` < >.\n\
- Use exactly this format, with one blank line between questions, numbered from 1:\n\
Q1. <question>\n\
A) <option>\n\
B) <option>\n\
C) <option>\n\
D) <option>\n\
Answer: <A, B, C or D>\n\n",
        source.doc_id, source.version
    );
    out.push_str(PROMPT_PASSAGES);
    write_passages(&mut out, passages);
    out.push_str(PROMPT_END);
    Ok(out)
}

/// The parts of a quiz prompt a local generator needs.
#[derive(Debug, Clone, PartialEq)]
pub struct QuizPrompt {
    pub num_questions: usize,
    pub doc_version: String,
    pub passages: Vec<Passage>,
}

pub fn parse_quiz_prompt(prompt: &str) -> Result<QuizPrompt, QuizError> {
    let bad = |m: &str| QuizError::BadPrompt(m.to_string());
    let mut lines = prompt.lines();
    let num_questions = lines
        .next()
        .and_then(|l| l.strip_prefix(PROMPT_HEAD))
        .and_then(|l| l.split(' ').next())
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| bad("missing question count"))?;
    let doc_version = lines
        .next()
        .filter(|l| l.starts_with("Source: "))
        .and_then(|l| l.rsplit(' ').next())
        .ok_or_else(|| bad("missing source line"))?
        .to_string();
    let at = prompt.find(&format!("\n{PROMPT_PASSAGES}")).ok_or_else(|| bad("missing passages"))?;
    let (passages, rest) = parse_passages(&prompt[at + 1 + PROMPT_PASSAGES.len()..])?;
    if !rest.starts_with(PROMPT_END) {
        return Err(bad("passages not terminated"));
    }
    Ok(QuizPrompt { num_questions, doc_version, passages })
}

fn retry_prompt(prompt: &str, report: &ParseReport) -> String {
    format!("{prompt}\nYour previous response was rejected:\n{report}\nRespond again using exactly the format above.\n")
}

/// Retrieval plus generation plus validation, with the cloze stub as the
/// generator of last resort.
pub struct QuizGenerator {
    cache: Arc<IndexCache>,
    remote: Option<Arc<dyn TextGenerator>>,
    k: usize,
}

impl QuizGenerator {
    pub fn new(cache: Arc<IndexCache>, remote: Option<Arc<dyn TextGenerator>>) -> Self {
        Self { cache, remote, k: DEFAULT_K }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k.max(1);
        self
    }

    /// Every chunk ranked against `topic`, plus how many of them share a
    /// token with it. Sharing chunks come first, each group best first.
    /// Overlap is checked on tokens because signed hashing can cancel a real
    /// match down to a score of zero.
    fn ranked(&self, topic: &str, doc: &Document) -> Result<(Vec<Passage>, usize), QuizError> {
        let index = self.cache.get_or_build(doc);
        let hits = search(&index, &RetrievalQuery::new(topic, index.len())?, self.cache.embedder())?;
        let wanted: BTreeSet<String> = tokens(topic).into_iter().collect();
        let (shared, rest): (Vec<Passage>, Vec<Passage>) = hits
            .into_iter()
            .map(|h| Passage { chunk_id: h.chunk_id, text: index.entries[h.chunk_id].chunk.text.clone(), score: h.score })
            .partition(|p| tokens(&p.text).iter().any(|t| wanted.contains(t)));
        if shared.is_empty() {
            return Err(QuizError::NoContext);
        }
        let matching = shared.len();
        Ok((shared.into_iter().chain(rest).collect(), matching))
    }

    pub fn generate(&self, request: &QuizRequest, doc: &Document) -> Result<Quiz, QuizError> {
        let (ranked, matching) = self.ranked(&request.topic, doc)?;
        let top = &ranked[..matching.min(self.k)];

        if let Some(remote) = &self.remote {
            let prompt = build_quiz_prompt(&request.topic, request.num_questions, top, doc)?;
            match self.try_remote(remote.as_ref(), &prompt, request) {
                Some(questions) => {
                    return Ok(Quiz { request: request.clone(), questions, generator_id: remote.id().to_string() })
                }
                None => warn!(generator = remote.id(), "falling back to cloze stub"),
            }
        }

        // Too few sentences in the top passages: widen to every matching
        // passage, then to the rest of the document in rank order.
        let mut result = cloze_questions(top, request.num_questions, &doc.version);
        for widen in [matching, ranked.len()] {
            if matches!(result, Err(QuizError::InsufficientMaterial { .. })) && widen > top.len() {
                result = cloze_questions(&ranked[..widen], request.num_questions, &doc.version);
            }
        }
        Ok(Quiz { request: request.clone(), questions: result?, generator_id: ClozeGenerator.id().to_string() })
    }

    /// One attempt plus one retry carrying the parse report.
    fn try_remote(&self, remote: &dyn TextGenerator, prompt: &str, request: &QuizRequest) -> Option<Vec<Question>> {
        let mut prompt = prompt.to_string();
        for attempt in 0..2 {
            let text = match remote.generate(&prompt) {
                Ok(t) => t,
                Err(e) => {
                    warn!(generator = remote.id(), error = %e, "quiz generator unavailable");
                    return None;
                }
            };
            let report = match parse_quiz_response(&text) {
                Ok(qs) => {
                    let report = validate_quiz(&qs, request);
                    if report.ok {
                        return Some(qs);
                    }
                    report
                }
                Err(report) => report,
            };
            warn!(generator = remote.id(), attempt, %report, "quiz response rejected");
            prompt = retry_prompt(&prompt, &report);
        }
        None
    }
}
