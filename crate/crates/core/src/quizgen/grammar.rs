use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Question, QuizRequest};
use crate::text::contains_markup;

pub const LABELS: [char; 4] = ['A', 'B', 'C', 'D'];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IssueKind {
    /// Block does not start with `Qn. <stem>`.
    MalformedHeader,
    /// Question number is not the next one expected.
    OutOfSequence,
    MissingOption,
    DuplicateOptionLabel,
    /// Options are not in A, B, C, D order or follow the answer line.
    OptionOrder,
    MissingAnswer,
    DuplicateAnswer,
    /// Answer is not one of A, B, C, D.
    InvalidAnswer,
    UnexpectedLine,
    EmptyField,
    MarkupForbidden,
    DuplicateOption,
    CountMismatch,
    CorrectOutOfRange,
    NoQuestions,
}

impl fmt::Display for IssueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    /// 1-based question number; 0 for problems with the quiz as a whole.
    pub ordinal: usize,
    pub kind: IssueKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParseReport {
    pub ok: bool,
    pub issues: Vec<Issue>,
}

impl ParseReport {
    pub fn from_issues(mut issues: Vec<Issue>) -> Self {
        issues.sort_by_key(|i| (i.ordinal, i.kind));
        issues.dedup();
        Self { ok: issues.is_empty(), issues }
    }

    pub fn has(&self, ordinal: usize, kind: IssueKind) -> bool {
        self.issues.iter().any(|i| i.ordinal == ordinal && i.kind == kind)
    }
}

impl fmt::Display for ParseReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok {
            return write!(f, "ok");
        }
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            match issue.ordinal {
                0 => write!(f, "- quiz: {}", issue.kind)?,
                n => write!(f, "- Q{n}: {}", issue.kind)?,
            }
        }
        Ok(())
    }
}

/// Renders questions in the output grammar. Every line ends in `\n` and
/// blocks are separated by one blank line.
pub fn serialize_questions(questions: &[Question]) -> String {
    let mut out = String::new();
    for (i, q) in questions.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!("Q{}. {}\n", i + 1, q.stem));
        for (label, opt) in LABELS.iter().zip(&q.options) {
            out.push_str(&format!("{label}) {opt}\n"));
        }
        out.push_str(&format!("Answer: {}\n", LABELS.get(q.correct).copied().unwrap_or('?')));
    }
    out
}

fn parse_header(line: &str) -> Option<(usize, &str)> {
    let rest = line.strip_prefix('Q')?;
    let dot = rest.find(". ").or_else(|| rest.strip_suffix('.').map(|r| r.len()))?;
    let n = rest[..dot].parse().ok()?;
    if !rest[..dot].bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some((n, rest.get(dot + 2..).unwrap_or("").trim()))
}

fn parse_option(line: &str) -> Option<(usize, &str)> {
    let mut chars = line.chars();
    let label = chars.next()?;
    let idx = LABELS.iter().position(|l| *l == label)?;
    let rest = chars.as_str().strip_prefix(')')?;
    Some((idx, rest.trim()))
}

/// Parses generator output in the quiz grammar:
///
/// ```text
/// Q1. <stem>
/// A) <option>
/// B) <option>
/// C) <option>
/// D) <option>
/// Answer: <A|B|C|D>
///
/// Q2. ...
/// ```
///
/// Blocks are separated by blank lines and numbered from 1. Trailing
/// whitespace on a line is ignored. Any violation is reported with the
/// number of the block it occurs in.
pub fn parse_quiz_response(text: &str) -> Result<Vec<Question>, ParseReport> {
    let mut blocks: Vec<Vec<&str>> = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in text.lines().map(str::trim_end) {
        if line.is_empty() {
            if !current.is_empty() {
                blocks.push(std::mem::take(&mut current));
            }
        } else {
            current.push(line);
        }
    }
    if !current.is_empty() {
        blocks.push(current);
    }
    if blocks.is_empty() {
        return Err(ParseReport::from_issues(vec![Issue { ordinal: 0, kind: IssueKind::NoQuestions }]));
    }

    let mut issues = Vec::new();
    let mut questions = Vec::new();
    for (b, lines) in blocks.iter().enumerate() {
        let ordinal = b + 1;
        let mut issue = |kind| issues.push(Issue { ordinal, kind });

        let stem = match parse_header(lines[0]) {
            Some((n, stem)) => {
                if n != ordinal {
                    issue(IssueKind::OutOfSequence);
                }
                stem
            }
            None => {
                issue(IssueKind::MalformedHeader);
                ""
            }
        };
        let mut options: [Option<&str>; 4] = [None; 4];
        let mut last_label: Option<usize> = None;
        let mut answer: Option<Option<usize>> = None;
        for line in &lines[1..] {
            if let Some(value) = line.strip_prefix("Answer:") {
                if answer.is_some() {
                    issue(IssueKind::DuplicateAnswer);
                    continue;
                }
                let value = value.trim();
                let idx = LABELS.iter().position(|l| value.len() == 1 && value.starts_with(*l));
                if idx.is_none() {
                    issue(IssueKind::InvalidAnswer);
                }
                answer = Some(idx);
            } else if let Some((idx, opt)) = parse_option(line) {
                if answer.is_some() || last_label.is_some_and(|l| idx < l) {
                    issue(IssueKind::OptionOrder);
                }
                if options[idx].is_some() {
                    issue(IssueKind::DuplicateOptionLabel);
                    continue;
                }
                options[idx] = Some(opt);
                last_label = Some(idx);
            } else {
                issue(IssueKind::UnexpectedLine);
            }
        }
        if options.iter().any(Option::is_none) {
            issue(IssueKind::MissingOption);
        }
        if answer.is_none() {
            issue(IssueKind::MissingAnswer);
        }
        let fields = std::iter::once(stem).chain(options.iter().flatten().copied());
        for f in fields.clone() {
            if f.is_empty() {
                issue(IssueKind::EmptyField);
            }
            if contains_markup(f) {
                issue(IssueKind::MarkupForbidden);
            }
        }
        let present: Vec<&str> = options.iter().flatten().copied().collect();
        if has_duplicates(&present) {
            issue(IssueKind::DuplicateOption);
        }
        if let (Some(Some(correct)), [Some(a), Some(b), Some(c), Some(d)]) = (answer, options) {
            questions.push(Question {
                stem: stem.to_string(),
                options: [a, b, c, d].map(String::from),
                correct,
                source_chunk: None,
            });
        }
    }
    if issues.is_empty() {
        Ok(questions)
    } else {
        Err(ParseReport::from_issues(issues))
    }
}

fn normalized(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

fn has_duplicates(options: &[&str]) -> bool {
    let norm: Vec<String> = options.iter().map(|o| normalized(o)).collect();
    norm.iter().enumerate().any(|(i, a)| norm[..i].contains(a))
}

/// Checks a quiz against the request and the per-question rules. Idempotent
/// and independent of how the questions were produced.
pub fn validate_quiz(questions: &[Question], request: &QuizRequest) -> ParseReport {
    let mut issues = Vec::new();
    if questions.len() != request.num_questions {
        issues.push(Issue { ordinal: 0, kind: IssueKind::CountMismatch });
    }
    for (i, q) in questions.iter().enumerate() {
        let ordinal = i + 1;
        if q.correct >= 4 {
            issues.push(Issue { ordinal, kind: IssueKind::CorrectOutOfRange });
        }
        let opts: Vec<&str> = q.options.iter().map(String::as_str).collect();
        if has_duplicates(&opts) {
            issues.push(Issue { ordinal, kind: IssueKind::DuplicateOption });
        }
        for f in std::iter::once(q.stem.as_str()).chain(opts.iter().copied()) {
            if f.trim().is_empty() {
                issues.push(Issue { ordinal, kind: IssueKind::EmptyField });
            }
            if contains_markup(f) {
                issues.push(Issue { ordinal, kind: IssueKind::MarkupForbidden });
            }
            if f.contains('\n') {
                issues.push(Issue { ordinal, kind: IssueKind::UnexpectedLine });
            }
        }
    }
    ParseReport::from_issues(issues)
}
