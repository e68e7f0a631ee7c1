use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{parse_quiz_prompt, serialize_questions, Question, QuizError};
use crate::assistant::Passage;
use crate::generator::{GeneratorError, TextGenerator};
use crate::text::{contains_markup, is_content_token, sentences, token_spans};

/// Used when the material has fewer than three other content tokens.
const FILLER_OPTIONS: [&str; 3] = ["None of the above", "All of the above", "Not covered in the material"];

pub const BLANK: &str = "____";

struct Candidate {
    passage: usize,
    sentence: String,
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn content_tokens(text: &str) -> impl Iterator<Item = &str> {
    token_spans(text).into_iter().map(|(_, t)| t).filter(|t| is_content_token(t))
}

/// Sentences usable as question stems, in passage order, without repeats.
fn candidates(passages: &[Passage]) -> Vec<Candidate> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, p) in passages.iter().enumerate() {
        for s in sentences(&p.text) {
            let s = collapse_ws(s);
            if contains_markup(&s) || content_tokens(&s).next().is_none() {
                continue;
            }
            if seen.insert(s.clone()) {
                out.push(Candidate { passage: i, sentence: s });
            }
        }
    }
    out
}

/// Longest tokens first, earliest occurrence on ties, compared case-insensitively.
fn longest_distinct<'a>(tokens: impl Iterator<Item = &'a str>, exclude: &mut HashSet<String>, want: usize) -> Vec<String> {
    let mut pool: Vec<&str> = Vec::new();
    let mut pooled = HashSet::new();
    for t in tokens {
        let key = t.to_lowercase();
        if !exclude.contains(&key) && pooled.insert(key) {
            pool.push(t);
        }
    }
    pool.sort_by_key(|t| std::cmp::Reverse(t.chars().count()));
    let picked: Vec<String> = pool.into_iter().take(want).map(String::from).collect();
    exclude.extend(picked.iter().map(|t| t.to_lowercase()));
    picked
}

fn seed(doc_version: &str, ordinal: usize) -> [u8; 32] {
    Sha256::digest(format!("{doc_version}:{ordinal}").as_bytes()).into()
}

/// Deterministic fill-in-the-blank questions from retrieved passages.
///
/// Question `i` uses the `i`-th usable sentence: its longest content token
/// (earliest on ties) becomes the blank and the correct answer. Distractors
/// are the three longest distinct content tokens of the other passages, then
/// of the source passage. Options are shuffled with a generator seeded from
/// `doc_version` and the question number.
pub fn cloze_questions(passages: &[Passage], num_questions: usize, doc_version: &str) -> Result<Vec<Question>, QuizError> {
    let cands = candidates(passages);
    if cands.len() < num_questions {
        return Err(QuizError::InsufficientMaterial { needed: num_questions, available: cands.len() });
    }
    let mut out = Vec::with_capacity(num_questions);
    for (i, c) in cands.iter().take(num_questions).enumerate() {
        let spans: Vec<(usize, &str)> = token_spans(&c.sentence).into_iter().filter(|(_, t)| is_content_token(t)).collect();
        let mut best = spans[0];
        for s in &spans[1..] {
            if s.1.chars().count() > best.1.chars().count() {
                best = *s;
            }
        }
        let (at, answer) = best;
        let stem = format!("{}{BLANK}{}", &c.sentence[..at], &c.sentence[at + answer.len()..]);

        let mut exclude: HashSet<String> = HashSet::from([answer.to_lowercase()]);
        let others = passages.iter().enumerate().filter(|(j, _)| *j != c.passage).flat_map(|(_, p)| content_tokens(&p.text));
        let mut distractors = longest_distinct(others, &mut exclude, 3);
        if distractors.len() < 3 {
            let need = 3 - distractors.len();
            distractors.extend(longest_distinct(content_tokens(&passages[c.passage].text), &mut exclude, need));
        }
        for f in FILLER_OPTIONS {
            if distractors.len() == 3 {
                break;
            }
            distractors.push(f.to_string());
        }

        let mut options: Vec<String> = std::iter::once(answer.to_string()).chain(distractors).collect();
        let mut rng = ChaCha8Rng::from_seed(seed(doc_version, i + 1));
        options.shuffle(&mut rng);
        let correct = options.iter().position(|o| o == answer).expect("answer is an option");
        out.push(Question {
            stem,
            options: options.try_into().expect("four options"),
            correct,
            source_chunk: Some(passages[c.passage].chunk_id),
        });
    }
    Ok(out)
}

/// [`cloze_questions`] behind the generator interface. Reads the passages,
/// question count and document version back out of a quiz prompt.
#[derive(Debug, Clone, Copy, Default)]
pub struct ClozeGenerator;

impl TextGenerator for ClozeGenerator {
    fn id(&self) -> &str {
        "cloze-stub"
    }

    fn generate(&self, prompt: &str) -> Result<String, GeneratorError> {
        let p = parse_quiz_prompt(prompt).map_err(|e| GeneratorError::BadPrompt(e.to_string()))?;
        let qs = cloze_questions(&p.passages, p.num_questions, &p.doc_version)
            .map_err(|e| GeneratorError::BadPrompt(e.to_string()))?;
        Ok(serialize_questions(&qs))
    }
}
