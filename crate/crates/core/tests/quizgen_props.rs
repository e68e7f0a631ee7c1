mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use common::*;
use proptest::prelude::*;
use smartclass_core::generator::{GeneratorError, TextGenerator};
use smartclass_core::quizgen::{
    parse_quiz_response, serialize_questions, validate_quiz, IssueKind, Question, QuizError, QuizGenerator,
    QuizRequest, MAX_NUM_QUESTIONS,
};
use smartclass_core::retrieval::{Document, HashingEmbedder, IndexCache, SplitterParams};

fn field() -> impl Strategy<Value = String> {
    "[A-Za-z][A-Za-z0-9 ,?()'-]{0,30}[A-Za-z0-9?]"
}

fn question() -> impl Strategy<Value = Question> {
    (field(), prop::collection::btree_set(field().prop_map(|s| s.to_lowercase()), 4), 0usize..4).prop_map(
        |(stem, options, correct)| {
            let mut o = options.into_iter();
            let options = [(); 4].map(|_| o.next().unwrap());
            Question { stem, options, correct, source_chunk: None }
        },
    )
    .prop_filter("options distinct after whitespace folding", |q| {
        let norm: Vec<String> = q.options.iter().map(|o| o.split_whitespace().collect::<Vec<_>>().join(" ")).collect();
        norm.iter().enumerate().all(|(i, a)| !norm[..i].contains(a))
    })
}

fn generator(remote: Option<Arc<dyn TextGenerator>>) -> QuizGenerator {
    let cache = IndexCache::new(SplitterParams::default(), Arc::new(HashingEmbedder::default()));
    QuizGenerator::new(Arc::new(cache), remote)
}

fn course() -> Document {
    Document::new("course", "Course", COURSE).unwrap()
}

/// Replies with a fixed text and counts calls.
struct Canned {
    text: String,
    calls: AtomicUsize,
}

impl TextGenerator for Canned {
    fn id(&self) -> &str {
        "canned"
    }

    fn generate(&self, _prompt: &str) -> Result<String, GeneratorError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(self.text.clone())
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn valid_quizzes_round_trip(qs in prop::collection::vec(question(), 1..8)) {
        let text = serialize_questions(&qs);
        let parsed = parse_quiz_response(&text).unwrap();
        prop_assert_eq!(&parsed, &qs);
        prop_assert_eq!(serialize_questions(&parsed), text);
        let request = QuizRequest::new("d", "t", Some(qs.len())).unwrap();
        prop_assert!(validate_quiz(&parsed, &request).ok);
    }

    #[test]
    fn broken_blocks_are_reported_by_number(qs in prop::collection::vec(question(), 1..6), at in any::<prop::sample::Index>(), mutation in 0usize..5) {
        let b = at.index(qs.len());
        let text = serialize_questions(&qs);
        let mut blocks: Vec<String> = text.split("\n\n").map(String::from).collect();
        let lines: Vec<String> = blocks[b].lines().map(String::from).collect();
        let (replacement, kind) = match mutation {
            0 => (lines[..5].join("\n"), IssueKind::MissingAnswer),
            1 => ([&lines[..5], &["Answer: E".to_string()]].concat().join("\n"), IssueKind::InvalidAnswer),
            2 => ([&lines[..2], &[lines[3].clone(), lines[2].clone()], &lines[4..]].concat().join("\n"), IssueKind::OptionOrder),
            3 => ([&lines[..1], &lines[2..]].concat().join("\n"), IssueKind::MissingOption),
            _ => ([lines[0].clone(), lines[1].clone(), lines[1].replacen("A)", "B)", 1)].iter().chain(&lines[3..]).cloned().collect::<Vec<_>>().join("\n"), IssueKind::DuplicateOption),
        };
        blocks[b] = replacement;
        let report = parse_quiz_response(&blocks.join("\n\n")).unwrap_err();
        prop_assert!(report.has(b + 1, kind), "{:?} for block {}: {}", kind, b + 1, report);
    }

    #[test]
    fn generated_quizzes_are_valid_and_grounded(words in prop::collection::vec(any::<prop::sample::Index>(), 1..4), n in 1usize..=12) {
        let vocab: Vec<&str> = COURSE.split(|c: char| !c.is_alphanumeric()).filter(|w| w.len() > 3).collect();
        let topic = words.iter().map(|i| vocab[i.index(vocab.len())]).collect::<Vec<_>>().join(" ");
        let request = QuizRequest::new("course", &topic, Some(n)).unwrap();
        let quiz = generator(None).generate(&request, &course()).unwrap();
        prop_assert_eq!(quiz.questions.len(), n);
        prop_assert!(validate_quiz(&quiz.questions, &request).ok);
        for q in &quiz.questions {
            prop_assert!(COURSE.contains(q.options[q.correct].as_str()));
        }
        prop_assert_eq!(parse_quiz_response(&quiz.text()).unwrap().len(), n);
    }

    #[test]
    fn bad_remote_output_falls_back_to_a_valid_quiz(text in "\\PC{0,200}", n in 1usize..6) {
        let canned = Arc::new(Canned { text, calls: AtomicUsize::new(0) });
        let request = QuizRequest::new("course", "hysteresis thermostat", Some(n)).unwrap();
        let quiz = generator(Some(canned.clone())).generate(&request, &course()).unwrap();
        prop_assert!(validate_quiz(&quiz.questions, &request).ok);
        prop_assert!(canned.calls.load(Ordering::SeqCst) <= 2);
    }

    #[test]
    fn question_counts_outside_the_range_name_the_field(n in prop_oneof![Just(0usize), (MAX_NUM_QUESTIONS + 1)..1000]) {
        let err = QuizRequest::new("d", "topic", Some(n)).unwrap_err();
        let names_field = matches!(err, QuizError::InvalidRequest { field: "num_questions", .. });
        prop_assert!(names_field, "{err}");
    }
}

#[test]
fn a_valid_remote_quiz_is_used_as_is() {
    let text = (1..=3)
        .map(|i| format!("Q{i}. Which sensor is item {i}?\nA) thermistor\nB) photodiode\nC) reed switch\nD) strain gauge\nAnswer: A\n"))
        .collect::<Vec<_>>()
        .join("\n");
    let canned = Arc::new(Canned { text: text.clone(), calls: AtomicUsize::new(0) });
    let request = QuizRequest::new("course", "sensor calibration", Some(3)).unwrap();
    let quiz = generator(Some(canned.clone())).generate(&request, &course()).unwrap();
    assert_eq!(quiz.generator_id, "canned");
    assert_eq!(quiz.text(), text);
    assert_eq!(canned.calls.load(Ordering::SeqCst), 1);
}

#[test]
fn a_wrong_count_gets_one_retry_then_the_stub() {
    let one = "Q1. Which?\nA) a\nB) b\nC) c\nD) d\nAnswer: A\n".to_string();
    let canned = Arc::new(Canned { text: one, calls: AtomicUsize::new(0) });
    let request = QuizRequest::new("course", "sensor calibration", Some(2)).unwrap();
    let quiz = generator(Some(canned.clone())).generate(&request, &course()).unwrap();
    assert_ne!(quiz.generator_id, "canned");
    assert_eq!(quiz.questions.len(), 2);
    assert_eq!(canned.calls.load(Ordering::SeqCst), 2);
}

#[test]
fn topics_absent_from_the_document_have_no_context() {
    let request = QuizRequest::new("course", "zzyzx qwfp", Some(2)).unwrap();
    assert_eq!(generator(None).generate(&request, &course()).unwrap_err(), QuizError::NoContext);
}
