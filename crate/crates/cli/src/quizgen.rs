use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;
use smartclass_core::quizgen::{QuizGenerator, QuizRequest, MAX_NUM_QUESTIONS};
use smartclass_core::retrieval::{Document, HashingEmbedder, IndexCache};
use smartclass_core::server::{load_config, PlatformConfig};

/// Generate multiple-choice quizzes from a plain-text document.
///
/// With --topic, prints one quiz and exits. Without it, reads one topic per
/// line from standard input until end of input.
#[derive(Parser)]
#[command(name = "quizgen", version)]
struct Args {
    /// Plain-text course material.
    document: PathBuf,
    #[arg(short, long)]
    topic: Option<String>,
    /// Number of questions per quiz.
    #[arg(short = 'n', long, value_parser = clap::value_parser!(u16).range(1..=MAX_NUM_QUESTIONS as i64))]
    num_questions: Option<u16>,
    /// Platform config; only the retrieval and generator sections are used.
    #[arg(long)]
    config: Option<PathBuf>,
}

const EXIT_BAD_ARGS: u8 = 2;
const EXIT_INGEST: u8 = 3;

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    let args = Args::parse();

    let config = match &args.config {
        Some(p) => match load_config(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("quizgen: {e}");
                return ExitCode::from(EXIT_BAD_ARGS);
            }
        },
        None => PlatformConfig::default(),
    };

    let doc = match std::fs::read_to_string(&args.document) {
        Ok(text) if !text.trim().is_empty() => {
            let id = args.document.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "document".into());
            Document::new(&id, &id, &text).expect("non-empty text")
        }
        Ok(_) => {
            eprintln!("quizgen: {} is empty", args.document.display());
            return ExitCode::from(EXIT_INGEST);
        }
        Err(e) => {
            eprintln!("quizgen: cannot read {}: {e}", args.document.display());
            return ExitCode::from(EXIT_INGEST);
        }
    };

    let cache = Arc::new(IndexCache::new(
        config.retrieval.splitter.clone(),
        Arc::new(HashingEmbedder::new(config.retrieval.dims)),
    ));
    let generator = QuizGenerator::new(cache, config.generator.remote()).with_k(config.retrieval.default_k);
    let n = args.num_questions.map(usize::from).unwrap_or(config.default_questions);

    let run = |topic: &str| -> bool {
        let result = QuizRequest::new(&doc.doc_id, topic, Some(n)).and_then(|req| generator.generate(&req, &doc));
        match result {
            Ok(quiz) => {
                print!("{}", quiz.text());
                let _ = std::io::stdout().flush();
                true
            }
            Err(e) => {
                eprintln!("quizgen: {topic:?}: {e}");
                false
            }
        }
    };

    if let Some(topic) = &args.topic {
        return if run(topic) { ExitCode::SUCCESS } else { ExitCode::FAILURE };
    }
    for line in std::io::stdin().lock().lines() {
        let Ok(line) = line else { break };
        let topic = line.trim();
        if topic.is_empty() {
            continue;
        }
        run(topic);
        println!();
    }
    ExitCode::SUCCESS
}
