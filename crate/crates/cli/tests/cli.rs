use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use smartclass_core::quizgen::parse_quiz_response;

fn demo(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../demo").join(file)
}

fn smartclass(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smartclass")).args(args).output().expect("binary runs")
}

fn quizgen(args: &[&str], stdin: &str) -> Output {
    use std::io::Write;
    let mut child = Command::new(env!("CARGO_BIN_EXE_quizgen"))
        .args(args)
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::piped())
        .stderr(std::process::Stdio::piped())
        .spawn()
        .expect("binary runs");
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn digest_line(text: &str) -> String {
    text.lines().find(|l| l.starts_with("digest ")).expect("digest line").to_string()
}

#[test]
fn scenario_then_replay_agree() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("events.log");
    let script = demo("lecture.toml");
    let run = smartclass(&["scenario", "--script", script.to_str().unwrap(), "--log", log.to_str().unwrap()]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let report = stdout(&run);
    assert!(report.contains("s-1              Present"), "{report}");
    assert!(report.contains("Attendance Taken!"));

    let replayed = smartclass(&["replay", "--log", log.to_str().unwrap()]);
    assert!(replayed.status.success());
    assert_eq!(digest_line(&stdout(&replayed)), digest_line(&report));
}

#[test]
fn replay_of_a_missing_log_fails() {
    let out = smartclass(&["replay", "--log", "/nonexistent/events.log"]);
    assert!(!out.status.success());
}

#[test]
fn quizgen_writes_the_requested_number_of_questions() {
    let doc = demo("course.txt");
    let out = quizgen(&[doc.to_str().unwrap(), "-t", "thermostat deadband", "-n", "4"], "");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(parse_quiz_response(&stdout(&out)).unwrap().len(), 4);
}

#[test]
fn quizgen_reads_topics_from_stdin() {
    let doc = demo("course.txt");
    let out = quizgen(&[doc.to_str().unwrap(), "-n", "2"], "calibration\n\nzzqx qqzz\ndebouncing\n");
    assert!(out.status.success());
    let text = stdout(&out);
    let quizzes: Vec<&str> = text.split("\n\n\n").filter(|q| !q.trim().is_empty()).collect();
    assert_eq!(quizzes.len(), 2, "{text}");
    assert!(String::from_utf8_lossy(&out.stderr).contains("zzqx"));
}

#[test]
fn quizgen_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.txt");
    std::fs::write(&empty, "  \n").unwrap();
    assert_eq!(quizgen(&[empty.to_str().unwrap(), "-t", "x"], "").status.code(), Some(3));
    assert_eq!(quizgen(&["/nonexistent.txt", "-t", "x"], "").status.code(), Some(3));

    let doc = demo("course.txt");
    assert_eq!(quizgen(&[doc.to_str().unwrap(), "-n", "0"], "").status.code(), Some(2));
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "nonsense = 1\n").unwrap();
    let out = quizgen(&[doc.to_str().unwrap(), "--config", bad.to_str().unwrap(), "-t", "x"], "");
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key nonsense"));
}
