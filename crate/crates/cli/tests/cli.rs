use std::path::Path;
use std::process::{Command, Output};

use rubricflow_core::{Scenario, Store};

fn rubricflow(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_rubricflow")).args(args).env("RUST_LOG", "warn").output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_analyze_replay() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    let out = rubricflow(&["simulate", "--n", "8", "--seed", "3", "--out", arg(&sim)]);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("8 finalized sessions"));

    let stats = tmp.path().join("stats");
    rubricflow(&["analyze", "--in", arg(&sim), "--expert", arg(&sim.join("expert_scores.csv")), "--out", arg(&stats)]);
    assert!(stats.join("stats.json").is_file());

    let out = rubricflow(&["replay", arg(&sim.join("sessions.jsonl"))]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.trim_end().starts_with("8 sessions,") && text.trim_end().ends_with("0 verdict diffs"), "{text}");
}

#[test]
fn export_session_from_journal() {
    let tmp = tempfile::tempdir().unwrap();
    let journal = tmp.path().join("journal.jsonl");
    let s = Scenario::default_scenario();
    {
        let store = Store::open(&journal).unwrap();
        store.register_scenario(&s);
        store.open_session("j1", &s.id, "ana", rubricflow_cli::simulate::epoch()).unwrap();
    }
    let out = rubricflow(&["export-session", "j1", "--store", arg(&journal)]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().count(), 1);
    assert!(text.contains("\"j1\""));

    let missing = Command::new(env!("CARGO_BIN_EXE_rubricflow"))
        .args(["export-session", "nope", "--store", arg(&journal)])
        .output()
        .unwrap();
    assert!(!missing.status.success());
}
