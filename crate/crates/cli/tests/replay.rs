use std::sync::Arc;

use rubricflow_cli::replay::{AttemptLine, ReplayError, Replayer};
use rubricflow_cli::simulate::{simulate, PersonaConfig, Simulation};
use rubricflow_core::{AnswerStatus, Scenario, StubLlm};

fn replayer() -> Replayer {
    Replayer::new(Arc::new(Scenario::default_scenario()), Arc::new(StubLlm::heuristic()))
}

fn cohort(n: usize, seed: u64) -> Simulation {
    let s = Arc::new(Scenario::default_scenario());
    simulate(&PersonaConfig::even(n, seed, &s.id), s, Arc::new(StubLlm::heuristic())).unwrap()
}

#[test]
fn exported_sessions_replay_without_diffs() {
    let sim = cohort(8, 5);
    let r = replayer();
    let mut total = 0;
    for id in &sim.session_ids {
        let summary = r.replay_str(&sim.store.export_session(id).unwrap()).unwrap();
        assert!(summary.diffs.is_empty(), "{id}: {:?}", summary.diffs);
        assert_eq!(summary.sessions, vec![id.clone()]);
        total += summary.submissions;
    }
    let all = r.replay_str(&sim.sessions_jsonl().unwrap()).unwrap();
    assert_eq!(all.sessions.len(), 8);
    assert_eq!(all.submissions, total);
    assert_eq!(all.to_string(), format!("8 sessions, {total} submissions, 0 verdict diffs"));
}

#[test]
fn tampered_verdict_gives_one_diff() {
    let sim = cohort(4, 9);
    let id = &sim.session_ids[0];
    let text = sim.store.export_session(id).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let at = lines.iter().rposition(|l| l.contains("\"segment_evaluation\"")).unwrap();
    let flipped = if lines[at].contains("\"verdict\":\"Correct\"") {
        lines[at].replace("\"verdict\":\"Correct\"", "\"verdict\":\"Incorrect\"")
    } else {
        lines[at].replace("\"verdict\":\"Incorrect\"", "\"verdict\":\"Correct\"")
    };
    assert_ne!(flipped, lines[at]);
    let mut tampered: Vec<String> = lines.iter().map(|l| l.to_string()).collect();
    tampered[at] = flipped;
    let summary = replayer().replay_str(&tampered.join("\n")).unwrap();
    assert_eq!(summary.diffs.len(), 1, "{:?}", summary.diffs);
    assert_eq!(summary.diffs[0].line, at + 1);
    assert_eq!(summary.diffs_for(id).len(), 1);
}

#[test]
fn empty_log_has_zero_sessions() {
    let summary = replayer().replay_str("").unwrap();
    assert_eq!(summary.to_string(), "0 sessions, 0 submissions, 0 verdict diffs");
    assert!(replayer().replay_str("\n  \n").unwrap().sessions.is_empty());
}

fn attempt_line(attempt: u32, payload: &str, verdict: Option<AnswerStatus>) -> String {
    serde_json::to_string(&AttemptLine {
        session: "bare".into(),
        segment: "Seg 1-2".into(),
        attempt,
        payload: payload.into(),
        verdict,
    })
    .unwrap()
}

#[test]
fn fifth_attempt_fails_on_line_five() {
    let log: Vec<String> = (1..=5).map(|a| attempt_line(a, "11", Some(AnswerStatus::Incorrect))).collect();
    let err = replayer().replay_str(&log.join("\n")).unwrap_err();
    assert!(matches!(err, ReplayError::AttemptOrderViolation { line: 5, .. }), "{err}");
}

#[test]
fn bare_lines_are_regraded() {
    let log =
        [attempt_line(1, "11", Some(AnswerStatus::Incorrect)), attempt_line(2, "10", Some(AnswerStatus::Incorrect))];
    let summary = replayer().replay_str(&log.join("\n")).unwrap();
    assert_eq!(summary.submissions, 2);
    assert_eq!(summary.diffs.len(), 1);
    assert_eq!(
        (summary.diffs[0].recorded, summary.diffs[0].regraded),
        (AnswerStatus::Incorrect, AnswerStatus::Correct)
    );

    let unlabeled = [attempt_line(1, "10", None), attempt_line(2, "10", None)];
    let err = replayer().replay_str(&unlabeled.join("\n")).unwrap_err();
    assert!(matches!(err, ReplayError::AttemptOrderViolation { line: 2, .. }));
}

#[test]
fn malformed_lines_name_their_line() {
    let log = format!("{}\nnot json\n", attempt_line(1, "10", None));
    assert!(matches!(replayer().replay_str(&log), Err(ReplayError::Parse { line: 2, .. })));
    let unknown = r#"{"session":"x","segment":"Seg 1-1","attempt":1,"payload":"a","extra":1}"#;
    assert!(matches!(replayer().replay_str(unknown), Err(ReplayError::Parse { line: 1, .. })));
}
