mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{TimeZone, Utc};
use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;
use rubricflow_cli::api::{ApiError, AppConfig, AppState, ErrorCode, ScenarioView, SessionView, SubmitResponse};
use rubricflow_cli::simulate::AnswerBook;
use rubricflow_core::store::SessionRecord;
use rubricflow_core::{AnswerStatus, FeedbackTier, OverallReport, Scenario, StubLlm};
use serde_json::{json, Value};

use common::{segment_path, spawn_gateway, Running};

fn state() -> AppState {
    let mut cfg = AppConfig::new(Arc::new(Scenario::default_scenario()), Arc::new(StubLlm::heuristic()));
    let t0 = Utc.with_ymd_and_hms(2024, 11, 4, 9, 0, 0).unwrap();
    let tick = std::sync::atomic::AtomicI64::new(0);
    cfg.clock =
        Arc::new(move || t0 + chrono::Duration::seconds(tick.fetch_add(1, std::sync::atomic::Ordering::SeqCst)));
    AppState::new(cfg)
}

fn client() -> Client {
    Client::builder().timeout(Duration::from_secs(20)).build().unwrap()
}

fn api_error(resp: Response, status: StatusCode, code: ErrorCode) -> ApiError {
    assert_eq!(resp.status(), status);
    let err: ApiError = resp.json().expect("error body is an ApiError");
    assert_eq!(err.code, code, "{}", err.detail);
    assert_eq!(err.http_status, status.as_u16());
    err
}

fn open(c: &Client, srv: &Running, alias: &str) -> SessionRecord {
    let resp = c.post(srv.url("/v1/sessions")).json(&json!({ "learner_alias": alias })).send().unwrap();
    assert_eq!(resp.status(), StatusCode::CREATED);
    resp.json().unwrap()
}

fn submit(c: &Client, srv: &Running, id: &str, seg: &str, answer: &str) -> Response {
    c.post(srv.url(&format!("/v1/sessions/{id}/segments/{}/submissions", segment_path(seg))))
        .json(&json!({ "answer": answer }))
        .send()
        .unwrap()
}

fn selfcheck_body() -> Value {
    json!({ "likert": [5, 4, 5, 4, 5], "reflection": "Using x(x+1) = n and the block formula I found the positive root." })
}

#[test]
fn full_session_through_the_gateway() {
    let started = Instant::now();
    let app = state();
    let srv = spawn_gateway(app.clone());
    let c = client();
    let s = Scenario::default_scenario();
    let book = AnswerBook::new(&s);

    let health: Value = c.get(srv.url("/v1/health")).send().unwrap().json().unwrap();
    assert_eq!(health["status"], "ok");

    let view: ScenarioView = c.get(srv.url(&format!("/v1/scenarios/{}", s.id))).send().unwrap().json().unwrap();
    assert_eq!(view.segments.len(), s.segments.len());
    let block = view.segments.iter().find(|v| v.segment_id == "Seg 5-1").unwrap().block.clone().unwrap();
    assert!(block.skeleton_xml.contains("<slot"));
    let raw_view = c.get(srv.url(&format!("/v1/scenarios/{}", s.id))).send().unwrap().text().unwrap();
    for secret in ["closed_key", "accepted", "exemplars", "<solution", "<expect", "error_patterns"] {
        assert!(!raw_view.contains(secret), "scenario view leaks {secret}");
    }

    let session = open(&c, &srv, "ada");
    let id = session.session_id.clone();
    assert_eq!(session.learner_alias, "ada");

    api_error(
        c.get(srv.url(&format!("/v1/sessions/{id}/report"))).send().unwrap(),
        StatusCode::CONFLICT,
        ErrorCode::SessionNotFinalized,
    );

    let mut stages = Vec::new();
    for seg in s.gradable_segments() {
        let resp = submit(&c, &srv, &id, seg.id.as_str(), book.correct(&seg.id).unwrap());
        assert_eq!(resp.status(), StatusCode::OK, "{}", seg.id);
        let out: SubmitResponse = resp.json().unwrap();
        assert_eq!(out.verdict, AnswerStatus::Correct, "{}: {}", seg.id, out.rationale);
        assert!(out.feedback.is_none());
        assert!(out.closing_message.is_some());
        assert_eq!(out.attempts_remaining, 0);
        stages.push(seg.stage);
    }
    assert!(stages.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(stages.first(), Some(&1));
    assert_eq!(stages.last(), Some(&6));

    api_error(submit(&c, &srv, &id, "Seg 1-1", "x+1"), StatusCode::CONFLICT, ErrorCode::AlreadyCorrect);
    api_error(submit(&c, &srv, &id, "Seg 6-2", "anything"), StatusCode::UNPROCESSABLE_ENTITY, ErrorCode::NotGradable);
    api_error(submit(&c, &srv, &id, "Seg 9-9", "x"), StatusCode::NOT_FOUND, ErrorCode::SegmentNotFound);

    let progress: SessionView = c.get(srv.url(&format!("/v1/sessions/{id}"))).send().unwrap().json().unwrap();
    assert!(progress.segments.iter().all(|p| p.attempts == 1 && p.attempts_remaining == 0));

    let bad = json!({ "likert": [5, 4], "reflection": "short" });
    api_error(
        c.post(srv.url(&format!("/v1/sessions/{id}/selfcheck"))).json(&bad).send().unwrap(),
        StatusCode::UNPROCESSABLE_ENTITY,
        ErrorCode::ValidationFailed,
    );
    let resp = c.post(srv.url(&format!("/v1/sessions/{id}/selfcheck"))).json(&selfcheck_body()).send().unwrap();
    assert_eq!(resp.status(), StatusCode::CREATED);
    api_error(
        c.post(srv.url(&format!("/v1/sessions/{id}/selfcheck"))).json(&selfcheck_body()).send().unwrap(),
        StatusCode::CONFLICT,
        ErrorCode::AlreadyRecorded,
    );

    let resp = c.post(srv.url(&format!("/v1/sessions/{id}/finalize"))).send().unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let report: OverallReport = resp.json().unwrap();
    assert_eq!(report.overall_score, 100);
    assert_eq!(report.rubric_rows.len(), 5);
    let fetched: OverallReport = c.get(srv.url(&format!("/v1/sessions/{id}/report"))).send().unwrap().json().unwrap();
    assert_eq!(fetched, report);

    api_error(
        c.post(srv.url(&format!("/v1/sessions/{id}/finalize"))).send().unwrap(),
        StatusCode::CONFLICT,
        ErrorCode::SessionFinalized,
    );
    api_error(submit(&c, &srv, &id, "Seg 1-2", "10"), StatusCode::CONFLICT, ErrorCode::SessionFinalized);

    api_error(
        c.get(srv.url("/v1/analytics/cohort")).send().unwrap(),
        StatusCode::UNPROCESSABLE_ENTITY,
        ErrorCode::InsufficientData,
    );
    let other = open(&c, &srv, "bo");
    submit(&c, &srv, &other.session_id, "Seg 1-2", "11");
    assert_eq!(
        c.post(srv.url(&format!("/v1/sessions/{}/finalize", other.session_id))).send().unwrap().status(),
        StatusCode::OK
    );
    let cohort: Value = c.get(srv.url("/v1/analytics/cohort")).send().unwrap().json().unwrap();
    assert_eq!(cohort["stats"]["n"], 2);
    assert!(cohort["artifacts"].as_array().unwrap().iter().any(|a| a == "stats.json"));
    let resp = c.get(srv.url("/v1/analytics/cohort/artifacts/histogram.svg")).send().unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "image/svg+xml");
    api_error(
        c.get(srv.url("/v1/analytics/cohort/artifacts/nope.txt")).send().unwrap(),
        StatusCode::NOT_FOUND,
        ErrorCode::ArtifactNotFound,
    );

    assert!(started.elapsed() < Duration::from_secs(30), "took {:?}", started.elapsed());
}

#[test]
fn attempts_feedback_and_the_fifth_submission() {
    let srv = spawn_gateway(state());
    let c = client();
    let s = Scenario::default_scenario();
    let book = AnswerBook::new(&s);
    let seg = s.segment("Seg 4-1").unwrap();
    let id = open(&c, &srv, "cy").session_id;
    for attempt in 1..=4u32 {
        let resp = submit(&c, &srv, &id, "Seg 4-1", book.wrong(&seg.id, attempt).unwrap());
        assert_eq!(resp.status(), StatusCode::OK);
        let out: SubmitResponse = resp.json().unwrap();
        assert_eq!(out.verdict, AnswerStatus::Incorrect);
        assert_eq!(out.submission.attempt_index, attempt);
        assert_eq!(out.attempts_remaining, 4 - attempt);
        let tier = out.feedback.expect("feedback on a wrong answer").tier;
        let want = if attempt <= 2 { FeedbackTier::ConceptualHint } else { FeedbackTier::CorrectiveInstruction };
        assert_eq!(tier, want);
    }
    api_error(
        submit(&c, &srv, &id, "Seg 4-1", book.correct(&seg.id).unwrap()),
        StatusCode::CONFLICT,
        ErrorCode::AttemptsExhausted,
    );

    let resp = c
        .post(srv.url(&format!("/v1/sessions/{id}/segments/{}/submissions", segment_path("Seg 4-2"))))
        .json(&json!({ "answer": "x", "attempt_index": 3 }))
        .send()
        .unwrap();
    api_error(resp, StatusCode::CONFLICT, ErrorCode::InvalidAttempt);
}

#[test]
fn block_answer_is_graded_correct() {
    let srv = spawn_gateway(state());
    let c = client();
    let s = Scenario::default_scenario();
    let book = AnswerBook::new(&s);
    let id = open(&c, &srv, "dee").session_id;
    let seg = s.segment("Seg 4-1").unwrap();
    let out: SubmitResponse = submit(&c, &srv, &id, "Seg 4-1", book.correct(&seg.id).unwrap()).json().unwrap();
    assert_eq!(out.verdict, AnswerStatus::Correct);
    assert!(out.extracted.is_some_and(|m| !m.is_empty()));
}

#[test]
fn concurrent_submissions_are_serialized() {
    let srv = spawn_gateway(state());
    let c = client();
    let id = open(&c, &srv, "eve").session_id;
    let statuses: Vec<StatusCode> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..8)
            .map(|_| {
                scope.spawn(|| {
                    c.post(srv.url(&format!("/v1/sessions/{id}/segments/{}/submissions", segment_path("Seg 1-2"))))
                        .json(&json!({ "answer": "12", "attempt_index": 1 }))
                        .send()
                        .unwrap()
                        .status()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    assert_eq!(statuses.iter().filter(|s| **s == StatusCode::OK).count(), 1, "{statuses:?}");
    assert!(statuses.iter().all(|s| *s == StatusCode::OK || *s == StatusCode::CONFLICT));
    let view: SessionView = c.get(srv.url(&format!("/v1/sessions/{id}"))).send().unwrap().json().unwrap();
    assert_eq!(view.segments.iter().find(|p| p.segment_id == "Seg 1-2").unwrap().attempts, 1);
}

#[test]
fn errors_are_well_formed() {
    let srv = spawn_gateway(state());
    let c = client();
    api_error(c.get(srv.url("/v1/nowhere")).send().unwrap(), StatusCode::NOT_FOUND, ErrorCode::NotFound);
    api_error(
        c.delete(srv.url("/v1/sessions")).send().unwrap(),
        StatusCode::METHOD_NOT_ALLOWED,
        ErrorCode::MethodNotAllowed,
    );
    api_error(
        c.get(srv.url("/v1/sessions/missing")).send().unwrap(),
        StatusCode::NOT_FOUND,
        ErrorCode::SessionNotFound,
    );
    api_error(
        c.get(srv.url("/v1/scenarios/missing")).send().unwrap(),
        StatusCode::NOT_FOUND,
        ErrorCode::ScenarioNotFound,
    );
    api_error(
        c.post(srv.url("/v1/sessions")).body("{not json").send().unwrap(),
        StatusCode::BAD_REQUEST,
        ErrorCode::BadRequest,
    );
    api_error(
        c.post(srv.url("/v1/sessions")).json(&json!({ "scenario": "missing" })).send().unwrap(),
        StatusCode::NOT_FOUND,
        ErrorCode::ScenarioNotFound,
    );
    let id = open(&c, &srv, "fay").session_id;
    let url = srv.url(&format!("/v1/sessions/{id}/segments/{}/submissions", segment_path("Seg 1-1")));
    api_error(
        c.post(&url).header("content-type", "application/json").body("{\"answer\": 3}").send().unwrap(),
        StatusCode::UNPROCESSABLE_ENTITY,
        ErrorCode::ValidationFailed,
    );
    api_error(c.post(&url).body("x+1").send().unwrap(), StatusCode::BAD_REQUEST, ErrorCode::BadRequest);
    let huge = json!({ "answer": "1".repeat(300 * 1024) });
    api_error(c.post(&url).json(&huge).send().unwrap(), StatusCode::PAYLOAD_TOO_LARGE, ErrorCode::PayloadTooLarge);
    api_error(
        c.get(srv.url(&format!("/v1/sessions/{id}"))).bearer_auth("mallory").send().unwrap(),
        StatusCode::FORBIDDEN,
        ErrorCode::Forbidden,
    );
}

#[test]
fn bearer_alias_names_the_learner() {
    let srv = spawn_gateway(state());
    let c = client();
    let resp = c.post(srv.url("/v1/sessions")).bearer_auth("gus").send().unwrap();
    assert_eq!(resp.status(), StatusCode::CREATED);
    let rec: SessionRecord = resp.json().unwrap();
    assert_eq!(rec.learner_alias, "gus");
    let resp = c.get(srv.url(&format!("/v1/sessions/{}", rec.session_id))).bearer_auth("gus").send().unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    api_error(
        c.post(srv.url("/v1/sessions")).bearer_auth("gus").json(&json!({ "learner_alias": "hal" })).send().unwrap(),
        StatusCode::UNPROCESSABLE_ENTITY,
        ErrorCode::ValidationFailed,
    );
}

#[test]
fn get_endpoints_do_not_change_state() {
    let app = state();
    let srv = spawn_gateway(app.clone());
    let c = client();
    let s = Scenario::default_scenario();
    let book = AnswerBook::new(&s);
    let mut ids = Vec::new();
    for alias in ["ivy", "jo", "kai"] {
        let id = open(&c, &srv, alias).session_id;
        for seg in s.gradable_segments().take(5) {
            submit(&c, &srv, &id, seg.id.as_str(), book.wrong(&seg.id, 1).unwrap());
        }
        ids.push(id);
    }
    for id in &ids[..2] {
        c.post(srv.url(&format!("/v1/sessions/{id}/finalize"))).send().unwrap();
    }
    let before = app.snapshot();
    let mut paths = vec!["/v1/health".to_string(), format!("/v1/scenarios/{}", s.id), "/v1/analytics/cohort".into()];
    paths.push("/v1/analytics/cohort/artifacts/stats.json".into());
    for id in &ids {
        paths.push(format!("/v1/sessions/{id}"));
        paths.push(format!("/v1/sessions/{id}/report"));
    }
    let mut first = Vec::new();
    for p in &paths {
        first.push(c.get(srv.url(p)).send().unwrap().text().unwrap());
    }
    for (p, body) in paths.iter().zip(&first) {
        assert_eq!(&c.get(srv.url(p)).send().unwrap().text().unwrap(), body, "{p}");
    }
    assert_eq!(app.snapshot(), before);
}
