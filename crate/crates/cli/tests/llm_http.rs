mod common;

use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use rubricflow_cli::llm_http::{HttpLlm, WireRequest};
use rubricflow_core::grading::{GraderConfig, PriorAttempts};
use rubricflow_core::rubric::{synthesize_session, SynthesisConfig};
use rubricflow_core::{AnswerStatus, Grader, LlmClient, LlmError, LlmRequest, Scenario, Store, StubLlm};
use serde_json::{json, Value};

use common::spawn_router;

type Seen = Arc<Mutex<Vec<(Option<String>, WireRequest)>>>;

/// A model endpoint that answers with the heuristic stub and records what it
/// was sent.
fn model_server(seen: Seen) -> common::Running {
    let stub = Arc::new(StubLlm::heuristic());
    let router = Router::new()
        .route(
            "/complete",
            post(move |headers: HeaderMap, Json(req): Json<WireRequest>| {
                let stub = stub.clone();
                let seen = seen.clone();
                async move {
                    let auth = headers.get("authorization").and_then(|v| v.to_str().ok()).map(String::from);
                    let out = stub
                        .complete(&LlmRequest {
                            model_id: req.model.clone(),
                            system_text: req.system.clone(),
                            user_text: req.user.clone(),
                            schema_id: req.schema.clone(),
                            max_tokens: req.max_tokens,
                        })
                        .unwrap();
                    seen.lock().unwrap().push((auth, req));
                    Json(json!({ "output": out }))
                }
            }),
        )
        .route("/raw", post(|| async { "plain text reply" }))
        .route("/fail", post(|| async { (StatusCode::BAD_GATEWAY, "upstream down") }));
    spawn_router(router)
}

fn request(schema: &str) -> LlmRequest {
    LlmRequest {
        model_id: "m1".into(),
        system_text: "sys".into(),
        user_text: "ANSWER\n10\n".into(),
        schema_id: schema.into(),
        max_tokens: 64,
    }
}

#[test]
fn wire_format_and_errors() {
    let seen: Seen = Arc::default();
    let srv = model_server(seen.clone());
    let timeout = Duration::from_secs(10);

    let llm = HttpLlm::new(&srv.url("/complete"), Some("k-123".into()), timeout).unwrap();
    let out = llm.complete(&request(rubricflow_core::llm::OPEN_SCHEMA)).unwrap();
    assert!(serde_json::from_str::<Value>(&out).is_ok(), "{out}");
    let calls = seen.lock().unwrap();
    assert_eq!(calls.len(), 1);
    assert_eq!(calls[0].0.as_deref(), Some("Bearer k-123"));
    assert_eq!(
        calls[0].1,
        WireRequest {
            model: "m1".into(),
            system: "sys".into(),
            user: "ANSWER\n10\n".into(),
            schema: "open_correctness.v1".into(),
            max_tokens: 64
        }
    );
    drop(calls);

    let raw = HttpLlm::new(&srv.url("/raw"), None, timeout).unwrap();
    assert_eq!(raw.complete(&request("x")).unwrap(), "plain text reply");

    let fail = HttpLlm::new(&srv.url("/fail"), None, timeout).unwrap();
    assert_eq!(fail.complete(&request("x")), Err(LlmError::Status { status: 502, body: "upstream down".into() }));

    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let gone = HttpLlm::new(&format!("http://127.0.0.1:{port}/complete"), None, timeout).unwrap();
    assert!(matches!(gone.complete(&request("x")), Err(LlmError::Transport(_))));
}

#[test]
fn grading_and_synthesis_over_http() {
    let seen: Seen = Arc::default();
    let srv = model_server(seen.clone());
    let llm: Arc<dyn LlmClient> = Arc::new(HttpLlm::new(&srv.url("/complete"), None, Duration::from_secs(10)).unwrap());
    let s = Arc::new(Scenario::default_scenario());
    let book = rubricflow_cli::simulate::AnswerBook::new(&s);
    let store = Store::in_memory();
    store.register_scenario(&s);
    let t = rubricflow_cli::simulate::epoch();
    store.open_session("h1", &s.id, "ana", t).unwrap();
    let grader = Grader::new(s.clone(), llm.clone(), GraderConfig::default());
    for seg in s.gradable_segments() {
        let out = grader
            .grade_submission("h1", seg.id.as_str(), book.correct(&seg.id).unwrap(), 1, PriorAttempts::default(), t)
            .unwrap();
        assert_eq!(out.record.answer_status, AnswerStatus::Correct, "{}", seg.id);
        store.append_submission(out.record, out.feedback).unwrap();
        store.append_evaluation(out.evaluation).unwrap();
    }
    store.finalize("h1", t).unwrap();
    let report = synthesize_session(&store, &s, "h1", llm.as_ref(), &SynthesisConfig::default()).unwrap();
    assert_eq!(report.overall_score, 100);
    assert!(!report.fallback);
    let schemas: Vec<String> = seen.lock().unwrap().iter().map(|(_, r)| r.schema.clone()).collect();
    assert!(schemas.iter().any(|s| s == "open_correctness.v1"));
    assert_eq!(schemas.iter().filter(|s| *s == "rubric_judgment.v1").count(), 5);
    assert_eq!(schemas.iter().filter(|s| *s == "overall_narrative.v1").count(), 1);
}
