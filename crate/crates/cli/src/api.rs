//! The `/v1` JSON gateway.

use std::collections::{BTreeMap, HashMap};
use std::future::Future;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use rubricflow_core::analytics::{analyze_cohort, Analysis, AnalyticsError, CohortMatrix, ExpertScores, StatsDoc};
use rubricflow_core::block::{serialize_program, BlockKind};
use rubricflow_core::grading::{Feedback, GraderConfig, GradingError};
use rubricflow_core::rubric::{synthesize_session, RubricError, SynthesisConfig};
use rubricflow_core::scenario::{QuestionKind, RubricSpec, StageDescriptor};
use rubricflow_core::store::{Latest, SessionRecord, SessionStatus};
use rubricflow_core::{
    AnswerStatus, Grader, LlmClient, OverallReport, Scenario, SegmentEvaluation, SelfCheck, Store, StoreError,
    SubmissionRecord,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Largest accepted request body.
pub const MAX_BODY_BYTES: usize = 256 * 1024;

/// The closed set of error codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorCode {
    BadRequest,
    ValidationFailed,
    Forbidden,
    NotFound,
    MethodNotAllowed,
    SessionNotFound,
    ScenarioNotFound,
    SegmentNotFound,
    ArtifactNotFound,
    NotGradable,
    AttemptsExhausted,
    AlreadyCorrect,
    InvalidAttempt,
    SessionFinalized,
    SessionNotFinalized,
    ReportNotReady,
    AlreadyRecorded,
    InsufficientData,
    LlmUnavailable,
    PayloadTooLarge,
    Internal,
}

impl ErrorCode {
    pub fn status(self) -> StatusCode {
        use ErrorCode::*;
        match self {
            BadRequest => StatusCode::BAD_REQUEST,
            ValidationFailed | NotGradable | InsufficientData => StatusCode::UNPROCESSABLE_ENTITY,
            Forbidden => StatusCode::FORBIDDEN,
            NotFound | SessionNotFound | ScenarioNotFound | SegmentNotFound | ArtifactNotFound => StatusCode::NOT_FOUND,
            MethodNotAllowed => StatusCode::METHOD_NOT_ALLOWED,
            AttemptsExhausted | AlreadyCorrect | InvalidAttempt | SessionFinalized | SessionNotFinalized
            | ReportNotReady | AlreadyRecorded => StatusCode::CONFLICT,
            LlmUnavailable => StatusCode::SERVICE_UNAVAILABLE,
            PayloadTooLarge => StatusCode::PAYLOAD_TOO_LARGE,
            Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

/// Body of every 4xx and 5xx response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub http_status: u16,
    pub code: ErrorCode,
    pub detail: String,
}

impl ApiError {
    pub fn new(code: ErrorCode, detail: impl Into<String>) -> ApiError {
        ApiError { http_status: code.status().as_u16(), code, detail: detail.into() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(self)).into_response()
    }
}

fn store_code(e: &StoreError) -> ErrorCode {
    match e.root() {
        StoreError::SessionNotFound(_) => ErrorCode::SessionNotFound,
        StoreError::SessionFinalized(_) => ErrorCode::SessionFinalized,
        StoreError::SessionNotFinalized(_) => ErrorCode::SessionNotFinalized,
        StoreError::AttemptOrderViolation(_) => ErrorCode::InvalidAttempt,
        StoreError::Duplicate(_) | StoreError::DuplicateSession(_) => ErrorCode::AlreadyRecorded,
        StoreError::Integrity(_) | StoreError::Parse { .. } => ErrorCode::ValidationFailed,
        StoreError::AtLine { .. } | StoreError::Io(_) => ErrorCode::Internal,
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> ApiError {
        ApiError::new(store_code(&e), e.to_string())
    }
}

impl From<GradingError> for ApiError {
    fn from(e: GradingError) -> ApiError {
        let code = match &e {
            GradingError::AttemptsExhausted { .. } => ErrorCode::AttemptsExhausted,
            GradingError::AlreadyCorrect(_) => ErrorCode::AlreadyCorrect,
            GradingError::InvalidAttempt { .. } => ErrorCode::InvalidAttempt,
            GradingError::NotGradable(_) => ErrorCode::NotGradable,
            GradingError::UnknownSegment(_) => ErrorCode::SegmentNotFound,
            GradingError::MissingTemplate(_) => ErrorCode::Internal,
            GradingError::LlmUnavailable(_) => ErrorCode::LlmUnavailable,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<RubricError> for ApiError {
    fn from(e: RubricError) -> ApiError {
        let code = match &e {
            RubricError::Store(s) => store_code(s),
            RubricError::SessionNotFound(_) => ErrorCode::SessionNotFound,
            RubricError::SessionNotFinalized(_) => ErrorCode::SessionNotFinalized,
            RubricError::UnknownRubric(_) => ErrorCode::Internal,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<AnalyticsError> for ApiError {
    fn from(e: AnalyticsError) -> ApiError {
        let code = match &e {
            AnalyticsError::Store(s) => store_code(s),
            AnalyticsError::InsufficientData { .. }
            | AnalyticsError::TooFewRows { .. }
            | AnalyticsError::EmptyInput => ErrorCode::InsufficientData,
            _ => ErrorCode::Internal,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> ApiError {
        let code = match r.status() {
            StatusCode::PAYLOAD_TOO_LARGE => ErrorCode::PayloadTooLarge,
            StatusCode::UNPROCESSABLE_ENTITY => ErrorCode::ValidationFailed,
            _ => ErrorCode::BadRequest,
        };
        ApiError::new(code, r.body_text())
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

/// Everything the gateway needs, built once at startup.
pub struct AppConfig {
    pub scenarios: Vec<Arc<Scenario>>,
    pub store: Arc<Store>,
    pub llm: Arc<dyn LlmClient>,
    pub grader: GraderConfig,
    pub synthesis: SynthesisConfig,
    pub expert: Option<ExpertScores>,
    pub analytics_seed: u64,
    pub clock: Clock,
}

impl AppConfig {
    /// One scenario, an in-memory store, wall-clock time.
    pub fn new(scenario: Arc<Scenario>, llm: Arc<dyn LlmClient>) -> AppConfig {
        AppConfig {
            scenarios: vec![scenario],
            store: Arc::new(Store::in_memory()),
            llm,
            grader: GraderConfig::default(),
            synthesis: SynthesisConfig::default(),
            expert: None,
            analytics_seed: 7,
            clock: Arc::new(Utc::now),
        }
    }
}

type SessionLock = Arc<tokio::sync::Mutex<()>>;

struct Inner {
    store: Arc<Store>,
    scenarios: BTreeMap<String, Arc<Scenario>>,
    default_scenario: String,
    graders: BTreeMap<String, Arc<Grader>>,
    llm: Arc<dyn LlmClient>,
    synthesis: SynthesisConfig,
    expert: Option<ExpertScores>,
    analytics_seed: u64,
    clock: Clock,
    locks: Mutex<HashMap<(String, String), SessionLock>>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(cfg: AppConfig) -> AppState {
        assert!(!cfg.scenarios.is_empty(), "at least one scenario");
        let default_scenario = cfg.scenarios[0].id.clone();
        let mut scenarios = BTreeMap::new();
        let mut graders = BTreeMap::new();
        for s in cfg.scenarios {
            cfg.store.register_scenario(&s);
            graders.insert(s.id.clone(), Arc::new(Grader::new(s.clone(), cfg.llm.clone(), cfg.grader.clone())));
            scenarios.insert(s.id.clone(), s);
        }
        AppState(Arc::new(Inner {
            store: cfg.store,
            scenarios,
            default_scenario,
            graders,
            llm: cfg.llm,
            synthesis: cfg.synthesis,
            expert: cfg.expert,
            analytics_seed: cfg.analytics_seed,
            clock: cfg.clock,
            locks: Mutex::new(HashMap::new()),
        }))
    }

    pub fn store(&self) -> &Store {
        &self.0.store
    }

    /// Every session export, in id order. Equal snapshots mean equal state.
    pub fn snapshot(&self) -> String {
        let store = &self.0.store;
        store.session_ids().iter().filter_map(|id| store.export_session(id).ok()).collect()
    }

    fn lock_for(&self, session: &str, scope: &str) -> SessionLock {
        let mut locks = self.0.locks.lock().expect("lock table poisoned");
        locks.entry((session.to_string(), scope.to_string())).or_default().clone()
    }

    fn scenario_of(&self, session: &SessionRecord) -> ApiResult<Arc<Scenario>> {
        self.0.scenarios.get(&session.scenario_id).cloned().ok_or_else(|| {
            ApiError::new(ErrorCode::ScenarioNotFound, format!("scenario {} is not loaded", session.scenario_id))
        })
    }

    /// The session, after checking any bearer alias against its owner.
    fn session(&self, headers: &HeaderMap, id: &str) -> ApiResult<SessionRecord> {
        let rec = self.0.store.session(id)?;
        if let Some(alias) = bearer(headers) {
            if alias != rec.learner_alias {
                return Err(ApiError::new(ErrorCode::Forbidden, format!("session {id} belongs to another learner")));
            }
        }
        Ok(rec)
    }

    fn analysis(&self, scenario: Option<&str>) -> ApiResult<Analysis> {
        let scenario_id = scenario.unwrap_or(&self.0.default_scenario);
        let s = self.0.scenarios.get(scenario_id).ok_or_else(|| {
            ApiError::new(ErrorCode::ScenarioNotFound, format!("scenario {scenario_id} is not loaded"))
        })?;
        let store = &self.0.store;
        let ids: Vec<String> = store
            .session_ids()
            .into_iter()
            .filter(|id| store.session(id).is_ok_and(|r| r.scenario_id == *scenario_id))
            .collect();
        let cohort = CohortMatrix::from_store(store, s, &ids)?;
        Ok(analyze_cohort(&cohort, self.0.expert.as_ref(), self.0.analytics_seed)?)
    }
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    let v = headers.get(header::AUTHORIZATION)?.to_str().ok()?;
    v.strip_prefix("Bearer ").map(str::trim).filter(|t| !t.is_empty())
}

fn body<T>(r: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    r.map(|Json(v)| v).map_err(ApiError::from)
}

fn optional_body<T: DeserializeOwned + Default>(bytes: &Bytes) -> ApiResult<T> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(bytes).map_err(|e| ApiError::new(ErrorCode::BadRequest, format!("invalid JSON body: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(ErrorCode::Internal, format!("worker failed: {e}")))?
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub scenario: Option<String>,
    pub learner_alias: Option<String>,
}

async fn create_session(
    State(app): State<AppState>,
    headers: HeaderMap,
    raw: Bytes,
) -> ApiResult<(StatusCode, Json<SessionRecord>)> {
    let req: CreateSession = optional_body(&raw)?;
    let scenario = req.scenario.unwrap_or_else(|| app.0.default_scenario.clone());
    if !app.0.scenarios.contains_key(&scenario) {
        return Err(ApiError::new(ErrorCode::ScenarioNotFound, format!("scenario {scenario} is not loaded")));
    }
    let alias = match (req.learner_alias, bearer(&headers)) {
        (Some(a), Some(b)) if a != b => {
            return Err(ApiError::new(ErrorCode::ValidationFailed, "learner_alias disagrees with the bearer token"))
        }
        (Some(a), _) => a,
        (None, Some(b)) => b.to_string(),
        (None, None) => "anonymous".to_string(),
    };
    if alias.trim().is_empty() || alias.len() > 128 {
        return Err(ApiError::new(ErrorCode::ValidationFailed, "learner_alias must be 1 to 128 characters"));
    }
    let id = uuid::Uuid::new_v4().to_string();
    let rec = app.0.store.open_session(&id, &scenario, &alias, (app.0.clock)())?;
    Ok((StatusCode::CREATED, Json(rec)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SegmentState {
    Unattempted,
    Correct,
    Incorrect,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentProgress {
    pub segment_id: String,
    pub stage: u32,
    pub kind: QuestionKind,
    pub attempts: u32,
    pub max_attempts: u32,
    pub attempts_remaining: u32,
    pub state: SegmentState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionView {
    pub session: SessionRecord,
    pub segments: Vec<SegmentProgress>,
    pub selfcheck_recorded: bool,
    pub report_ready: bool,
}

async fn get_session(
    State(app): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<Json<SessionView>> {
    let session = app.session(&headers, &id)?;
    let scenario = app.scenario_of(&session)?;
    let store = &app.0.store;
    let mut segments = Vec::new();
    for seg in scenario.gradable_segments() {
        let prior = store.prior_attempts(&id, &seg.id)?;
        let max = seg.question.max_attempts;
        let state = match store.latest_submission(&id, &seg.id)? {
            Latest::Unattempted => SegmentState::Unattempted,
            Latest::Submitted(r) if r.answer_status == AnswerStatus::Correct => SegmentState::Correct,
            Latest::Submitted(_) if prior.attempts >= max => SegmentState::Exhausted,
            Latest::Submitted(_) => SegmentState::Incorrect,
        };
        let remaining = if prior.solved { 0 } else { max.saturating_sub(prior.attempts) };
        segments.push(SegmentProgress {
            segment_id: seg.id.to_string(),
            stage: seg.stage,
            kind: seg.question.kind,
            attempts: prior.attempts,
            max_attempts: max,
            attempts_remaining: remaining,
            state,
        });
    }
    Ok(Json(SessionView {
        selfcheck_recorded: store.selfcheck(&id)?.is_some(),
        report_ready: store.report(&id)?.is_some(),
        session,
        segments,
    }))
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SubmitRequest {
    pub answer: String,
    #[serde(default)]
    pub attempt_index: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub submission: SubmissionRecord,
    pub verdict: AnswerStatus,
    pub rationale: String,
    pub extracted: Option<BTreeMap<String, String>>,
    pub feedback: Option<Feedback>,
    pub closing_message: Option<String>,
    pub attempts_remaining: u32,
}

async fn submit(
    State(app): State<AppState>,
    headers: HeaderMap,
    Path((id, seg)): Path<(String, String)>,
    req: Result<Json<SubmitRequest>, JsonRejection>,
) -> ApiResult<Json<SubmitResponse>> {
    let req = body(req)?;
    let session = app.session(&headers, &id)?;
    if session.status == SessionStatus::Finalized {
        return Err(ApiError::new(ErrorCode::SessionFinalized, format!("session {id} is finalized")));
    }
    let scenario = app.scenario_of(&session)?;
    let segment = scenario
        .segment(&seg)
        .ok_or_else(|| ApiError::new(ErrorCode::SegmentNotFound, format!("unknown segment {seg}")))?;
    let (segment_id, max) = (segment.id.clone(), segment.question.max_attempts);
    let grader = app.0.graders[&session.scenario_id].clone();

    let lock = app.lock_for(&id, segment_id.as_str());
    let _guard = lock.lock().await;
    let app2 = app.clone();
    blocking(move || {
        let store = &app2.0.store;
        let prior = store.prior_attempts(&id, &segment_id)?;
        let attempt = req.attempt_index.unwrap_or(prior.attempts + 1);
        let out = grader.grade_submission(&id, segment_id.as_str(), &req.answer, attempt, prior, (app2.0.clock)())?;
        let SegmentEvaluation { verdict, rationale, extracted, .. } = out.evaluation.clone();
        store.append_submission(out.record.clone(), out.feedback.clone())?;
        store.append_evaluation(out.evaluation)?;
        let attempts_remaining = if verdict == AnswerStatus::Correct { 0 } else { max.saturating_sub(attempt) };
        Ok(Json(SubmitResponse {
            submission: out.record,
            verdict,
            rationale,
            extracted,
            feedback: out.feedback,
            closing_message: out.closing_message,
            attempts_remaining,
        }))
    })
    .await
}

async fn selfcheck(
    State(app): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
    req: Result<Json<SelfCheck>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<SelfCheck>)> {
    let req = body(req)?;
    let session = app.session(&headers, &id)?;
    if session.status == SessionStatus::Finalized {
        return Err(ApiError::new(ErrorCode::SessionFinalized, format!("session {id} is finalized")));
    }
    let scenario = app.scenario_of(&session)?;
    req.validate(scenario.selfcheck.likert_items.len()).map_err(|e| ApiError::new(ErrorCode::ValidationFailed, e))?;
    app.0.store.record_selfcheck(&id, req.clone())?;
    Ok((StatusCode::CREATED, Json(req)))
}

async fn finalize(
    State(app): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<Json<OverallReport>> {
    let session = app.session(&headers, &id)?;
    let scenario = app.scenario_of(&session)?;
    let lock = app.lock_for(&id, "");
    let _guard = lock.lock().await;
    let app2 = app.clone();
    blocking(move || {
        let store = &app2.0.store;
        if store.report(&id)?.is_some() {
            return Err(ApiError::new(ErrorCode::SessionFinalized, format!("session {id} already has a report")));
        }
        if store.session(&id)?.status == SessionStatus::Active {
            store.finalize(&id, (app2.0.clock)())?;
        }
        let report = synthesize_session(store, &scenario, &id, app2.0.llm.as_ref(), &app2.0.synthesis)?;
        Ok(Json(report))
    })
    .await
}

async fn get_report(
    State(app): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<Json<OverallReport>> {
    let session = app.session(&headers, &id)?;
    if session.status != SessionStatus::Finalized {
        return Err(ApiError::new(ErrorCode::SessionNotFinalized, format!("session {id} is not finalized")));
    }
    app.0
        .store
        .report(&id)?
        .map(Json)
        .ok_or_else(|| ApiError::new(ErrorCode::ReportNotReady, format!("report for {id} is not ready")))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockView {
    pub template_id: String,
    /// Template program with slots, as block XML.
    pub skeleton_xml: String,
    pub required_kinds: BTreeMap<BlockKind, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentView {
    pub segment_id: String,
    pub stage: u32,
    pub kind: QuestionKind,
    pub prompt: String,
    pub rubric_ids: Vec<u32>,
    pub max_attempts: u32,
    pub block: Option<BlockView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LikertView {
    pub rubric_id: u32,
    pub text: String,
}

/// What a client may see of a scenario: no answer keys, exemplars or
/// reference solutions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioView {
    pub id: String,
    pub title: String,
    pub stages: Vec<StageDescriptor>,
    pub rubrics: Vec<RubricSpec>,
    pub segments: Vec<SegmentView>,
    pub likert_items: Vec<LikertView>,
    pub reflection_template: String,
}

impl ScenarioView {
    pub fn of(s: &Scenario) -> ScenarioView {
        ScenarioView {
            id: s.id.clone(),
            title: s.title.clone(),
            stages: s.stages.clone(),
            rubrics: s.rubrics.clone(),
            segments: s
                .segments
                .iter()
                .map(|seg| SegmentView {
                    segment_id: seg.id.to_string(),
                    stage: seg.stage,
                    kind: seg.question.kind,
                    prompt: seg.question.prompt.clone(),
                    rubric_ids: seg.rubric_ids.clone(),
                    max_attempts: seg.question.max_attempts,
                    block: seg.question.block_template_ref.as_deref().and_then(|tid| s.template(tid)).map(|t| {
                        BlockView {
                            template_id: t.id.clone(),
                            skeleton_xml: serialize_program(&t.program),
                            required_kinds: t.required_kinds.clone(),
                        }
                    }),
                })
                .collect(),
            likert_items: s
                .selfcheck
                .likert_items
                .iter()
                .map(|i| LikertView { rubric_id: i.rubric_id, text: i.text.clone() })
                .collect(),
            reflection_template: s.selfcheck.reflection_template.clone(),
        }
    }
}

async fn get_scenario(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<ScenarioView>> {
    app.0
        .scenarios
        .get(&id)
        .map(|s| Json(ScenarioView::of(s)))
        .ok_or_else(|| ApiError::new(ErrorCode::ScenarioNotFound, format!("scenario {id} is not loaded")))
}

#[derive(Debug, Default, Deserialize)]
pub struct CohortQuery {
    pub scenario: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CohortView {
    pub stats: StatsDoc,
    pub artifacts: Vec<String>,
}

async fn cohort(State(app): State<AppState>, Query(q): Query<CohortQuery>) -> ApiResult<Json<CohortView>> {
    let a = blocking(move || app.analysis(q.scenario.as_deref())).await?;
    Ok(Json(CohortView { artifacts: a.files.iter().map(|(n, _)| n.clone()).collect(), stats: a.stats }))
}

async fn artifact(
    State(app): State<AppState>,
    Path(name): Path<String>,
    Query(q): Query<CohortQuery>,
) -> ApiResult<Response> {
    let a = blocking(move || app.analysis(q.scenario.as_deref())).await?;
    let (_, text) = a
        .files
        .into_iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| ApiError::new(ErrorCode::ArtifactNotFound, format!("no artifact named {name}")))?;
    let mime = match name.rsplit('.').next() {
        Some("svg") => "image/svg+xml",
        Some("csv") => "text/csv; charset=utf-8",
        Some("json") => "application/json",
        _ => "text/plain; charset=utf-8",
    };
    Ok(([(header::CONTENT_TYPE, mime)], text).into_response())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub sessions: usize,
    pub scenarios: Vec<String>,
}

async fn health(State(app): State<AppState>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        sessions: app.0.store.session_ids().len(),
        scenarios: app.0.scenarios.keys().cloned().collect(),
    })
}

async fn not_found() -> ApiError {
    ApiError::new(ErrorCode::NotFound, "no such route")
}

async fn method_not_allowed() -> ApiError {
    ApiError::new(ErrorCode::MethodNotAllowed, "method not allowed on this route")
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/segments/{seg}/submissions", post(submit))
        .route("/v1/sessions/{id}/selfcheck", post(selfcheck))
        .route("/v1/sessions/{id}/finalize", post(finalize))
        .route("/v1/sessions/{id}/report", get(get_report))
        .route("/v1/scenarios/{id}", get(get_scenario))
        .route("/v1/analytics/cohort", get(cohort))
        .route("/v1/analytics/cohort/artifacts/{name}", get(artifact))
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

/// Serves until `shutdown` resolves, then waits for in-flight requests.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}
