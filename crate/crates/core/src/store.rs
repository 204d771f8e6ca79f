//! Append-only session storage with a JSONL journal and session
//! export/import.
//!
//! Tables live in memory behind one lock; when a journal path is given every
//! accepted event is appended to it and synced before the call returns, and
//! reopening the store replays the journal. The journal and the export
//! format share one event vocabulary.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grading::{
    AnswerFormat, AnswerStatus, Feedback, PriorAttempts, SegmentEvaluation, SubmissionKey, SubmissionRecord,
};
use crate::rubric::{OverallReport, RubricEvaluation, SelfCheck};
use crate::scenario::{RubricSpec, Scenario, SegmentId, DEFAULT_MAX_ATTEMPTS};

pub type SessionId = String;

/// Longest accepted interchange line, in bytes.
pub const MAX_LINE_BYTES: usize = 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SessionStatus {
    Active,
    Finalized,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: SessionId,
    pub scenario_id: String,
    pub learner_alias: String,
    pub status: SessionStatus,
    pub created_at: DateTime<Utc>,
}

/// A submission row with the feedback issued for it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredSubmission {
    #[serde(flatten)]
    pub record: SubmissionRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<Feedback>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelfCheckRow {
    pub session_id: SessionId,
    #[serde(flatten)]
    pub selfcheck: SelfCheck,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalizeRow {
    pub session_id: SessionId,
    pub finalized_at: DateTime<Utc>,
}

/// One line of the journal or of a session export.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    SessionOpen(SessionRecord),
    Submission(StoredSubmission),
    SegmentEvaluation(SegmentEvaluation),
    Selfcheck(SelfCheckRow),
    Finalize(FinalizeRow),
    RubricEvaluation(RubricEvaluation),
    OverallReport(OverallReport),
}

impl Event {
    pub fn session_id(&self) -> &str {
        match self {
            Event::SessionOpen(r) => &r.session_id,
            Event::Submission(s) => &s.record.session_id,
            Event::SegmentEvaluation(e) => &e.submission_ref.session_id,
            Event::Selfcheck(s) => &s.session_id,
            Event::Finalize(f) => &f.session_id,
            Event::RubricEvaluation(r) => &r.session_id,
            Event::OverallReport(r) => &r.session_id,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("events serialize")
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("session {0} not found")]
    SessionNotFound(String),
    #[error("session {0} already exists")]
    DuplicateSession(String),
    #[error("session {0} is finalized")]
    SessionFinalized(String),
    #[error("session {0} is not finalized")]
    SessionNotFinalized(String),
    #[error("attempt order violation: {0}")]
    AttemptOrderViolation(String),
    #[error("referential integrity: {0}")]
    Integrity(String),
    #[error("{0} already recorded")]
    Duplicate(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {source}")]
    AtLine { line: usize, source: Box<StoreError> },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl StoreError {
    /// The error with any line wrapper removed.
    pub fn root(&self) -> &StoreError {
        match self {
            StoreError::AtLine { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn line(&self) -> Option<usize> {
        match self {
            StoreError::AtLine { line, .. } | StoreError::Parse { line, .. } => Some(*line),
            _ => None,
        }
    }
}

/// The latest submission on a segment, or the marker for none.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Latest {
    Submitted(SubmissionRecord),
    Unattempted,
}

#[derive(Debug, Clone, Default)]
struct SessionState {
    record: Option<SessionRecord>,
    events: Vec<Event>,
    submissions: BTreeMap<SegmentId, Vec<StoredSubmission>>,
    evaluations: BTreeMap<SubmissionKey, SegmentEvaluation>,
    selfcheck: Option<SelfCheck>,
    finalized_at: Option<DateTime<Utc>>,
    rubric_evaluations: BTreeMap<u32, RubricEvaluation>,
    report: Option<OverallReport>,
}

#[derive(Debug, Clone, Default)]
struct ScenarioInfo {
    max_attempts: BTreeMap<SegmentId, u32>,
    rubrics: Vec<RubricSpec>,
    likert_items: usize,
}

#[derive(Debug, Default)]
struct Tables {
    sessions: BTreeMap<SessionId, SessionState>,
    scenarios: BTreeMap<String, ScenarioInfo>,
    next_id: u64,
}

#[derive(Debug, Default)]
pub struct Store {
    tables: RwLock<Tables>,
    journal: Option<Mutex<File>>,
}

impl SessionState {
    fn record(&self) -> &SessionRecord {
        self.record.as_ref().expect("session state always opened first")
    }

    fn prior(&self, segment: &SegmentId) -> PriorAttempts {
        let rows = self.submissions.get(segment).map(Vec::as_slice).unwrap_or(&[]);
        PriorAttempts {
            attempts: rows.len() as u32,
            solved: rows.iter().any(|r| r.record.answer_status == AnswerStatus::Correct),
        }
    }

    fn ensure_active(&self) -> Result<(), StoreError> {
        match self.record().status {
            SessionStatus::Active => Ok(()),
            SessionStatus::Finalized => Err(StoreError::SessionFinalized(self.record().session_id.clone())),
        }
    }

    fn ensure_finalized(&self) -> Result<(), StoreError> {
        match self.record().status {
            SessionStatus::Finalized => Ok(()),
            SessionStatus::Active => Err(StoreError::SessionNotFinalized(self.record().session_id.clone())),
        }
    }

    /// Checks an event against the current state and applies it.
    fn apply(&mut self, event: Event, scenario: Option<&ScenarioInfo>) -> Result<(), StoreError> {
        match &event {
            Event::SessionOpen(_) => {
                return Err(StoreError::Integrity("session_open must be the first event of a session".into()))
            }
            Event::Submission(s) => {
                self.ensure_active()?;
                let rec = &s.record;
                let max = match scenario {
                    Some(info) => *info.max_attempts.get(&rec.segment_id).ok_or_else(|| {
                        StoreError::Integrity(format!("segment {} is not gradable in the scenario", rec.segment_id))
                    })?,
                    None => DEFAULT_MAX_ATTEMPTS,
                };
                let prior = self.prior(&rec.segment_id);
                if prior.solved {
                    return Err(StoreError::AttemptOrderViolation(format!(
                        "attempt {} on {} after a correct answer",
                        rec.attempt_index, rec.segment_id
                    )));
                }
                if rec.attempt_index > max {
                    return Err(StoreError::AttemptOrderViolation(format!(
                        "attempt {} on {} exceeds the limit of {max}",
                        rec.attempt_index, rec.segment_id
                    )));
                }
                if rec.attempt_index != prior.attempts + 1 {
                    return Err(StoreError::AttemptOrderViolation(format!(
                        "attempt {} on {} arrived while {} attempt(s) are stored",
                        rec.attempt_index, rec.segment_id, prior.attempts
                    )));
                }
                match (&rec.feedback_ref, &s.feedback) {
                    (None, None) => {}
                    (Some(r), Some(f)) if *r == f.id => {}
                    _ => {
                        return Err(StoreError::Integrity(format!(
                            "feedback reference of {} attempt {} does not match its feedback",
                            rec.segment_id, rec.attempt_index
                        )))
                    }
                }
                self.submissions.entry(rec.segment_id.clone()).or_default().push(s.clone());
            }
            Event::SegmentEvaluation(e) => {
                let key = &e.submission_ref;
                let sub = self
                    .submissions
                    .get(&key.segment_id)
                    .and_then(|rows| rows.iter().find(|r| r.record.attempt_index == key.attempt_index))
                    .ok_or_else(|| {
                        StoreError::Integrity(format!(
                            "evaluation references missing submission {} attempt {}",
                            key.segment_id, key.attempt_index
                        ))
                    })?;
                if sub.record.answer_status != e.verdict {
                    return Err(StoreError::Integrity(format!(
                        "evaluation verdict for {} attempt {} disagrees with the submission",
                        key.segment_id, key.attempt_index
                    )));
                }
                if e.rationale.trim().is_empty() {
                    return Err(StoreError::Integrity("evaluation rationale is empty".into()));
                }
                if self.evaluations.contains_key(key) {
                    return Err(StoreError::Duplicate(format!(
                        "evaluation of {} attempt {}",
                        key.segment_id, key.attempt_index
                    )));
                }
                self.evaluations.insert(key.clone(), e.clone());
            }
            Event::Selfcheck(row) => {
                self.ensure_active()?;
                if self.selfcheck.is_some() {
                    return Err(StoreError::Duplicate("self-check".into()));
                }
                if let Some(info) = scenario {
                    row.selfcheck.validate(info.likert_items).map_err(StoreError::Integrity)?;
                }
                self.selfcheck = Some(row.selfcheck.clone());
            }
            Event::Finalize(f) => {
                self.ensure_active()?;
                self.finalized_at = Some(f.finalized_at);
                self.record.as_mut().expect("opened").status = SessionStatus::Finalized;
            }
            Event::RubricEvaluation(r) => {
                self.ensure_finalized()?;
                if let Some(info) = scenario {
                    if !info.rubrics.iter().any(|spec| spec.id == r.rubric_id) {
                        return Err(StoreError::Integrity(format!("unknown rubric {}", r.rubric_id)));
                    }
                }
                if self.rubric_evaluations.contains_key(&r.rubric_id) {
                    return Err(StoreError::Duplicate(format!("evaluation of rubric {}", r.rubric_id)));
                }
                self.rubric_evaluations.insert(r.rubric_id, r.clone());
            }
            Event::OverallReport(r) => {
                self.ensure_finalized()?;
                if self.report.is_some() {
                    return Err(StoreError::Duplicate("overall report".into()));
                }
                for row in &r.rubric_rows {
                    if self.rubric_evaluations.get(&row.rubric_id) != Some(row) {
                        return Err(StoreError::Integrity(format!(
                            "report row for rubric {} does not match a stored evaluation",
                            row.rubric_id
                        )));
                    }
                }
                self.report = Some(r.clone());
            }
        }
        self.events.push(event);
        Ok(())
    }
}

impl Tables {
    fn session(&self, id: &str) -> Result<&SessionState, StoreError> {
        self.sessions.get(id).ok_or_else(|| StoreError::SessionNotFound(id.to_string()))
    }

    fn scenario_for(&self, state: &SessionState) -> Option<&ScenarioInfo> {
        self.scenarios.get(&state.record().scenario_id)
    }

    fn apply(&mut self, event: Event) -> Result<u64, StoreError> {
        let id = event.session_id().to_string();
        if let Event::SessionOpen(rec) = &event {
            if self.sessions.contains_key(&id) {
                return Err(StoreError::DuplicateSession(id));
            }
            let mut rec = rec.clone();
            rec.status = SessionStatus::Active;
            let state = SessionState {
                record: Some(rec.clone()),
                events: vec![Event::SessionOpen(rec)],
                ..SessionState::default()
            };
            self.sessions.insert(id, state);
        } else {
            let state = self.sessions.get(&id).ok_or_else(|| StoreError::SessionNotFound(id.clone()))?;
            let info = self.scenario_for(state).cloned();
            let state = self.sessions.get_mut(&id).expect("checked above");
            state.apply(event, info.as_ref())?;
        }
        self.next_id += 1;
        Ok(self.next_id)
    }
}

impl Store {
    pub fn in_memory() -> Store {
        Store::default()
    }

    /// Opens a journal-backed store, replaying any existing journal.
    pub fn open(path: &Path) -> Result<Store, StoreError> {
        let mut tables = Tables::default();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let event = parse_line(&line, i + 1)?;
                tables.apply(event).map_err(|e| at_line(e, i + 1))?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Store { tables: RwLock::new(tables), journal: Some(Mutex::new(file)) })
    }

    /// Applies a multi-session log (a journal or concatenated exports) event
    /// by event, with the same checks as live writes. Returns the opened
    /// session ids in log order. Events before a failing line stay applied.
    pub fn load_log(&self, text: &str) -> Result<Vec<SessionId>, StoreError> {
        let mut opened = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let event = parse_line(line, i + 1)?;
            if let Event::SessionOpen(r) = &event {
                opened.push(r.session_id.clone());
            }
            self.append(event).map_err(|e| at_line(e, i + 1))?;
        }
        Ok(opened)
    }

    /// Makes a scenario's segment limits, rubric rows and survey length
    /// known to the store. Sessions on unregistered scenarios are checked
    /// against the default attempt limit only.
    pub fn register_scenario(&self, scenario: &Scenario) {
        let info = ScenarioInfo {
            max_attempts: scenario.gradable_segments().map(|s| (s.id.clone(), s.question.max_attempts)).collect(),
            rubrics: scenario.rubrics.clone(),
            likert_items: scenario.selfcheck.likert_items.len(),
        };
        self.write().scenarios.insert(scenario.id.clone(), info);
    }

    /// Rubric rows of a registered scenario.
    pub fn rubrics(&self, scenario_id: &str) -> Vec<RubricSpec> {
        self.read().scenarios.get(scenario_id).map(|i| i.rubrics.clone()).unwrap_or_default()
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, Tables> {
        self.tables.read().expect("store lock poisoned")
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, Tables> {
        self.tables.write().expect("store lock poisoned")
    }

    fn append(&self, event: Event) -> Result<u64, StoreError> {
        let mut tables = self.write();
        let line = event.to_line();
        let id = tables.apply(event)?;
        if let Some(journal) = &self.journal {
            let mut f = journal.lock().expect("journal lock poisoned");
            writeln!(f, "{line}")?;
            f.sync_data()?;
        }
        Ok(id)
    }

    pub fn open_session(
        &self,
        session_id: &str,
        scenario_id: &str,
        learner_alias: &str,
        created_at: DateTime<Utc>,
    ) -> Result<SessionRecord, StoreError> {
        let rec = SessionRecord {
            session_id: session_id.to_string(),
            scenario_id: scenario_id.to_string(),
            learner_alias: learner_alias.to_string(),
            status: SessionStatus::Active,
            created_at,
        };
        self.append(Event::SessionOpen(rec.clone()))?;
        Ok(rec)
    }

    /// Stores a submission and the feedback issued for it. Returns the
    /// storage id.
    pub fn append_submission(&self, record: SubmissionRecord, feedback: Option<Feedback>) -> Result<u64, StoreError> {
        self.append(Event::Submission(StoredSubmission { record, feedback }))
    }

    pub fn append_evaluation(&self, evaluation: SegmentEvaluation) -> Result<u64, StoreError> {
        self.append(Event::SegmentEvaluation(evaluation))
    }

    pub fn record_selfcheck(&self, session_id: &str, selfcheck: SelfCheck) -> Result<u64, StoreError> {
        self.append(Event::Selfcheck(SelfCheckRow { session_id: session_id.to_string(), selfcheck }))
    }

    pub fn finalize(&self, session_id: &str, at: DateTime<Utc>) -> Result<u64, StoreError> {
        self.append(Event::Finalize(FinalizeRow { session_id: session_id.to_string(), finalized_at: at }))
    }

    pub fn append_rubric_evaluation(&self, evaluation: RubricEvaluation) -> Result<u64, StoreError> {
        self.append(Event::RubricEvaluation(evaluation))
    }

    pub fn append_report(&self, report: OverallReport) -> Result<u64, StoreError> {
        self.append(Event::OverallReport(report))
    }

    pub fn session(&self, session_id: &str) -> Result<SessionRecord, StoreError> {
        Ok(self.read().session(session_id)?.record().clone())
    }

    pub fn session_ids(&self) -> Vec<SessionId> {
        self.read().sessions.keys().cloned().collect()
    }

    pub fn prior_attempts(&self, session_id: &str, segment: &SegmentId) -> Result<PriorAttempts, StoreError> {
        Ok(self.read().session(session_id)?.prior(segment))
    }

    pub fn latest_submission(&self, session_id: &str, segment: &SegmentId) -> Result<Latest, StoreError> {
        let tables = self.read();
        let state = tables.session(session_id)?;
        Ok(match state.submissions.get(segment).and_then(|rows| rows.last()) {
            Some(row) => Latest::Submitted(row.record.clone()),
            None => Latest::Unattempted,
        })
    }

    /// Every attempt on a segment, oldest first, with its feedback.
    pub fn submissions(&self, session_id: &str, segment: &SegmentId) -> Result<Vec<StoredSubmission>, StoreError> {
        let tables = self.read();
        Ok(tables.session(session_id)?.submissions.get(segment).cloned().unwrap_or_default())
    }

    /// Block-XML answers of a session, the `algeo_answer` role.
    pub fn block_answers(&self, session_id: &str) -> Result<Vec<(SubmissionKey, String)>, StoreError> {
        let tables = self.read();
        Ok(tables
            .session(session_id)?
            .submissions
            .values()
            .flatten()
            .filter(|r| r.record.answer_format == AnswerFormat::BlockXml)
            .map(|r| (r.record.key(), r.record.answers.clone()))
            .collect())
    }

    pub fn evaluation(&self, key: &SubmissionKey) -> Result<Option<SegmentEvaluation>, StoreError> {
        let tables = self.read();
        Ok(tables.session(&key.session_id)?.evaluations.get(key).cloned())
    }

    pub fn selfcheck(&self, session_id: &str) -> Result<Option<SelfCheck>, StoreError> {
        Ok(self.read().session(session_id)?.selfcheck.clone())
    }

    pub fn rubric_evaluations(&self, session_id: &str) -> Result<Vec<RubricEvaluation>, StoreError> {
        Ok(self.read().session(session_id)?.rubric_evaluations.values().cloned().collect())
    }

    pub fn report(&self, session_id: &str) -> Result<Option<OverallReport>, StoreError> {
        Ok(self.read().session(session_id)?.report.clone())
    }

    /// The session's events in the order they were accepted.
    pub fn events(&self, session_id: &str) -> Result<Vec<Event>, StoreError> {
        Ok(self.read().session(session_id)?.events.clone())
    }

    /// One JSON event per line, newline-terminated.
    pub fn export_session(&self, session_id: &str) -> Result<String, StoreError> {
        let tables = self.read();
        let mut out = String::new();
        for e in &tables.session(session_id)?.events {
            out.push_str(&e.to_line());
            out.push('\n');
        }
        Ok(out)
    }

    /// Imports one exported session. Every event is checked as if it
    /// arrived live; nothing is stored unless the whole log is accepted.
    pub fn import_session(&self, text: &str) -> Result<SessionId, StoreError> {
        let mut staging = Tables::default();
        let mut session_id: Option<String> = None;
        {
            let tables = self.read();
            staging.scenarios = tables.scenarios.clone();
        }
        let mut events = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let event = parse_line(line, n)?;
            match (&session_id, &event) {
                (None, Event::SessionOpen(r)) => session_id = Some(r.session_id.clone()),
                (None, _) => return Err(at_line(StoreError::Integrity("log must start with session_open".into()), n)),
                (Some(id), e) if e.session_id() != id => {
                    return Err(at_line(
                        StoreError::Integrity(format!("event for session {} inside log of {id}", e.session_id())),
                        n,
                    ))
                }
                _ => {}
            }
            staging.apply(event.clone()).map_err(|e| at_line(e, n))?;
            events.push(event);
        }
        let id = session_id.ok_or_else(|| StoreError::Parse { line: 0, message: "empty session log".into() })?;
        if self.read().sessions.contains_key(&id) {
            return Err(StoreError::DuplicateSession(id));
        }
        for event in events {
            self.append(event)?;
        }
        Ok(id)
    }
}

fn at_line(e: StoreError, line: usize) -> StoreError {
    StoreError::AtLine { line, source: Box::new(e) }
}

/// Parses one interchange line.
pub fn parse_line(line: &str, number: usize) -> Result<Event, StoreError> {
    if line.len() > MAX_LINE_BYTES {
        return Err(StoreError::Parse {
            line: number,
            message: format!("line is {} bytes, limit is {MAX_LINE_BYTES}", line.len()),
        });
    }
    serde_json::from_str(line).map_err(|e| StoreError::Parse { line: number, message: e.to_string() })
}
