//! Re-grades a submission log and reports where the fresh verdicts differ
//! from the recorded ones.
//!
//! Two line formats are accepted and may be mixed: store events (as written
//! by `export-session` or the journal) and bare attempt lines
//! `{"session", "segment", "attempt", "payload", "verdict"?}`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use rubricflow_core::grading::{check_attempt, GraderConfig, GradingError, PriorAttempts, SubmissionKey};
use rubricflow_core::store::{parse_line, Event};
use rubricflow_core::{AnswerStatus, Grader, LlmClient, Scenario, SegmentId};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: attempt order violation: {detail}")]
    AttemptOrderViolation { line: usize, detail: String },
    #[error("line {line}: unknown scenario {id}")]
    UnknownScenario { line: usize, id: String },
    #[error("line {line}: {source}")]
    Grading { line: usize, source: GradingError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ReplayError {
    pub fn line(&self) -> Option<usize> {
        match self {
            ReplayError::Parse { line, .. }
            | ReplayError::AttemptOrderViolation { line, .. }
            | ReplayError::UnknownScenario { line, .. }
            | ReplayError::Grading { line, .. } => Some(*line),
            ReplayError::Io(_) => None,
        }
    }
}

/// A bare attempt line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttemptLine {
    pub session: String,
    pub segment: String,
    pub attempt: u32,
    pub payload: String,
    #[serde(default)]
    pub verdict: Option<AnswerStatus>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerdictDiff {
    pub line: usize,
    pub session_id: String,
    pub segment_id: SegmentId,
    pub attempt_index: u32,
    pub recorded: AnswerStatus,
    pub regraded: AnswerStatus,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ReplaySummary {
    /// Sessions in order of first appearance.
    pub sessions: Vec<String>,
    pub submissions: usize,
    pub diffs: Vec<VerdictDiff>,
}

impl ReplaySummary {
    pub fn diffs_for(&self, session_id: &str) -> Vec<&VerdictDiff> {
        self.diffs.iter().filter(|d| d.session_id == session_id).collect()
    }
}

impl fmt::Display for ReplaySummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} sessions, {} submissions, {} verdict diffs",
            self.sessions.len(),
            self.submissions,
            self.diffs.len()
        )
    }
}

/// Re-grades logs against a set of scenarios with one model client.
pub struct Replayer {
    scenarios: BTreeMap<String, Arc<Scenario>>,
    default_scenario: String,
    llm: Arc<dyn LlmClient>,
    config: GraderConfig,
}

struct Run<'a> {
    replayer: &'a Replayer,
    graders: BTreeMap<String, Grader>,
    session_scenario: BTreeMap<String, String>,
    prior: BTreeMap<(String, SegmentId), PriorAttempts>,
    regraded: BTreeMap<SubmissionKey, AnswerStatus>,
    diffed: BTreeSet<SubmissionKey>,
    summary: ReplaySummary,
}

impl Replayer {
    /// Lines without a `session_open` are graded against `default_scenario`.
    pub fn new(default_scenario: Arc<Scenario>, llm: Arc<dyn LlmClient>) -> Replayer {
        let id = default_scenario.id.clone();
        Replayer {
            scenarios: BTreeMap::from([(id.clone(), default_scenario)]),
            default_scenario: id,
            llm,
            config: GraderConfig::default(),
        }
    }

    pub fn with_scenario(mut self, scenario: Arc<Scenario>) -> Replayer {
        self.scenarios.insert(scenario.id.clone(), scenario);
        self
    }

    pub fn replay_file(&self, path: &std::path::Path) -> Result<ReplaySummary, ReplayError> {
        self.replay_str(&std::fs::read_to_string(path)?)
    }

    pub fn replay_str(&self, text: &str) -> Result<ReplaySummary, ReplayError> {
        let mut run = Run {
            replayer: self,
            graders: BTreeMap::new(),
            session_scenario: BTreeMap::new(),
            prior: BTreeMap::new(),
            regraded: BTreeMap::new(),
            diffed: BTreeSet::new(),
            summary: ReplaySummary::default(),
        };
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            run.line(line, n)?;
        }
        Ok(run.summary)
    }
}

impl Run<'_> {
    fn line(&mut self, line: &str, n: usize) -> Result<(), ReplayError> {
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| ReplayError::Parse { line: n, message: e.to_string() })?;
        if value.get("event").is_none() {
            let a: AttemptLine =
                serde_json::from_value(value).map_err(|e| ReplayError::Parse { line: n, message: e.to_string() })?;
            self.touch(&a.session, None, n)?;
            return self.submission(&a.session, &a.segment, a.attempt, &a.payload, a.verdict, None, n);
        }
        let event = parse_line(line, n).map_err(|e| ReplayError::Parse { line: n, message: e.to_string() })?;
        match event {
            Event::SessionOpen(r) => self.touch(&r.session_id, Some(&r.scenario_id), n),
            Event::Submission(s) => {
                let r = s.record;
                self.touch(&r.session_id, None, n)?;
                let seg = r.segment_id.to_string();
                self.submission(
                    &r.session_id,
                    &seg,
                    r.attempt_index,
                    &r.answers,
                    Some(r.answer_status),
                    Some(r.submitted_at),
                    n,
                )
            }
            Event::SegmentEvaluation(e) => {
                if let Some(regraded) = self.regraded.get(&e.submission_ref).copied() {
                    self.compare(e.submission_ref, e.verdict, regraded, n);
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn touch(&mut self, session: &str, scenario: Option<&str>, n: usize) -> Result<(), ReplayError> {
        if self.session_scenario.contains_key(session) {
            return Ok(());
        }
        let id = scenario.unwrap_or(&self.replayer.default_scenario).to_string();
        let Some(s) = self.replayer.scenarios.get(&id) else {
            return Err(ReplayError::UnknownScenario { line: n, id });
        };
        if !self.graders.contains_key(&id) {
            let g = Grader::new(s.clone(), self.replayer.llm.clone(), self.replayer.config.clone());
            self.graders.insert(id.clone(), g);
        }
        self.session_scenario.insert(session.to_string(), id);
        self.summary.sessions.push(session.to_string());
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn submission(
        &mut self,
        session: &str,
        segment: &str,
        attempt: u32,
        payload: &str,
        recorded: Option<AnswerStatus>,
        at: Option<DateTime<Utc>>,
        n: usize,
    ) -> Result<(), ReplayError> {
        let scenario_id = &self.session_scenario[session];
        let scenario = &self.replayer.scenarios[scenario_id];
        let grader = &self.graders[scenario_id];
        let seg = scenario.segment(segment).ok_or_else(|| ReplayError::Grading {
            line: n,
            source: GradingError::UnknownSegment(segment.to_string()),
        })?;
        let slot = (session.to_string(), seg.id.clone());
        let prior = self.prior.get(&slot).copied().unwrap_or_default();
        check_attempt(seg, prior, attempt).map_err(|e| match e {
            GradingError::AttemptsExhausted { .. }
            | GradingError::InvalidAttempt { .. }
            | GradingError::AlreadyCorrect(_) => ReplayError::AttemptOrderViolation { line: n, detail: e.to_string() },
            other => ReplayError::Grading { line: n, source: other },
        })?;
        let at = at.unwrap_or_else(crate::simulate::epoch);
        let out = grader
            .grade_submission(session, segment, payload, attempt, prior, at)
            .map_err(|source| ReplayError::Grading { line: n, source })?;
        let regraded = out.record.answer_status;
        let key = out.record.key();
        self.summary.submissions += 1;
        self.regraded.insert(key.clone(), regraded);
        let effective = recorded.unwrap_or(regraded);
        self.prior.insert(slot, PriorAttempts { attempts: attempt, solved: effective == AnswerStatus::Correct });
        if let Some(recorded) = recorded {
            self.compare(key, recorded, regraded, n);
        }
        Ok(())
    }

    fn compare(&mut self, key: SubmissionKey, recorded: AnswerStatus, regraded: AnswerStatus, n: usize) {
        if recorded == regraded || self.diffed.contains(&key) {
            return;
        }
        self.diffed.insert(key.clone());
        self.summary.diffs.push(VerdictDiff {
            line: n,
            session_id: key.session_id,
            segment_id: key.segment_id,
            attempt_index: key.attempt_index,
            recorded,
            regraded,
        });
    }
}
