//! Per-segment grading and the attempt-tiered feedback policy.

mod feedback;
mod normalize;
mod open;

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::block::{expr_to_xml, format_number, grade_block, parse_program};
use crate::llm::{LlmClient, LlmError};
use crate::scenario::{QuestionKind, Scenario, Segment, SegmentId};

pub use feedback::{next_feedback, ErrorPattern, Feedback, FeedbackTier, PatternMatcher, VerdictDetail};
pub use normalize::{grade_closed, normalize_answer};
pub use open::{grade_open, open_prompt, OpenVerdict, UNSCORABLE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AnswerStatus {
    Correct,
    Incorrect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnswerFormat {
    Text,
    BlockXml,
}

/// Identifies one submission: the natural key of the submission table.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SubmissionKey {
    pub session_id: String,
    pub segment_id: SegmentId,
    pub attempt_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmissionRecord {
    pub session_id: String,
    pub segment_id: SegmentId,
    pub attempt_index: u32,
    pub answers: String,
    pub answer_format: AnswerFormat,
    pub answer_status: AnswerStatus,
    #[serde(default)]
    pub feedback_ref: Option<String>,
    pub submitted_at: DateTime<Utc>,
}

impl SubmissionRecord {
    pub fn key(&self) -> SubmissionKey {
        SubmissionKey {
            session_id: self.session_id.clone(),
            segment_id: self.segment_id.clone(),
            attempt_index: self.attempt_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentEvaluation {
    pub submission_ref: SubmissionKey,
    pub verdict: AnswerStatus,
    pub rationale: String,
    /// Slot id to the learner's subtree, as block XML.
    #[serde(default)]
    pub extracted: Option<BTreeMap<String, String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GradingError {
    #[error("segment {segment} allows {max} attempts")]
    AttemptsExhausted { segment: SegmentId, max: u32 },
    #[error("segment {0} is already answered correctly")]
    AlreadyCorrect(SegmentId),
    #[error("attempt {found} on segment {segment} is out of order; expected attempt {expected}")]
    InvalidAttempt { segment: SegmentId, expected: u32, found: u32 },
    #[error("segment {0} is not graded")]
    NotGradable(SegmentId),
    #[error("unknown segment {0}")]
    UnknownSegment(String),
    #[error("block template {0} is not loaded")]
    MissingTemplate(String),
    #[error("language model unavailable: {0}")]
    LlmUnavailable(#[from] LlmError),
}

/// What earlier attempts on a (session, segment) pair established.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PriorAttempts {
    pub attempts: u32,
    pub solved: bool,
}

/// Checks that `attempt_index` may be graded next.
pub fn check_attempt(segment: &Segment, prior: PriorAttempts, attempt_index: u32) -> Result<(), GradingError> {
    if prior.solved {
        return Err(GradingError::AlreadyCorrect(segment.id.clone()));
    }
    let max = segment.question.max_attempts;
    if attempt_index > max || prior.attempts >= max {
        return Err(GradingError::AttemptsExhausted { segment: segment.id.clone(), max });
    }
    if attempt_index != prior.attempts + 1 {
        return Err(GradingError::InvalidAttempt {
            segment: segment.id.clone(),
            expected: prior.attempts + 1,
            found: attempt_index,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GradeOutcome {
    pub record: SubmissionRecord,
    pub evaluation: SegmentEvaluation,
    pub feedback: Option<Feedback>,
    /// Confirmation shown after a Correct verdict. Not feedback.
    pub closing_message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraderConfig {
    pub model_id: String,
    pub closing_message: Option<String>,
}

impl Default for GraderConfig {
    fn default() -> Self {
        GraderConfig { model_id: "default".to_string(), closing_message: Some("Correct.".to_string()) }
    }
}

#[derive(Clone)]
pub struct Grader {
    scenario: Arc<Scenario>,
    llm: Arc<dyn LlmClient>,
    config: GraderConfig,
}

pub fn feedback_id(session_id: &str, segment: &SegmentId, attempt_index: u32) -> String {
    format!("{session_id}:{segment}:{attempt_index}")
}

impl Grader {
    pub fn new(scenario: Arc<Scenario>, llm: Arc<dyn LlmClient>, config: GraderConfig) -> Grader {
        Grader { scenario, llm, config }
    }

    pub fn scenario(&self) -> &Arc<Scenario> {
        &self.scenario
    }

    pub fn llm(&self) -> &Arc<dyn LlmClient> {
        &self.llm
    }

    pub fn config(&self) -> &GraderConfig {
        &self.config
    }

    /// Grades one attempt on a segment. `prior` must describe the attempts
    /// already stored for the same (session, segment).
    pub fn grade_submission(
        &self,
        session_id: &str,
        segment_id: &str,
        raw: &str,
        attempt_index: u32,
        prior: PriorAttempts,
        submitted_at: DateTime<Utc>,
    ) -> Result<GradeOutcome, GradingError> {
        let segment =
            self.scenario.segment(segment_id).ok_or_else(|| GradingError::UnknownSegment(segment_id.to_string()))?;
        if !segment.is_gradable() {
            return Err(GradingError::NotGradable(segment.id.clone()));
        }
        check_attempt(segment, prior, attempt_index)?;

        let q = &segment.question;
        let (verdict, rationale, extracted, detail) = match q.kind {
            QuestionKind::Closed => self.closed(segment, raw),
            QuestionKind::Block => self.block(segment, raw)?,
            QuestionKind::Open => {
                let v = grade_open(&q.prompt, raw, &q.exemplars, self.llm.as_ref(), &self.config.model_id)?;
                (v.verdict, v.rationale, None, VerdictDetail::default())
            }
            QuestionKind::SelfCheck => unreachable!("checked gradable above"),
        };

        let feedback = (verdict == AnswerStatus::Incorrect).then(|| {
            let patterns: Vec<&ErrorPattern> =
                q.error_patterns.iter().filter_map(|id| self.scenario.error_pattern(id)).collect();
            next_feedback(feedback_id(session_id, &segment.id, attempt_index), q, &patterns, &detail, attempt_index)
        });
        let closing_message = match verdict {
            AnswerStatus::Correct => self.config.closing_message.clone(),
            AnswerStatus::Incorrect => None,
        };
        let record = SubmissionRecord {
            session_id: session_id.to_string(),
            segment_id: segment.id.clone(),
            attempt_index,
            answers: raw.to_string(),
            answer_format: if q.kind == QuestionKind::Block { AnswerFormat::BlockXml } else { AnswerFormat::Text },
            answer_status: verdict,
            feedback_ref: feedback.as_ref().map(|f| f.id.clone()),
            submitted_at,
        };
        let evaluation = SegmentEvaluation { submission_ref: record.key(), verdict, rationale, extracted };
        Ok(GradeOutcome { record, evaluation, feedback, closing_message })
    }

    fn closed(
        &self,
        segment: &Segment,
        raw: &str,
    ) -> (AnswerStatus, String, Option<BTreeMap<String, String>>, VerdictDetail) {
        let key = segment.question.closed_key.as_ref().expect("validated closed key");
        let verdict = grade_closed(raw, key);
        let given = normalize_answer(raw);
        let rationale = match verdict {
            AnswerStatus::Correct => format!("\"{given}\" matches an accepted answer"),
            AnswerStatus::Incorrect if given.is_empty() => "no answer given".to_string(),
            AnswerStatus::Incorrect => format!("\"{given}\" matches no accepted answer"),
        };
        let mut detail = VerdictDetail::default();
        if verdict == AnswerStatus::Incorrect {
            let reference = normalize_answer(&key.accepted[0]);
            if let (Some(a), Some(e)) = (normalize::first_number(&given), normalize::first_number(&reference)) {
                detail.value_pairs.push((a, e));
            }
            let allowed: Vec<char> =
                key.accepted.iter().flat_map(|a| normalize::letter_variables(&normalize_answer(a))).collect();
            detail.foreign_vars = normalize::letter_variables(&given)
                .into_iter()
                .filter(|c| !allowed.contains(c))
                .map(String::from)
                .collect();
        }
        (verdict, rationale, None, detail)
    }

    #[allow(clippy::type_complexity)]
    fn block(
        &self,
        segment: &Segment,
        raw: &str,
    ) -> Result<(AnswerStatus, String, Option<BTreeMap<String, String>>, VerdictDetail), GradingError> {
        let tid = segment.question.block_template_ref.as_deref().expect("validated template ref");
        let template = self.scenario.template(tid).ok_or_else(|| GradingError::MissingTemplate(tid.to_string()))?;
        let program = match parse_program(raw) {
            Ok(p) => p,
            Err(e) => {
                return Ok((
                    AnswerStatus::Incorrect,
                    format!("answer is not a valid block program: {e}"),
                    None,
                    VerdictDetail::default(),
                ))
            }
        };
        let v = grade_block(&program, template);
        let rationale = match v.status {
            AnswerStatus::Correct => {
                let printed: Vec<String> =
                    template.references.iter().flat_map(|r| r.expected.iter().map(|e| format_number(*e))).collect();
                format!("matches the task template and prints {}", printed.join(", "))
            }
            AnswerStatus::Incorrect => v.reasons.join("; "),
        };
        let extracted =
            (!v.extracted.is_empty()).then(|| v.extracted.iter().map(|(k, e)| (k.clone(), expr_to_xml(e))).collect());
        let detail = VerdictDetail {
            missing_kinds: v.missing_kinds.clone(),
            value_pairs: v.output_mismatches.iter().map(|m| (m.actual, m.expected)).collect(),
            foreign_vars: v.foreign_vars.clone(),
        };
        Ok((v.status, rationale, extracted, detail))
    }
}
