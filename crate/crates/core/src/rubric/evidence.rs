use serde::Serialize;

use super::{credit_twentieths, score_from_credits, LikertLabel, RubricError};
use crate::grading::{AnswerStatus, SegmentEvaluation, SubmissionRecord};
use crate::scenario::{segments_for_rubric, QuestionKind, RubricSpec, Scenario, SegmentId};
use crate::store::{Latest, SessionStatus, Store, StoreError};

/// One segment's contribution to a rubric judgment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SegmentEvidence {
    pub segment_id: SegmentId,
    pub kind: QuestionKind,
    pub prompt: String,
    /// `None` is the Unattempted marker.
    pub latest: Option<SubmissionRecord>,
    pub evaluation: Option<SegmentEvaluation>,
    /// Attempt that was first graded Correct.
    pub first_correct: Option<u32>,
    /// Feedback texts for every attempt, oldest first.
    pub feedback: Vec<String>,
}

impl SegmentEvidence {
    pub fn is_unattempted(&self) -> bool {
        self.latest.is_none()
    }

    pub fn is_gradable(&self) -> bool {
        self.kind.is_gradable()
    }

    /// Credit under the fallback schedule, in twentieths.
    pub fn credit(&self) -> u32 {
        credit_twentieths(self.first_correct)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EvidenceBundle {
    pub session_id: String,
    pub rubric: RubricSpec,
    pub segments: Vec<SegmentEvidence>,
    /// Likert score of the survey item aligned with this rubric.
    pub selfcheck_item: Option<u8>,
    pub reflection: Option<String>,
}

impl EvidenceBundle {
    pub fn self_eval_label(&self) -> Option<LikertLabel> {
        self.selfcheck_item.and_then(LikertLabel::from_score)
    }

    pub fn contains(&self, segment: &str) -> bool {
        self.segments.iter().any(|s| s.segment_id.as_str() == segment)
    }

    /// Deterministic score from the credit schedule over graded segments.
    /// Unattempted segments count as zero; the self-check never counts.
    pub fn score_from_evidence(&self) -> u32 {
        let credits: Vec<u32> = self.segments.iter().filter(|s| s.is_gradable()).map(|s| s.credit()).collect();
        score_from_credits(&credits)
    }
}

/// Gathers the ordered evidence for one rubric of a finalized session.
pub fn collect_evidence(
    store: &Store,
    scenario: &Scenario,
    session_id: &str,
    rubric_id: u32,
) -> Result<EvidenceBundle, RubricError> {
    let session = store.session(session_id).map_err(|e| match e {
        StoreError::SessionNotFound(id) => RubricError::SessionNotFound(id),
        other => RubricError::Store(other),
    })?;
    if session.status != SessionStatus::Finalized {
        return Err(RubricError::SessionNotFinalized(session_id.to_string()));
    }
    let rubric = scenario.rubric(rubric_id).ok_or(RubricError::UnknownRubric(rubric_id))?.clone();
    let segments = segments_for_rubric(scenario, rubric_id).map_err(|_| RubricError::UnknownRubric(rubric_id))?;

    let mut out = Vec::with_capacity(segments.len());
    for seg in segments {
        let rows = store.submissions(session_id, &seg.id)?;
        let latest = match store.latest_submission(session_id, &seg.id)? {
            Latest::Submitted(r) => Some(r),
            Latest::Unattempted => None,
        };
        let evaluation = match &latest {
            Some(r) => store.evaluation(&r.key())?,
            None => None,
        };
        let first_correct =
            rows.iter().find(|r| r.record.answer_status == AnswerStatus::Correct).map(|r| r.record.attempt_index);
        let feedback = rows.iter().filter_map(|r| r.feedback.as_ref().map(|f| f.text.clone())).collect();
        out.push(SegmentEvidence {
            segment_id: seg.id.clone(),
            kind: seg.question.kind,
            prompt: seg.question.prompt.clone(),
            latest,
            evaluation,
            first_correct,
            feedback,
        });
    }

    let selfcheck = store.selfcheck(session_id)?;
    let selfcheck_item =
        scenario.selfcheck_item_for(rubric_id).and_then(|i| selfcheck.as_ref().and_then(|s| s.likert.get(i).copied()));
    Ok(EvidenceBundle {
        session_id: session_id.to_string(),
        rubric,
        segments: out,
        selfcheck_item,
        reflection: selfcheck.map(|s| s.reflection),
    })
}
