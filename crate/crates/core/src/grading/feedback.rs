use serde::{Deserialize, Serialize};

use crate::block::BlockKind;
use crate::scenario::{Question, QuestionKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeedbackTier {
    ConceptualHint,
    CorrectiveInstruction,
}

impl FeedbackTier {
    /// Attempts 1 and 2 get conceptual hints; later attempts get corrective
    /// instructions.
    pub fn for_attempt(attempt_index: u32) -> FeedbackTier {
        if attempt_index <= 2 {
            FeedbackTier::ConceptualHint
        } else {
            FeedbackTier::CorrectiveInstruction
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feedback {
    pub id: String,
    pub tier: FeedbackTier,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_pattern: Option<String>,
}

/// Declarative predicate over a verdict's details.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PatternMatcher {
    /// A required block kind is absent.
    KindMissing {
        kind: BlockKind,
    },
    /// A compared value has the opposite sign of its expectation.
    WrongSign,
    /// A compared value is exactly one away from its expectation.
    OffByOne,
    /// The answer uses a variable the task does not define.
    WrongVariable,
    Generic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorPattern {
    pub id: String,
    pub applies_to: Vec<QuestionKind>,
    pub matcher: PatternMatcher,
    pub hint_text: String,
    pub corrective_text: String,
}

/// What a grader observed about an incorrect answer, as seen by error
/// pattern matchers.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct VerdictDetail {
    pub missing_kinds: Vec<BlockKind>,
    /// (actual, expected) pairs that disagreed.
    pub value_pairs: Vec<(f64, f64)>,
    pub foreign_vars: Vec<String>,
}

impl PatternMatcher {
    pub fn fires(&self, d: &VerdictDetail) -> bool {
        match self {
            PatternMatcher::KindMissing { kind } => d.missing_kinds.contains(kind),
            PatternMatcher::WrongSign => {
                d.value_pairs.iter().any(|(a, e)| (*a < 0.0 && *e > 0.0) || (*a > 0.0 && *e < 0.0))
            }
            PatternMatcher::OffByOne => d.value_pairs.iter().any(|(a, e)| ((a - e).abs() - 1.0).abs() <= 1e-9),
            PatternMatcher::WrongVariable => !d.foreign_vars.is_empty(),
            PatternMatcher::Generic => true,
        }
    }
}

fn default_text(tier: FeedbackTier) -> String {
    match tier {
        FeedbackTier::ConceptualHint => "Reread the task and check each step of your reasoning.",
        FeedbackTier::CorrectiveInstruction => {
            "Compare your answer with the task statement step by step and fix the first step that differs."
        }
    }
    .to_string()
}

/// Feedback for an incorrect attempt. The tier follows the attempt band; the
/// text comes from the first listed pattern that applies and fires, falling
/// back to the question's generic texts.
pub fn next_feedback(
    feedback_id: String,
    question: &Question,
    patterns: &[&ErrorPattern],
    detail: &VerdictDetail,
    attempt_index: u32,
) -> Feedback {
    let tier = FeedbackTier::for_attempt(attempt_index);
    let hit = patterns.iter().find(|p| p.applies_to.contains(&question.kind) && p.matcher.fires(detail));
    let (text, matched_pattern) = match hit {
        Some(p) => {
            let text = match tier {
                FeedbackTier::ConceptualHint => &p.hint_text,
                FeedbackTier::CorrectiveInstruction => &p.corrective_text,
            };
            (text.clone(), Some(p.id.clone()))
        }
        None => {
            let text = match tier {
                FeedbackTier::ConceptualHint => &question.hint,
                FeedbackTier::CorrectiveInstruction => &question.corrective,
            };
            let text = if text.trim().is_empty() { default_text(tier) } else { text.clone() };
            (text, None)
        }
    };
    Feedback { id: feedback_id, tier, text, matched_pattern }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scenario;

    fn missing_sqrt() -> VerdictDetail {
        VerdictDetail { missing_kinds: vec![BlockKind::Sqrt], ..Default::default() }
    }

    fn seg41_patterns(s: &Scenario) -> (Question, Vec<&ErrorPattern>) {
        let seg = s.segment("Seg 4-1").unwrap();
        let pats = seg.question.error_patterns.iter().map(|id| s.error_pattern(id).unwrap()).collect();
        (seg.question.clone(), pats)
    }

    #[test]
    fn first_attempt_gets_pattern_hint() {
        let s = Scenario::default_scenario();
        let (q, pats) = seg41_patterns(&s);
        let fb = next_feedback("f".into(), &q, &pats, &missing_sqrt(), 1);
        assert_eq!(fb.tier, FeedbackTier::ConceptualHint);
        assert_eq!(fb.text, s.error_pattern("missing-sqrt").unwrap().hint_text);
        assert_eq!(fb.matched_pattern.as_deref(), Some("missing-sqrt"));
    }

    #[test]
    fn fourth_attempt_gets_corrective() {
        let s = Scenario::default_scenario();
        let (q, pats) = seg41_patterns(&s);
        let fb = next_feedback("f".into(), &q, &pats, &missing_sqrt(), 4);
        assert_eq!(fb.tier, FeedbackTier::CorrectiveInstruction);
        assert_eq!(fb.text, s.error_pattern("missing-sqrt").unwrap().corrective_text);
    }

    #[test]
    fn generic_fallback() {
        let s = Scenario::default_scenario();
        let (q, pats) = seg41_patterns(&s);
        let fb = next_feedback("f".into(), &q, &pats, &VerdictDetail::default(), 2);
        assert_eq!(fb.tier, FeedbackTier::ConceptualHint);
        assert_eq!(fb.text, q.hint);
        assert_eq!(fb.matched_pattern, None);
    }

    #[test]
    fn negative_root_fires_wrong_sign() {
        let d = VerdictDetail { value_pairs: vec![(-11.0, 10.0)], ..Default::default() };
        assert!(PatternMatcher::WrongSign.fires(&d));
        assert!(!PatternMatcher::OffByOne.fires(&d));
        let d = VerdictDetail { value_pairs: vec![(11.0, 10.0)], ..Default::default() };
        assert!(PatternMatcher::OffByOne.fires(&d));
    }

    #[test]
    fn tier_bands() {
        assert_eq!(FeedbackTier::for_attempt(1), FeedbackTier::ConceptualHint);
        assert_eq!(FeedbackTier::for_attempt(2), FeedbackTier::ConceptualHint);
        assert_eq!(FeedbackTier::for_attempt(3), FeedbackTier::CorrectiveInstruction);
        assert_eq!(FeedbackTier::for_attempt(4), FeedbackTier::CorrectiveInstruction);
    }
}
