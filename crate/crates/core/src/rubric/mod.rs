//! Rubric evidence, leveled judgments and the session report.

mod evidence;
mod prompt;
mod synth;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use evidence::{collect_evidence, EvidenceBundle, SegmentEvidence};
pub use prompt::{overall_prompt, rubric_prompt, PROMPT_VERSION};
pub use synth::{
    fallback_evaluation, overall_report, overall_score, synthesize_rubric, synthesize_session, validate_judgment,
    SynthesisConfig,
};

use crate::store::StoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    High,
    Medium,
    Low,
}

impl Level {
    pub fn parse(s: &str) -> Option<Level> {
        match s {
            "High" => Some(Level::High),
            "Medium" => Some(Level::Medium),
            "Low" => Some(Level::Low),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Level::High => "High",
            Level::Medium => "Medium",
            Level::Low => "Low",
        }
    }
}

/// Score thresholds for the three levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandConfig {
    pub high_min: u32,
    pub medium_min: u32,
}

impl Default for BandConfig {
    fn default() -> Self {
        BandConfig { high_min: 85, medium_min: 65 }
    }
}

impl BandConfig {
    pub fn validate(&self) -> Result<(), String> {
        if 0 < self.medium_min && self.medium_min < self.high_min && self.high_min <= 100 {
            Ok(())
        } else {
            Err(format!(
                "bands need 0 < medium_min < high_min <= 100, got medium_min {} and high_min {}",
                self.medium_min, self.high_min
            ))
        }
    }
}

pub fn level_for_score(score: u32, bands: &BandConfig) -> Level {
    if score >= bands.high_min {
        Level::High
    } else if score >= bands.medium_min {
        Level::Medium
    } else {
        Level::Low
    }
}

/// Credit for one segment in twentieths: 20 for a first-attempt success,
/// three twentieths less for each extra attempt, 0 if never solved.
pub fn credit_twentieths(first_correct: Option<u32>) -> u32 {
    match first_correct {
        Some(a) if a >= 1 => 20u32.saturating_sub(3 * (a - 1)),
        _ => 0,
    }
}

/// `round(100 · mean credit)`, halves rounded up, computed exactly.
pub fn score_from_credits(credits: &[u32]) -> u32 {
    let m = credits.len() as u64;
    if m == 0 {
        return 0;
    }
    let sum: u64 = credits.iter().map(|c| *c as u64).sum();
    ((10 * sum + m) / (2 * m)) as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LikertLabel {
    StronglyAgree,
    Agree,
    Neutral,
    Disagree,
    StronglyDisagree,
}

impl LikertLabel {
    pub fn from_score(v: u8) -> Option<LikertLabel> {
        match v {
            5 => Some(LikertLabel::StronglyAgree),
            4 => Some(LikertLabel::Agree),
            3 => Some(LikertLabel::Neutral),
            2 => Some(LikertLabel::Disagree),
            1 => Some(LikertLabel::StronglyDisagree),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LikertLabel::StronglyAgree => "STRONGLY_AGREE",
            LikertLabel::Agree => "AGREE",
            LikertLabel::Neutral => "NEUTRAL",
            LikertLabel::Disagree => "DISAGREE",
            LikertLabel::StronglyDisagree => "STRONGLY_DISAGREE",
        }
    }
}

/// Post-task survey: one Likert score per scenario item (5 = strongly
/// agree) and a fill-in-the-blanks reflection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelfCheck {
    pub likert: Vec<u8>,
    pub reflection: String,
}

impl SelfCheck {
    pub fn validate(&self, item_count: usize) -> Result<(), String> {
        if self.likert.len() != item_count {
            return Err(format!("expected {item_count} Likert scores, got {}", self.likert.len()));
        }
        if let Some(v) = self.likert.iter().find(|v| !(1..=5).contains(*v)) {
            return Err(format!("Likert score {v} is outside 1..5"));
        }
        if self.reflection.trim().is_empty() {
            return Err("reflection is empty".to_string());
        }
        if self.reflection.contains("___") {
            return Err("reflection has unfilled blanks".to_string());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RubricEvaluation {
    pub session_id: String,
    pub rubric_id: u32,
    pub level: Level,
    pub score: u32,
    pub rationale: String,
    pub recommendation: String,
    #[serde(default)]
    pub self_eval_echo: Option<LikertLabel>,
    pub prompt_version: String,
    #[serde(default)]
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverallReport {
    pub session_id: String,
    pub overall_score: u32,
    pub evaluation_content: String,
    pub evaluation_result: String,
    pub recommendations: String,
    pub rubric_rows: Vec<RubricEvaluation>,
    #[serde(default)]
    pub fallback: bool,
}

#[derive(Debug, Error)]
pub enum RubricError {
    #[error("session {0} not found")]
    SessionNotFound(String),
    #[error("session {0} is not finalized")]
    SessionNotFinalized(String),
    #[error("unknown rubric {0}")]
    UnknownRubric(u32),
    #[error(transparent)]
    Store(#[from] StoreError),
}
