use std::fmt::Write as _;

use super::{BandConfig, EvidenceBundle, RubricEvaluation};
use crate::scenario::QuestionKind;

/// Layout version stored with every rubric evaluation.
pub const PROMPT_VERSION: &str = "rubric-prompt/v1";

pub(crate) const RUBRIC_SYSTEM: &str = "You judge a learner's achievement on one rubric subcategory \
from the evidence of a finished algebra session. Anchor the judgment in the rubric descriptors. \
Reply with one JSON object with exactly the fields \"level\" (High, Medium or Low), \"score\" \
(integer 0-100 inside the band of the level), \"rationale\" (cite segment ids such as \"Seg 3-2\" \
for every claim) and \"recommendation\".";

pub(crate) const OVERALL_SYSTEM: &str = "You summarize rubric judgments of one algebra session. \
Reply with one JSON object with exactly the fields \"evaluation_content\", \"evaluation_result\" \
and \"recommendations\", each a short paragraph.";

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn rubric_prompt(b: &EvidenceBundle, bands: &BandConfig) -> String {
    let r = &b.rubric;
    let mut out = String::new();
    let _ = writeln!(out, "RUBRIC {}: {}", r.id, r.title);
    let _ = writeln!(out, "HIGH: {}", one_line(&r.descriptor_high));
    let _ = writeln!(out, "MEDIUM: {}", one_line(&r.descriptor_medium));
    let _ = writeln!(out, "LOW: {}", one_line(&r.descriptor_low));
    let _ = writeln!(out, "BANDS: high >= {}, medium >= {}", bands.high_min, bands.medium_min);
    out.push_str("\nEVIDENCE\n");
    for s in &b.segments {
        if s.kind == QuestionKind::SelfCheck {
            let label = b.self_eval_label().map(|l| l.as_str()).unwrap_or("NOT_ANSWERED");
            let _ = writeln!(out, "- {} | selfcheck | {label}", s.segment_id);
            continue;
        }
        let Some(latest) = &s.latest else {
            let _ = writeln!(out, "- {} | unattempted", s.segment_id);
            let _ = writeln!(out, "  prompt: {}", one_line(&s.prompt));
            continue;
        };
        let first = s.first_correct.map(|a| a.to_string()).unwrap_or_else(|| "never".to_string());
        let status = match latest.answer_status {
            crate::grading::AnswerStatus::Correct => "Correct",
            crate::grading::AnswerStatus::Incorrect => "Incorrect",
        };
        let _ = writeln!(
            out,
            "- {} | attempts={} | first_correct={first} | status={status}",
            s.segment_id, latest.attempt_index
        );
        let _ = writeln!(out, "  prompt: {}", one_line(&s.prompt));
        let _ = writeln!(out, "  answer: {}", one_line(&latest.answers));
        if let Some(e) = &s.evaluation {
            let _ = writeln!(out, "  evaluation: {}", one_line(&e.rationale));
        }
        if !s.feedback.is_empty() {
            let texts: Vec<String> = s.feedback.iter().map(|f| one_line(f)).collect();
            let _ = writeln!(out, "  feedback: {}", texts.join(" / "));
        }
    }
    out.push_str("\nAUXILIARY\n");
    let label = b.self_eval_label().map(|l| l.as_str()).unwrap_or("NOT_ANSWERED");
    let _ = writeln!(out, "self_check: {label}");
    let _ = write!(out, "reflection: {}", one_line(b.reflection.as_deref().unwrap_or("")));
    out
}

pub fn overall_prompt(rows: &[RubricEvaluation], titles: &[(u32, String)], overall_score: u32) -> String {
    let mut out = String::from("ROWS\n");
    for r in rows {
        let title = titles.iter().find(|(id, _)| *id == r.rubric_id).map(|(_, t)| t.as_str()).unwrap_or("");
        let self_eval = r.self_eval_echo.map(|l| l.as_str()).unwrap_or("NOT_ANSWERED");
        let _ = writeln!(
            out,
            "- rubric {} | {title} | level={} | score={} | self={self_eval}",
            r.rubric_id,
            r.level.as_str(),
            r.score
        );
        let _ = writeln!(out, "  rationale: {}", one_line(&r.rationale));
    }
    let _ = write!(out, "\nOVERALL_SCORE: {overall_score}");
    out
}
