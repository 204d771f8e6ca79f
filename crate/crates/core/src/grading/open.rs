use std::fmt::Write as _;

use log::warn;
use serde::Deserialize;

use super::AnswerStatus;
use crate::llm::{parse_structured, LlmClient, LlmError, LlmRequest, OPEN_SCHEMA};
use crate::scenario::OpenExemplar;

pub const UNSCORABLE: &str = "unscorable: malformed evaluator output";

const SYSTEM_TEXT: &str = "You check a learner's answer to a mathematics task by comparing its \
reasoning with expert exemplars. Reply with one JSON object of the form \
{\"verdict\": \"Correct\" or \"Incorrect\", \"rationale\": \"<one sentence>\"} and nothing else.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpenVerdict {
    pub verdict: AnswerStatus,
    pub rationale: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorrectnessDoc {
    verdict: AnswerStatus,
    rationale: String,
}

/// The user prompt: task statement, labelled exemplars, then the answer.
pub fn open_prompt(task: &str, exemplars: &[OpenExemplar], answer: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "TASK\n{}\n", task.trim());
    out.push_str("EXEMPLARS\n");
    for (i, ex) in exemplars.iter().enumerate() {
        let label = match ex.label {
            AnswerStatus::Correct => "Correct",
            AnswerStatus::Incorrect => "Incorrect",
        };
        let _ = writeln!(out, "[{}] {label}\n{}\n", i + 1, ex.text.trim());
    }
    let _ = write!(out, "ANSWER\n{}", answer.trim());
    out
}

/// Grades a free-text answer with one retry on malformed output. Transport
/// failures on both calls surface as an error; any malformed reply ends in
/// an Incorrect verdict marked unscorable.
pub fn grade_open(
    task: &str,
    answer: &str,
    exemplars: &[OpenExemplar],
    llm: &dyn LlmClient,
    model_id: &str,
) -> Result<OpenVerdict, LlmError> {
    let req = LlmRequest {
        model_id: model_id.to_string(),
        system_text: SYSTEM_TEXT.to_string(),
        user_text: open_prompt(task, exemplars, answer),
        schema_id: OPEN_SCHEMA.to_string(),
        max_tokens: 256,
    };
    let mut last_transport = None;
    let mut saw_malformed = false;
    for call in 0..2 {
        match llm.complete(&req) {
            Ok(raw) => match parse_structured::<CorrectnessDoc>(&raw) {
                Ok(doc) if !doc.rationale.trim().is_empty() => {
                    return Ok(OpenVerdict { verdict: doc.verdict, rationale: doc.rationale.trim().to_string() });
                }
                Ok(_) => {
                    warn!("open grading call {call}: empty rationale");
                    saw_malformed = true;
                }
                Err(e) => {
                    warn!("open grading call {call}: {e}");
                    saw_malformed = true;
                }
            },
            Err(e) => {
                warn!("open grading call {call}: {e}");
                last_transport = Some(e);
            }
        }
    }
    match last_transport {
        Some(e) if !saw_malformed => Err(e),
        _ => Ok(OpenVerdict { verdict: AnswerStatus::Incorrect, rationale: UNSCORABLE.to_string() }),
    }
}
