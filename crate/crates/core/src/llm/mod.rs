//! The language-model boundary: a request/response contract, a helper for
//! reading structured replies, and a deterministic stub for tests and
//! offline runs.

mod stub;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use stub::{StubLlm, StubMode};

/// Schema ids for the structured documents the engine asks for.
pub const OPEN_SCHEMA: &str = "open_correctness.v1";
pub const RUBRIC_SCHEMA: &str = "rubric_judgment.v1";
pub const OVERALL_SCHEMA: &str = "overall_narrative.v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub model_id: String,
    pub system_text: String,
    pub user_text: String,
    pub schema_id: String,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("client misconfigured: {0}")]
    Config(String),
}

/// Anything that turns a request into raw model text. Implementations must
/// be callable from several threads at once.
pub trait LlmClient: Send + Sync {
    fn complete(&self, req: &LlmRequest) -> Result<String, LlmError>;
}

impl<T: LlmClient + ?Sized> LlmClient for std::sync::Arc<T> {
    fn complete(&self, req: &LlmRequest) -> Result<String, LlmError> {
        (**self).complete(req)
    }
}

/// Reads a JSON object out of raw model text, tolerating surrounding prose
/// and Markdown code fences.
pub fn parse_structured<T: DeserializeOwned>(raw: &str) -> Result<T, String> {
    let start = raw.find('{').ok_or("no JSON object in output")?;
    let end = raw.rfind('}').ok_or("no JSON object in output")?;
    if end < start {
        return Err("no JSON object in output".to_string());
    }
    serde_json::from_str(&raw[start..=end]).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Deserialize, PartialEq)]
    #[serde(deny_unknown_fields)]
    struct Doc {
        a: u32,
    }

    #[test]
    fn structured_parsing() {
        assert_eq!(parse_structured::<Doc>(r#"{"a": 3}"#), Ok(Doc { a: 3 }));
        assert_eq!(parse_structured::<Doc>("```json\n{\"a\": 3}\n```"), Ok(Doc { a: 3 }));
        assert!(parse_structured::<Doc>("nothing here").is_err());
        assert!(parse_structured::<Doc>(r#"{"a": 3, "b": 1}"#).is_err());
        assert!(parse_structured::<Doc>("} {").is_err());
    }
}
