use std::collections::{BTreeSet, VecDeque};
use std::path::Path;
use std::sync::Mutex;

use serde_json::{json, Value};

use super::{LlmClient, LlmError, LlmRequest, OPEN_SCHEMA, OVERALL_SCHEMA, RUBRIC_SCHEMA};
use crate::rubric::{credit_twentieths, level_for_score, score_from_credits, BandConfig};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StubMode {
    /// Returns the responses in order, repeating the last one.
    Scripted(Vec<String>),
    /// Always returns text that is not a JSON document.
    Malformed,
    /// Always fails as if the endpoint were unreachable.
    Offline,
    /// Reads the prompt and answers from its content: nearest exemplar for
    /// open answers, the credit schedule for rubric judgments.
    Heuristic,
}

/// Deterministic offline model.
#[derive(Debug)]
pub struct StubLlm {
    mode: StubMode,
    cursor: Mutex<usize>,
    calls: Mutex<VecDeque<LlmRequest>>,
}

/// Requests kept for [`StubLlm::requests`]; older ones are dropped.
const KEPT_REQUESTS: usize = 4096;

impl StubLlm {
    pub fn new(mode: StubMode) -> StubLlm {
        StubLlm { mode, cursor: Mutex::new(0), calls: Mutex::new(VecDeque::new()) }
    }

    pub fn scripted<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> StubLlm {
        StubLlm::new(StubMode::Scripted(responses.into_iter().map(Into::into).collect()))
    }

    pub fn malformed() -> StubLlm {
        StubLlm::new(StubMode::Malformed)
    }

    pub fn heuristic() -> StubLlm {
        StubLlm::new(StubMode::Heuristic)
    }

    /// Builds a stub from a `stub:` URL: `stub:heuristic`, `stub:malformed`,
    /// `stub:offline`, or `stub:<path>` naming a JSON array of responses.
    /// Array elements that are not strings are passed on as their JSON text.
    pub fn from_url(url: &str) -> Result<StubLlm, LlmError> {
        let rest = url.strip_prefix("stub:").ok_or_else(|| LlmError::Config(format!("{url:?} is not a stub: URL")))?;
        match rest {
            "heuristic" | "" => Ok(StubLlm::heuristic()),
            "malformed" => Ok(StubLlm::malformed()),
            "offline" => Ok(StubLlm::new(StubMode::Offline)),
            path => {
                let text = std::fs::read_to_string(Path::new(path))
                    .map_err(|e| LlmError::Config(format!("cannot read {path}: {e}")))?;
                let items: Vec<Value> =
                    serde_json::from_str(&text).map_err(|e| LlmError::Config(format!("{path}: {e}")))?;
                if items.is_empty() {
                    return Err(LlmError::Config(format!("{path}: no scripted responses")));
                }
                Ok(StubLlm::scripted(items.into_iter().map(|v| match v {
                    Value::String(s) => s,
                    other => other.to_string(),
                })))
            }
        }
    }

    /// Requests received so far, oldest first (at most the last 4096).
    pub fn requests(&self) -> Vec<LlmRequest> {
        self.calls.lock().expect("stub lock").iter().cloned().collect()
    }
}

impl LlmClient for StubLlm {
    fn complete(&self, req: &LlmRequest) -> Result<String, LlmError> {
        {
            let mut calls = self.calls.lock().expect("stub lock");
            if calls.len() == KEPT_REQUESTS {
                calls.pop_front();
            }
            calls.push_back(req.clone());
        }
        match &self.mode {
            StubMode::Scripted(responses) => {
                let mut cursor = self.cursor.lock().expect("stub lock");
                let i = (*cursor).min(responses.len().saturating_sub(1));
                *cursor += 1;
                responses.get(i).cloned().ok_or_else(|| LlmError::Config("empty script".to_string()))
            }
            StubMode::Malformed => Ok("I think this answer is mostly fine.".to_string()),
            StubMode::Offline => Err(LlmError::Transport("stub endpoint offline".to_string())),
            StubMode::Heuristic => Ok(heuristic(req)),
        }
    }
}

fn heuristic(req: &LlmRequest) -> String {
    match req.schema_id.as_str() {
        OPEN_SCHEMA => open_response(&req.user_text),
        RUBRIC_SCHEMA => rubric_response(&req.user_text),
        OVERALL_SCHEMA => overall_response(&req.user_text),
        other => json!({ "error": format!("unknown schema {other}") }).to_string(),
    }
}

/// Splits a prompt into `HEADER` sections: a line consisting solely of an
/// upper-case word starts a new section.
fn sections(text: &str) -> Vec<(&str, Vec<&str>)> {
    let mut out: Vec<(&str, Vec<&str>)> = Vec::new();
    for line in text.lines() {
        let is_header = !line.is_empty() && line.chars().all(|c| c.is_ascii_uppercase() || c == '_');
        if is_header {
            out.push((line, Vec::new()));
        } else if let Some(last) = out.last_mut() {
            last.1.push(line);
        }
    }
    out
}

fn tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric() && c != '-').filter(|t| !t.is_empty()).map(str::to_lowercase).collect()
}

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        0.0
    } else {
        a.intersection(b).count() as f64 / union as f64
    }
}

fn open_response(user_text: &str) -> String {
    let secs = sections(user_text);
    let body = |name: &str| secs.iter().find(|(h, _)| *h == name).map(|(_, l)| l.clone());
    let answer = body("ANSWER").unwrap_or_default().join("\n");
    let mut exemplars: Vec<(String, Vec<&str>)> = Vec::new();
    for line in body("EXEMPLARS").unwrap_or_default() {
        if let Some(label) = line.strip_prefix('[').and_then(|l| l.split_once("] ")).map(|(_, l)| l) {
            exemplars.push((label.trim().to_string(), Vec::new()));
        } else if let Some(last) = exemplars.last_mut() {
            last.1.push(line);
        }
    }
    let answer_tokens = tokens(&answer);
    let mut best: Option<(usize, f64)> = None;
    for (i, (_, lines)) in exemplars.iter().enumerate() {
        let sim = jaccard(&answer_tokens, &tokens(&lines.join(" ")));
        if best.is_none_or(|(_, s)| sim > s) {
            best = Some((i, sim));
        }
    }
    match best {
        _ if answer_tokens.is_empty() => json!({ "verdict": "Incorrect", "rationale": "no answer given" }).to_string(),
        Some((i, sim)) if sim > 0.0 => json!({
            "verdict": exemplars[i].0,
            "rationale": format!("closest to exemplar {} (token overlap {:.2})", i + 1, sim),
        })
        .to_string(),
        _ => json!({ "verdict": "Incorrect", "rationale": "answer shares no terms with any exemplar" }).to_string(),
    }
}

fn field<'a>(parts: &[&'a str], key: &str) -> Option<&'a str> {
    parts.iter().find_map(|p| p.trim().strip_prefix(key)?.strip_prefix('='))
}

fn rubric_response(user_text: &str) -> String {
    let mut bands = BandConfig::default();
    // (segment, attempted, first correct attempt)
    let mut rows: Vec<(String, bool, Option<u32>)> = Vec::new();
    for line in user_text.lines() {
        if let Some(rest) = line.strip_prefix("BANDS:") {
            let nums: Vec<u32> = rest.split(|c: char| !c.is_ascii_digit()).filter_map(|t| t.parse().ok()).collect();
            if let [high, medium] = nums[..] {
                bands = BandConfig { high_min: high, medium_min: medium };
            }
        }
        let Some(rest) = line.strip_prefix("- ") else { continue };
        let parts: Vec<&str> = rest.split('|').collect();
        let seg = parts[0].trim().to_string();
        if parts.iter().any(|p| p.trim() == "selfcheck") {
            continue;
        }
        if parts.iter().any(|p| p.trim() == "unattempted") {
            rows.push((seg, false, None));
            continue;
        }
        let first = field(&parts, "first_correct").and_then(|v| v.parse().ok());
        rows.push((seg, true, first));
    }
    let credits: Vec<u32> = rows.iter().map(|(_, _, f)| credit_twentieths(*f)).collect();
    let score = score_from_credits(&credits);
    let level = level_for_score(score, &bands);
    let attempted: Vec<(&String, Option<u32>, u32)> =
        rows.iter().zip(&credits).filter(|((_, a, _), _)| *a).map(|((s, _, f), c)| (s, *f, *c)).collect();
    let sentences: Vec<String> = attempted
        .iter()
        .map(|(seg, f, _)| match f {
            Some(1) => format!("{seg} was solved on the first attempt."),
            Some(a) => format!("{seg} was solved on attempt {a}."),
            None => format!("{seg} was not solved."),
        })
        .collect();
    let weakest = attempted.iter().min_by_key(|(_, _, c)| *c);
    let recommendation = match weakest {
        Some((seg, _, c)) if *c < 20 => format!("Revisit the work in {seg}."),
        _ if rows.len() > attempted.len() => "Complete the remaining tasks.".to_string(),
        _ => "Try a harder target to extend the method.".to_string(),
    };
    json!({
        "level": level,
        "score": score,
        "rationale": sentences.join(" "),
        "recommendation": recommendation,
    })
    .to_string()
}

fn overall_response(user_text: &str) -> String {
    let mut rows: Vec<(String, String)> = Vec::new();
    let mut overall = String::new();
    for line in user_text.lines() {
        if let Some(v) = line.strip_prefix("OVERALL_SCORE:") {
            overall = v.trim().to_string();
        }
        let Some(rest) = line.strip_prefix("- ") else { continue };
        let parts: Vec<&str> = rest.split('|').map(str::trim).collect();
        if parts.len() >= 3 {
            let level = field(&parts, "level").unwrap_or("?").to_string();
            rows.push((parts[1].to_string(), level));
        }
    }
    let strong: Vec<&str> = rows.iter().filter(|(_, l)| l == "High").map(|(t, _)| t.as_str()).collect();
    let weak: Vec<&str> = rows.iter().filter(|(_, l)| l == "Low").map(|(t, _)| t.as_str()).collect();
    let content = format!("{} rubric judgments combined into an overall score of {overall}.", rows.len());
    let result = match (strong.is_empty(), weak.is_empty()) {
        (false, true) => format!("Strong across the board, especially {}.", strong.join(", ")),
        (_, false) => format!("Needs support in {}.", weak.join(", ")),
        (true, true) => "Solid, with room to grow in every area.".to_string(),
    };
    let recommendations = if weak.is_empty() {
        "Extend the method to larger targets.".to_string()
    } else {
        format!("Focus next on {}.", weak.join(", "))
    };
    json!({
        "evaluation_content": content,
        "evaluation_result": result,
        "recommendations": recommendations,
    })
    .to_string()
}
