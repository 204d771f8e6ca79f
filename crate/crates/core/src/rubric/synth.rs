use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, OnceLock};

use log::warn;
use regex::Regex;
use serde::Deserialize;

use super::prompt::{OVERALL_SYSTEM, RUBRIC_SYSTEM};
use super::{
    collect_evidence, level_for_score, overall_prompt, rubric_prompt, BandConfig, EvidenceBundle, Level, OverallReport,
    RubricError, RubricEvaluation, PROMPT_VERSION,
};
use crate::llm::{parse_structured, LlmClient, LlmRequest, OVERALL_SCHEMA, RUBRIC_SCHEMA};
use crate::scenario::Scenario;
use crate::store::Store;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthesisConfig {
    pub model_id: String,
    pub bands: BandConfig,
    /// Extra calls after the first when output fails validation.
    pub max_retries: u32,
    /// Rubric judgments of one session requested concurrently.
    pub max_in_flight: usize,
    pub max_tokens: u32,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            model_id: "default".to_string(),
            bands: BandConfig::default(),
            max_retries: 2,
            max_in_flight: 2,
            max_tokens: 600,
        }
    }
}

fn citation_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| Regex::new(r"Seg [0-9]+-[0-9]+").expect("static regex"))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JudgmentDoc {
    level: String,
    score: i64,
    rationale: String,
    recommendation: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NarrativeDoc {
    evaluation_content: String,
    evaluation_result: String,
    recommendations: String,
}

/// Parses and checks a judgment document against a bundle. Cited segments
/// must be in the bundle and have a stored submission.
pub fn validate_judgment(
    raw: &str,
    b: &EvidenceBundle,
    bands: &BandConfig,
) -> Result<(Level, u32, String, String), String> {
    let doc: JudgmentDoc = parse_structured(raw)?;
    let level = Level::parse(&doc.level).ok_or_else(|| format!("unknown level {:?}", doc.level))?;
    if !(0..=100).contains(&doc.score) {
        return Err(format!("score {} is outside 0..100", doc.score));
    }
    let score = doc.score as u32;
    if level_for_score(score, bands) != level {
        return Err(format!("score {score} is not in the {} band", level.as_str()));
    }
    let cited: Vec<&str> = citation_pattern().find_iter(&doc.rationale).map(|m| m.as_str()).collect();
    if cited.is_empty() {
        return Err("rationale cites no segment".to_string());
    }
    for c in &cited {
        match b.segments.iter().find(|s| s.segment_id.as_str() == *c) {
            None => return Err(format!("rationale cites {c}, which is not in the evidence")),
            Some(s) if s.is_unattempted() && s.is_gradable() => {
                return Err(format!("rationale cites {c}, which has no submission"))
            }
            Some(_) => {}
        }
    }
    if doc.recommendation.trim().is_empty() {
        return Err("recommendation is empty".to_string());
    }
    Ok((level, score, doc.rationale.trim().to_string(), doc.recommendation.trim().to_string()))
}

/// Deterministic evaluation from the credit schedule. The rationale is
/// tagged `[fallback]` and cites the weakest attempted segment.
pub fn fallback_evaluation(b: &EvidenceBundle, bands: &BandConfig) -> RubricEvaluation {
    let score = b.score_from_evidence();
    let level = level_for_score(score, bands);
    let graded: Vec<_> = b.segments.iter().filter(|s| s.is_gradable()).collect();
    let weakest = graded.iter().filter(|s| !s.is_unattempted()).min_by_key(|s| s.credit()).copied();
    let rationale = match weakest {
        Some(s) => {
            let how = match s.first_correct {
                Some(1) => "solved on the first attempt".to_string(),
                Some(a) => format!("solved on attempt {a}"),
                None => "not solved".to_string(),
            };
            format!(
                "[fallback] The credit schedule over {} graded segment(s) gives {score}. Weakest evidence: {} ({how}).",
                graded.len(),
                s.segment_id
            )
        }
        None => {
            let first =
                graded.first().copied().or(b.segments.first()).map(|s| s.segment_id.to_string()).unwrap_or_default();
            format!("[fallback] No graded segment of this rubric was attempted, starting with {first}.")
        }
    };
    let target = weakest.map(|s| s.segment_id.to_string()).unwrap_or_else(|| "the unattempted tasks".to_string());
    let recommendation = match level {
        Level::High => "Extend the method to harder targets.".to_string(),
        Level::Medium => format!("Revisit {target} and rework the steps that needed hints."),
        Level::Low => format!("Work through {target} again with the hints before moving on."),
    };
    RubricEvaluation {
        session_id: b.session_id.clone(),
        rubric_id: b.rubric.id,
        level,
        score,
        rationale,
        recommendation,
        self_eval_echo: b.self_eval_label(),
        prompt_version: PROMPT_VERSION.to_string(),
        fallback: true,
    }
}

pub fn synthesize_rubric(b: &EvidenceBundle, llm: &dyn LlmClient, cfg: &SynthesisConfig) -> RubricEvaluation {
    let req = LlmRequest {
        model_id: cfg.model_id.clone(),
        system_text: RUBRIC_SYSTEM.to_string(),
        user_text: rubric_prompt(b, &cfg.bands),
        schema_id: RUBRIC_SCHEMA.to_string(),
        max_tokens: cfg.max_tokens,
    };
    for call in 0..=cfg.max_retries {
        let outcome =
            llm.complete(&req).map_err(|e| e.to_string()).and_then(|raw| validate_judgment(&raw, b, &cfg.bands));
        match outcome {
            Ok((level, score, rationale, recommendation)) => {
                return RubricEvaluation {
                    session_id: b.session_id.clone(),
                    rubric_id: b.rubric.id,
                    level,
                    score,
                    rationale,
                    recommendation,
                    self_eval_echo: b.self_eval_label(),
                    prompt_version: PROMPT_VERSION.to_string(),
                    fallback: false,
                }
            }
            Err(e) => warn!("session {} rubric {} call {call}: {e}", b.session_id, b.rubric.id),
        }
    }
    fallback_evaluation(b, &cfg.bands)
}

/// Rounded mean of rubric scores, halves rounded up.
pub fn overall_score(rows: &[RubricEvaluation]) -> u32 {
    let n = rows.len() as u64;
    if n == 0 {
        return 0;
    }
    let sum: u64 = rows.iter().map(|r| r.score as u64).sum();
    ((2 * sum + n) / (2 * n)) as u32
}

/// Combines rubric rows into the session report. `titles` maps rubric ids
/// to display titles.
pub fn overall_report(
    session_id: &str,
    mut rows: Vec<RubricEvaluation>,
    titles: &[(u32, String)],
    llm: &dyn LlmClient,
    cfg: &SynthesisConfig,
) -> OverallReport {
    rows.sort_by_key(|r| r.rubric_id);
    let score = overall_score(&rows);
    let req = LlmRequest {
        model_id: cfg.model_id.clone(),
        system_text: OVERALL_SYSTEM.to_string(),
        user_text: overall_prompt(&rows, titles, score),
        schema_id: OVERALL_SCHEMA.to_string(),
        max_tokens: cfg.max_tokens,
    };
    for call in 0..=cfg.max_retries {
        let outcome = llm.complete(&req).map_err(|e| e.to_string()).and_then(|raw| {
            let doc: NarrativeDoc = parse_structured(&raw)?;
            let fields = [&doc.evaluation_content, &doc.evaluation_result, &doc.recommendations];
            if fields.iter().any(|f| f.trim().is_empty()) {
                return Err("empty narrative field".to_string());
            }
            Ok(doc)
        });
        match outcome {
            Ok(doc) => {
                return OverallReport {
                    session_id: session_id.to_string(),
                    overall_score: score,
                    evaluation_content: doc.evaluation_content.trim().to_string(),
                    evaluation_result: doc.evaluation_result.trim().to_string(),
                    recommendations: doc.recommendations.trim().to_string(),
                    rubric_rows: rows,
                    fallback: false,
                }
            }
            Err(e) => warn!("session {session_id} overall call {call}: {e}"),
        }
    }
    fallback_report(session_id, rows, titles, score)
}

fn fallback_report(
    session_id: &str,
    rows: Vec<RubricEvaluation>,
    titles: &[(u32, String)],
    score: u32,
) -> OverallReport {
    let title = |id: u32| {
        titles.iter().find(|(t, _)| *t == id).map(|(_, s)| s.clone()).unwrap_or_else(|| format!("rubric {id}"))
    };
    let result = rows
        .iter()
        .map(|r| format!("{}: {} ({})", title(r.rubric_id), r.level.as_str(), r.score))
        .collect::<Vec<_>>()
        .join("; ");
    let recommendations =
        rows.iter().min_by_key(|r| (r.score, r.rubric_id)).map(|r| r.recommendation.clone()).unwrap_or_default();
    OverallReport {
        session_id: session_id.to_string(),
        overall_score: score,
        evaluation_content: format!("[fallback] Overall score {score} is the mean of {} rubric scores.", rows.len()),
        evaluation_result: result,
        recommendations,
        rubric_rows: rows,
        fallback: true,
    }
}

/// Collects evidence for every rubric of a finalized session, synthesizes
/// the judgments with at most `cfg.max_in_flight` concurrent model calls,
/// stores the evaluations and the report, and returns the report. A session
/// that already has a report returns it unchanged.
pub fn synthesize_session(
    store: &Store,
    scenario: &Scenario,
    session_id: &str,
    llm: &dyn LlmClient,
    cfg: &SynthesisConfig,
) -> Result<OverallReport, RubricError> {
    if let Some(report) = store.report(session_id)? {
        return Ok(report);
    }
    let existing = store.rubric_evaluations(session_id)?;
    let mut bundles = Vec::new();
    for r in &scenario.rubrics {
        if !existing.iter().any(|e| e.rubric_id == r.id) {
            bundles.push(collect_evidence(store, scenario, session_id, r.id)?);
        }
    }

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<RubricEvaluation>>> = Mutex::new(vec![None; bundles.len()]);
    let workers = cfg.max_in_flight.max(1).min(bundles.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(b) = bundles.get(i) else { break };
                let eval = synthesize_rubric(b, llm, cfg);
                results.lock().expect("results lock")[i] = Some(eval);
            });
        }
    });

    let mut rows = existing;
    for eval in results.into_inner().expect("results lock").into_iter().flatten() {
        store.append_rubric_evaluation(eval.clone())?;
        rows.push(eval);
    }
    let titles: Vec<(u32, String)> = scenario.rubrics.iter().map(|r| (r.id, r.title.clone())).collect();
    let report = overall_report(session_id, rows, &titles, llm, cfg);
    store.append_report(report.clone())?;
    Ok(report)
}
