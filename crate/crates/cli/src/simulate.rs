//! Seeded synthetic cohorts: persona-driven learners play the scenario
//! through the real grader and store, then every session is finalized and
//! synthesized. The output is generated data for exercising the analytics.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use regex::Regex;
use rubricflow_core::analytics::{AnalyticsError, CohortMatrix, ExpertScores};
use rubricflow_core::block::{serialize_program, Expr};
use rubricflow_core::grading::{GraderConfig, GradingError};
use rubricflow_core::rubric::{synthesize_session, RubricError, SynthesisConfig};
use rubricflow_core::scenario::QuestionKind;
use rubricflow_core::{
    AnswerStatus, Grader, LlmClient, OverallReport, Scenario, Segment, SegmentId, SelfCheck, Store, StoreError,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// First timestamp of every simulated cohort.
pub fn epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 11, 4, 9, 0, 0).unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Persona {
    High,
    Mid,
    Low,
    Erratic,
}

impl Persona {
    pub const ALL: [Persona; 4] = [Persona::High, Persona::Mid, Persona::Low, Persona::Erratic];

    pub fn as_str(self) -> &'static str {
        match self {
            Persona::High => "high",
            Persona::Mid => "mid",
            Persona::Low => "low",
            Persona::Erratic => "erratic",
        }
    }
}

impl fmt::Display for Persona {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("grading failed: {0}")]
    Grading(#[from] GradingError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Rubric(#[from] RubricError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How many learners of each persona to simulate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaConfig {
    pub high: usize,
    pub mid: usize,
    pub low: usize,
    pub erratic: usize,
    pub seed: u64,
    pub scenario_id: String,
}

impl PersonaConfig {
    /// `n` learners split as evenly as possible, remainder to the earlier
    /// personas.
    pub fn even(n: usize, seed: u64, scenario_id: &str) -> PersonaConfig {
        let share = |i: usize| n / 4 + usize::from(i < n % 4);
        PersonaConfig {
            high: share(0),
            mid: share(1),
            low: share(2),
            erratic: share(3),
            seed,
            scenario_id: scenario_id.to_string(),
        }
    }

    pub fn size(&self) -> usize {
        self.high + self.mid + self.low + self.erratic
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.size() < 2 {
            return Err(SimError::Config(format!(
                "cohort size {} is below 2; the analytics need at least two learners",
                self.size()
            )));
        }
        Ok(())
    }

    /// Persona of every learner, in learner order.
    pub fn roster(&self) -> Vec<Persona> {
        let counts = [self.high, self.mid, self.low, self.erratic];
        Persona::ALL.iter().zip(counts).flat_map(|(p, c)| std::iter::repeat_n(*p, c)).collect()
    }
}

/// `high,mid,low,erratic` counts, e.g. `12,12,10,8`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mix(pub [usize; 4]);

impl FromStr for Mix {
    type Err = String;

    fn from_str(s: &str) -> Result<Mix, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(format!("expected four comma-separated counts (high,mid,low,erratic), got {s:?}"));
        }
        let mut out = [0; 4];
        for (slot, p) in out.iter_mut().zip(parts) {
            *slot = p.parse().map_err(|_| format!("{p:?} is not a count"))?;
        }
        Ok(Mix(out))
    }
}

/// What a learner does on one segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Plan {
    Skip,
    SolveAt(u32),
    Fail,
}

fn draw(rng: &mut ChaCha8Rng, weights: &[(Plan, f64)]) -> Plan {
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    let mut x = rng.random::<f64>() * total;
    for (plan, w) in weights {
        if x < *w {
            return *plan;
        }
        x -= w;
    }
    weights.last().expect("non-empty weights").0
}

fn plan_for(persona: Persona, keystone: bool, rng: &mut ChaCha8Rng) -> Plan {
    use Plan::*;
    match persona {
        Persona::High => draw(rng, &[(SolveAt(1), 0.85), (SolveAt(2), 0.15)]),
        Persona::Mid => {
            draw(rng, &[(SolveAt(1), 0.35), (SolveAt(2), 0.3), (SolveAt(3), 0.2), (SolveAt(4), 0.1), (Fail, 0.05)])
        }
        Persona::Low if keystone => Fail,
        Persona::Low => {
            draw(rng, &[(SolveAt(1), 0.1), (SolveAt(2), 0.2), (SolveAt(3), 0.2), (SolveAt(4), 0.2), (Fail, 0.3)])
        }
        Persona::Erratic => draw(rng, &[(SolveAt(1), 0.5), (Skip, 0.2), (Fail, 0.3)]),
    }
}

fn likert_for(persona: Persona, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let (lo, hi) = match persona {
        Persona::High => (4, 5),
        Persona::Mid => (3, 4),
        Persona::Low => (1, 3),
        Persona::Erratic => (1, 5),
    };
    (0..5).map(|_| rng.random_range(lo..=hi)).collect()
}

fn reflection_for(persona: Persona) -> &'static str {
    match persona {
        Persona::High => "I can write x(x+1) = n and let the blocks compute the positive root for any target.",
        Persona::Mid => "Setting up x(x+1) = n was clear, but I needed hints to build the formula in blocks.",
        Persona::Low => "I found it hard to connect the equation with the block program.",
        Persona::Erratic => "Some steps were easy and others I skipped because the blocks were confusing.",
    }
}

/// Correct and incorrect answers for every gradable segment.
#[derive(Debug, Clone)]
pub struct AnswerBook {
    correct: BTreeMap<SegmentId, String>,
    wrong: BTreeMap<SegmentId, Vec<String>>,
}

fn with_sign_flipped(e: &Expr) -> Option<Expr> {
    match e {
        Expr::Add(l, r) => Some(Expr::Sub(l.clone(), r.clone())),
        Expr::Sub(l, r) | Expr::Mul(l, r) | Expr::Div(l, r) => {
            let rebuild = |nl: Expr, nr: Expr| match e {
                Expr::Sub(..) => Expr::Sub(Box::new(nl), Box::new(nr)),
                Expr::Mul(..) => Expr::Mul(Box::new(nl), Box::new(nr)),
                _ => Expr::Div(Box::new(nl), Box::new(nr)),
            };
            with_sign_flipped(l)
                .map(|nl| rebuild(nl, (**r).clone()))
                .or_else(|| with_sign_flipped(r).map(|nr| rebuild((**l).clone(), nr)))
        }
        Expr::Sqrt(a) => with_sign_flipped(a).map(Expr::sqrt),
        Expr::Num(_) | Expr::Var(_) | Expr::Slot(_) => None,
    }
}

fn without_sqrt(e: &Expr) -> Expr {
    match e {
        Expr::Sqrt(a) => without_sqrt(a),
        Expr::Add(l, r) => Expr::add(without_sqrt(l), without_sqrt(r)),
        Expr::Sub(l, r) => Expr::sub(without_sqrt(l), without_sqrt(r)),
        Expr::Mul(l, r) => Expr::mul(without_sqrt(l), without_sqrt(r)),
        Expr::Div(l, r) => Expr::div(without_sqrt(l), without_sqrt(r)),
        other => other.clone(),
    }
}

impl AnswerBook {
    pub fn new(s: &Scenario) -> AnswerBook {
        let digits = Regex::new(r"[0-9]+").expect("static regex");
        let mut correct = BTreeMap::new();
        let mut wrong = BTreeMap::new();
        for seg in s.gradable_segments() {
            let q = &seg.question;
            let (right, bad) = match q.kind {
                QuestionKind::Closed => {
                    let key = q.closed_key.as_ref().map(|k| k.accepted[0].clone()).unwrap_or_default();
                    let bumped = digits
                        .find(&key)
                        .and_then(|m| m.as_str().parse::<u64>().ok().map(|v| (m.range(), v)))
                        .map(|(range, v)| format!("{}{}{}", &key[..range.start], v + 1, &key[range.end..]));
                    let mut bad: Vec<String> = bumped.into_iter().collect();
                    bad.push("I am not sure".to_string());
                    (key, bad)
                }
                QuestionKind::Block => {
                    let Some(t) = q.block_template_ref.as_deref().and_then(|id| s.template(id)) else { continue };
                    let Some(reference) = t.reference_program() else { continue };
                    let zeros = t.solutions.keys().map(|k| (k.clone(), Expr::num(0.0))).collect();
                    let mut bad = vec![serialize_program(&t.fill(&zeros))];
                    let flipped: BTreeMap<_, _> = t
                        .solutions
                        .iter()
                        .map(|(k, e)| {
                            (k.clone(), with_sign_flipped(e).unwrap_or_else(|| Expr::mul(Expr::num(2.0), e.clone())))
                        })
                        .collect();
                    bad.push(serialize_program(&t.fill(&flipped)));
                    let bare = t
                        .solutions
                        .iter()
                        .map(|(k, e)| {
                            let b = without_sqrt(e);
                            let b = if b == *e { Expr::add(b, Expr::num(1.0)) } else { b };
                            (k.clone(), b)
                        })
                        .collect();
                    bad.push(serialize_program(&t.fill(&bare)));
                    (serialize_program(&reference), bad)
                }
                QuestionKind::Open => {
                    let pick = |label| q.exemplars.iter().find(|e| e.label == label).map(|e| e.text.clone());
                    let right = pick(AnswerStatus::Correct).unwrap_or_default();
                    let mut bad: Vec<String> = pick(AnswerStatus::Incorrect).into_iter().collect();
                    bad.push("I don't know.".to_string());
                    (right, bad)
                }
                QuestionKind::SelfCheck => continue,
            };
            correct.insert(seg.id.clone(), right);
            wrong.insert(seg.id.clone(), bad);
        }
        AnswerBook { correct, wrong }
    }

    pub fn correct(&self, seg: &SegmentId) -> Option<&str> {
        self.correct.get(seg).map(String::as_str)
    }

    /// The wrong answer used on attempt `attempt` (1-based), cycling.
    pub fn wrong(&self, seg: &SegmentId, attempt: u32) -> Option<&str> {
        let all = self.wrong.get(seg)?;
        all.get((attempt as usize - 1) % all.len()).map(String::as_str)
    }
}

/// A simulated cohort: the store holding every finalized session plus
/// derived tables.
pub struct Simulation {
    pub config: PersonaConfig,
    pub store: Store,
    pub session_ids: Vec<String>,
    pub personas: Vec<Persona>,
    pub reports: Vec<OverallReport>,
    pub cohort: CohortMatrix,
    /// Synthetic expert ratings: the model's rubric scores shifted down by
    /// about five points with noise.
    pub expert: ExpertScores,
}

pub fn session_id(seed: u64, i: usize) -> String {
    format!("sim{seed}-{:03}", i + 1)
}

#[allow(clippy::too_many_arguments)]
fn play_learner(
    store: &Store,
    s: &Scenario,
    grader: &Grader,
    book: &AnswerBook,
    id: &str,
    persona: Persona,
    start: DateTime<Utc>,
    rng: &mut ChaCha8Rng,
) -> Result<DateTime<Utc>, SimError> {
    let mut now = start;
    let mut tick = || {
        now += Duration::seconds(45);
        now
    };
    store.open_session(id, &s.id, &format!("learner-{}", &id[id.len() - 3..]), start)?;
    for seg in s.gradable_segments() {
        let plan = plan_for(persona, s.is_keystone(&seg.id), rng);
        let last = match plan {
            Plan::Skip => continue,
            Plan::SolveAt(k) => k.min(seg.question.max_attempts),
            Plan::Fail => seg.question.max_attempts,
        };
        for attempt in 1..=last {
            let answer =
                if plan == Plan::SolveAt(attempt) { book.correct(&seg.id) } else { book.wrong(&seg.id, attempt) };
            let Some(answer) = answer else { break };
            let prior = store.prior_attempts(id, &seg.id)?;
            let out = grader.grade_submission(id, seg.id.as_str(), answer, attempt, prior, tick())?;
            let solved = out.record.answer_status == AnswerStatus::Correct;
            store.append_submission(out.record, out.feedback)?;
            store.append_evaluation(out.evaluation)?;
            if solved {
                break;
            }
        }
    }
    let selfcheck = SelfCheck { likert: likert_for(persona, rng), reflection: reflection_for(persona).to_string() };
    store.record_selfcheck(id, selfcheck)?;
    let end = tick();
    store.finalize(id, end)?;
    Ok(end)
}

fn segment_order(s: &Scenario) -> Vec<&Segment> {
    s.gradable_segments().collect()
}

/// Runs the whole cohort. Deterministic in (`config`, scenario, model
/// behaviour).
pub fn simulate(
    config: &PersonaConfig,
    scenario: Arc<Scenario>,
    llm: Arc<dyn LlmClient>,
) -> Result<Simulation, SimError> {
    config.validate()?;
    if config.scenario_id != scenario.id {
        return Err(SimError::Config(format!(
            "config names scenario {} but {} was loaded",
            config.scenario_id, scenario.id
        )));
    }
    if segment_order(&scenario).is_empty() {
        return Err(SimError::Config(format!("scenario {} has no gradable segments", scenario.id)));
    }
    let store = Store::in_memory();
    store.register_scenario(&scenario);
    let grader = Grader::new(scenario.clone(), llm.clone(), GraderConfig::default());
    let synth = SynthesisConfig { max_in_flight: 1, ..SynthesisConfig::default() };
    let book = AnswerBook::new(&scenario);
    let personas = config.roster();

    let mut session_ids = Vec::with_capacity(personas.len());
    let mut reports = Vec::with_capacity(personas.len());
    for (i, persona) in personas.iter().enumerate() {
        let id = session_id(config.seed, i);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64));
        let start = epoch() + Duration::minutes(30 * i as i64);
        play_learner(&store, &scenario, &grader, &book, &id, *persona, start, &mut rng)?;
        reports.push(synthesize_session(&store, &scenario, &id, llm.as_ref(), &synth)?);
        session_ids.push(id);
    }

    let cohort = CohortMatrix::from_store(&store, &scenario, &session_ids)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED_E8E8);
    let noise = Normal::new(-5.0, 8.0).expect("finite parameters");
    let expert = ExpertScores {
        rows: cohort
            .rows
            .iter()
            .map(|r| {
                let scores =
                    r.rubric_scores.iter().map(|v| (v + noise.sample(&mut rng)).clamp(0.0, 100.0).round()).collect();
                (r.learner.clone(), scores)
            })
            .collect(),
    };
    Ok(Simulation { config: config.clone(), store, session_ids, personas, reports, cohort, expert })
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    config: &'a PersonaConfig,
    learners: Vec<ManifestRow<'a>>,
}

#[derive(Debug, Serialize)]
struct ManifestRow<'a> {
    session_id: &'a str,
    persona: Persona,
    overall_score: u32,
}

impl Simulation {
    /// Every session export, concatenated in learner order.
    pub fn sessions_jsonl(&self) -> Result<String, StoreError> {
        let mut out = String::new();
        for id in &self.session_ids {
            out.push_str(&self.store.export_session(id)?);
        }
        Ok(out)
    }

    /// Writes `sessions.jsonl`, `cohort.csv`, `expert_scores.csv`,
    /// `simulation.json` and `reports/<session>.json` under `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), SimError> {
        std::fs::create_dir_all(dir.join("reports"))?;
        std::fs::write(dir.join("sessions.jsonl"), self.sessions_jsonl()?)?;
        std::fs::write(dir.join("cohort.csv"), self.cohort.to_csv())?;
        std::fs::write(dir.join("expert_scores.csv"), self.expert.to_csv())?;
        for r in &self.reports {
            let mut text = serde_json::to_string_pretty(r).expect("report serializes");
            text.push('\n');
            std::fs::write(dir.join("reports").join(format!("{}.json", r.session_id)), text)?;
        }
        let manifest = Manifest {
            config: &self.config,
            learners: self
                .session_ids
                .iter()
                .zip(&self.personas)
                .zip(&self.reports)
                .map(|((id, p), r)| ManifestRow { session_id: id, persona: *p, overall_score: r.overall_score })
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        std::fs::write(dir.join("simulation.json"), text)?;
        Ok(())
    }
}
