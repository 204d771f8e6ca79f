//! Scenario model: stages, segments, questions and rubric subcategories.
//!
//! A scenario is loaded from a single JSON document. Block templates are kept
//! as separate XML files and attached afterwards (see [`load_scenario_file`]).
//! Once loaded a [`Scenario`] is never mutated.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::block::{BlockError, BlockTemplate};
use crate::grading::{AnswerStatus, ErrorPattern};

const DEFAULT_SCENARIO_JSON: &str = include_str!("../data/consecutive_numbers.json");
const DEFAULT_TEMPLATES: [&str; 4] = [
    include_str!("../data/templates/practice_abc.xml"),
    include_str!("../data/templates/radicand_practice.xml"),
    include_str!("../data/templates/quadratic_easy.xml"),
    include_str!("../data/templates/quadratic_hard.xml"),
];

pub const DEFAULT_MAX_ATTEMPTS: u32 = 4;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("malformed scenario document at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("scenario failed validation: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("unknown rubric {0}")]
    UnknownRubric(u32),
    #[error("block template {path}: {source}")]
    Template { path: String, source: BlockError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn segment_id_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| Regex::new(r"^Seg ([0-9]+)-([0-9]+)$").expect("static regex"))
}

/// Identifier of the form `Seg X-Y`: stage X, position Y.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SegmentId(String);

impl SegmentId {
    pub fn parse(s: &str) -> Result<Self, String> {
        if segment_id_pattern().is_match(s) {
            Ok(SegmentId(s.to_string()))
        } else {
            Err(format!("segment id {s:?} does not match `Seg X-Y`"))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The stage index named in the id.
    pub fn stage(&self) -> u32 {
        self.parts().0
    }

    pub fn position(&self) -> u32 {
        self.parts().1
    }

    fn parts(&self) -> (u32, u32) {
        let caps = segment_id_pattern().captures(&self.0).expect("validated at construction");
        (caps[1].parse().unwrap_or(u32::MAX), caps[2].parse().unwrap_or(u32::MAX))
    }
}

impl TryFrom<String> for SegmentId {
    type Error = String;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        SegmentId::parse(&value)
    }
}

impl From<SegmentId> for String {
    fn from(id: SegmentId) -> String {
        id.0
    }
}

impl fmt::Display for SegmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl PartialEq<&str> for SegmentId {
    fn eq(&self, other: &&str) -> bool {
        self.0 == *other
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RubricDomain {
    KnowledgeUnderstanding,
    ProceduralSkills,
    ValuesAttitudes,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RubricSpec {
    pub id: u32,
    pub domain: RubricDomain,
    pub title: String,
    pub descriptor_high: String,
    pub descriptor_medium: String,
    pub descriptor_low: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QuestionKind {
    Closed,
    Block,
    Open,
    /// Marker for the post-task self-check. Not gradable; its evidence is
    /// the survey itself.
    SelfCheck,
}

impl QuestionKind {
    pub fn is_gradable(self) -> bool {
        !matches!(self, QuestionKind::SelfCheck)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerKey {
    pub accepted: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpenExemplar {
    pub label: AnswerStatus,
    pub text: String,
}

fn default_max_attempts() -> u32 {
    DEFAULT_MAX_ATTEMPTS
}

fn is_default_max_attempts(v: &u32) -> bool {
    *v == DEFAULT_MAX_ATTEMPTS
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub kind: QuestionKind,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_key: Option<AnswerKey>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_template_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exemplars: Vec<OpenExemplar>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub error_patterns: Vec<String>,
    #[serde(default = "default_max_attempts", skip_serializing_if = "is_default_max_attempts")]
    pub max_attempts: u32,
    /// Generic conceptual hint used when no error pattern fires.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub hint: String,
    /// Generic corrective instruction used when no error pattern fires.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub corrective: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub id: SegmentId,
    pub stage: u32,
    pub rubric_ids: Vec<u32>,
    pub question: Question,
}

impl Segment {
    pub fn is_gradable(&self) -> bool {
        self.question.kind.is_gradable()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageDescriptor {
    pub index: u32,
    pub phase: String,
    pub phase_minutes: u32,
    pub activity: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LikertItem {
    pub rubric_id: u32,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelfCheckSpec {
    pub likert_items: Vec<LikertItem>,
    pub reflection_template: String,
}

/// Block templates keyed by id.
pub type TemplateLibrary = BTreeMap<String, BlockTemplate>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub title: String,
    pub stages: Vec<StageDescriptor>,
    pub rubrics: Vec<RubricSpec>,
    pub segments: Vec<Segment>,
    pub keystones: Vec<SegmentId>,
    pub selfcheck: SelfCheckSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub error_patterns: Vec<ErrorPattern>,
    #[serde(skip)]
    templates: Option<TemplateLibrary>,
}

impl Scenario {
    /// Parses and validates a scenario document. Block templates are not
    /// attached; see [`Scenario::with_templates`].
    pub fn from_json_str(document: &str) -> Result<Scenario, ScenarioError> {
        let scenario: Scenario = serde_json::from_str(document).map_err(|e| ScenarioError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let violations = validate_scenario(&scenario);
        if violations.is_empty() {
            Ok(scenario)
        } else {
            Err(ScenarioError::Validation(violations))
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Attaches a template library and re-validates, now including template
    /// references.
    pub fn with_templates(mut self, templates: TemplateLibrary) -> Result<Scenario, ScenarioError> {
        self.templates = Some(templates);
        let violations = validate_scenario(&self);
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(ScenarioError::Validation(violations))
        }
    }

    /// The bundled six-stage consecutive-numbers scenario with its templates.
    pub fn default_scenario() -> Scenario {
        let mut templates = TemplateLibrary::new();
        for xml in DEFAULT_TEMPLATES {
            let t = BlockTemplate::parse(xml).expect("bundled template parses");
            templates.insert(t.id.clone(), t);
        }
        Scenario::from_json_str(DEFAULT_SCENARIO_JSON)
            .and_then(|s| s.with_templates(templates))
            .expect("bundled scenario validates")
    }

    pub fn default_scenario_json() -> &'static str {
        DEFAULT_SCENARIO_JSON
    }

    pub fn templates(&self) -> Option<&TemplateLibrary> {
        self.templates.as_ref()
    }

    pub fn template(&self, id: &str) -> Option<&BlockTemplate> {
        self.templates.as_ref().and_then(|t| t.get(id))
    }

    pub fn segment(&self, id: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.id.as_str() == id)
    }

    pub fn rubric(&self, id: u32) -> Option<&RubricSpec> {
        self.rubrics.iter().find(|r| r.id == id)
    }

    pub fn error_pattern(&self, id: &str) -> Option<&ErrorPattern> {
        self.error_patterns.iter().find(|p| p.id == id)
    }

    pub fn gradable_segments(&self) -> impl Iterator<Item = &Segment> {
        self.segments.iter().filter(|s| s.is_gradable())
    }

    pub fn is_keystone(&self, id: &SegmentId) -> bool {
        self.keystones.contains(id)
    }

    /// The Likert item index aligned with a rubric, if any.
    pub fn selfcheck_item_for(&self, rubric_id: u32) -> Option<usize> {
        self.selfcheck.likert_items.iter().position(|item| item.rubric_id == rubric_id)
    }
}

/// Loads a scenario file and attaches every `*.xml` template found in the
/// sibling `templates/` directory.
pub fn load_scenario_file(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    let scenario = Scenario::from_json_str(&text)?;
    let dir = path.parent().unwrap_or(Path::new(".")).join("templates");
    let mut templates = TemplateLibrary::new();
    if dir.is_dir() {
        let mut entries: Vec<_> = std::fs::read_dir(&dir)?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|e| e == "xml"))
            .collect();
        entries.sort();
        for p in entries {
            let xml = std::fs::read_to_string(&p)?;
            let t = BlockTemplate::parse(&xml)
                .map_err(|source| ScenarioError::Template { path: p.display().to_string(), source })?;
            templates.insert(t.id.clone(), t);
        }
    }
    scenario.with_templates(templates)
}

/// Checks every scenario invariant. Each violation names the offending
/// entity; an empty list means the scenario is valid.
pub fn validate_scenario(s: &Scenario) -> Vec<String> {
    let mut out = Vec::new();

    if s.id.trim().is_empty() {
        out.push("scenario id is empty".to_string());
    }

    let stage_ids: BTreeSet<u32> = s.stages.iter().map(|st| st.index).collect();
    if stage_ids.len() != s.stages.len() {
        out.push("stage indices are not unique".to_string());
    }

    let mut rubric_ids = BTreeSet::new();
    for r in &s.rubrics {
        if !rubric_ids.insert(r.id) {
            out.push(format!("rubric {} defined more than once", r.id));
        }
        for (level, text) in
            [("high", &r.descriptor_high), ("medium", &r.descriptor_medium), ("low", &r.descriptor_low)]
        {
            if text.trim().is_empty() {
                out.push(format!("rubric {} has an empty {level} descriptor", r.id));
            }
        }
    }

    let pattern_ids: BTreeSet<&str> = s.error_patterns.iter().map(|p| p.id.as_str()).collect();
    if pattern_ids.len() != s.error_patterns.len() {
        out.push("error pattern ids are not unique".to_string());
    }
    for p in &s.error_patterns {
        if p.hint_text.trim().is_empty() || p.corrective_text.trim().is_empty() {
            out.push(format!("error pattern {} has an empty text", p.id));
        }
    }

    let mut seen = BTreeSet::new();
    for seg in &s.segments {
        let id = &seg.id;
        if !seen.insert(id.clone()) {
            out.push(format!("segment {id} defined more than once"));
        }
        if seg.stage != id.stage() {
            out.push(format!("segment {id} declares stage {} but its id names stage {}", seg.stage, id.stage()));
        }
        if !stage_ids.contains(&seg.stage) {
            out.push(format!("segment {id} refers to undefined stage {}", seg.stage));
        }
        if seg.rubric_ids.is_empty() {
            out.push(format!("unmapped segment {id}"));
        }
        for r in &seg.rubric_ids {
            if !rubric_ids.contains(r) {
                out.push(format!("segment {id} maps to undefined rubric {r}"));
            }
        }
        validate_question(s, seg, &pattern_ids, &mut out);
    }

    for r in &s.rubrics {
        if !s.segments.iter().any(|seg| seg.rubric_ids.contains(&r.id)) {
            out.push(format!("rubric {} has no evidence source", r.id));
        }
    }

    for k in &s.keystones {
        if !seen.contains(k) {
            out.push(format!("keystone {k} undefined"));
        }
    }

    for (i, item) in s.selfcheck.likert_items.iter().enumerate() {
        if !rubric_ids.contains(&item.rubric_id) {
            out.push(format!("self-check item {} maps to undefined rubric {}", i + 1, item.rubric_id));
        }
        if item.text.trim().is_empty() {
            out.push(format!("self-check item {} is empty", i + 1));
        }
    }

    out
}

fn validate_question(s: &Scenario, seg: &Segment, pattern_ids: &BTreeSet<&str>, out: &mut Vec<String>) {
    let id = &seg.id;
    let q = &seg.question;
    if q.max_attempts < 1 {
        out.push(format!("segment {id} allows zero attempts"));
    }
    let has_key = q.closed_key.is_some();
    let has_template = q.block_template_ref.is_some();
    let has_exemplars = !q.exemplars.is_empty();
    let expected = match q.kind {
        QuestionKind::Closed => (true, false, false),
        QuestionKind::Block => (false, true, false),
        QuestionKind::Open => (false, false, true),
        QuestionKind::SelfCheck => (false, false, false),
    };
    if (has_key, has_template, has_exemplars) != expected {
        out.push(format!("segment {id}: payload does not match question kind {:?}", q.kind));
    }
    if let Some(key) = &q.closed_key {
        if key.accepted.is_empty() {
            out.push(format!("segment {id}: answer key has no accepted form"));
        }
    }
    if q.kind.is_gradable() && (q.hint.trim().is_empty() || q.corrective.trim().is_empty()) {
        out.push(format!("segment {id}: generic hint and corrective texts are required"));
    }
    for p in &q.error_patterns {
        if !pattern_ids.contains(p.as_str()) {
            out.push(format!("segment {id} references undefined error pattern {p}"));
        }
    }
    if let (Some(library), Some(template)) = (&s.templates, &q.block_template_ref) {
        if !library.contains_key(template) {
            out.push(format!("segment {id} references undefined template {template}"));
        }
    }
}

/// Segments mapped to `rubric_id`, in scenario order.
pub fn segments_for_rubric(s: &Scenario, rubric_id: u32) -> Result<Vec<&Segment>, ScenarioError> {
    if s.rubric(rubric_id).is_none() {
        return Err(ScenarioError::UnknownRubric(rubric_id));
    }
    Ok(s.segments.iter().filter(|seg| seg.rubric_ids.contains(&rubric_id)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn minimal_json() -> String {
        r#"{
          "id": "mini",
          "stages": [{"index": 1, "phase": "Only", "phase_minutes": 5, "activity": "one question"}],
          "rubrics": [{"id": 1, "domain": "KnowledgeUnderstanding", "title": "R1",
                       "descriptor_high": "h", "descriptor_medium": "m", "descriptor_low": "l"}],
          "segments": [{"id": "Seg 1-1", "stage": 1, "rubric_ids": [1],
                        "question": {"kind": "Closed", "prompt": "2+2?",
                                     "closed_key": {"accepted": ["4"]},
                                     "hint": "add", "corrective": "it is 4"}}],
          "keystones": [],
          "selfcheck": {"likert_items": [], "reflection_template": "Using ___"}
        }"#
        .to_string()
    }

    #[test]
    fn default_scenario_shape() {
        let s = Scenario::default_scenario();
        assert_eq!(s.stages.len(), 6);
        assert_eq!(s.rubrics.len(), 5);
        assert_eq!(s.segments.len(), 12);
        assert_eq!(s.selfcheck.likert_items.len(), 5);
        assert_eq!(s.keystones, vec![SegmentId::parse("Seg 3-2").unwrap(), SegmentId::parse("Seg 5-1").unwrap()]);
        assert!(validate_scenario(&s).is_empty());
        assert_eq!(s.stages[0].phase, "Introduction");
        assert_eq!(s.stages[0].phase_minutes, 5);
    }

    #[test]
    fn minimal_scenario_is_valid() {
        let s = Scenario::from_json_str(&minimal_json()).unwrap();
        assert_eq!(s.segments.len(), 1);
        let only = segments_for_rubric(&s, 1).unwrap();
        assert_eq!(only.len(), 1);
    }

    #[test]
    fn empty_rubric_ids_is_unmapped() {
        let doc = minimal_json().replace(r#""rubric_ids": [1]"#, r#""rubric_ids": []"#);
        match Scenario::from_json_str(&doc) {
            Err(ScenarioError::Validation(v)) => {
                assert!(v.iter().any(|m| m == "unmapped segment Seg 1-1"), "{v:?}");
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_document_reports_line() {
        let err = Scenario::from_json_str("{\n  \"id\": ").unwrap_err();
        assert!(matches!(err, ScenarioError::Parse { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn bad_segment_id_is_a_parse_error() {
        let doc = minimal_json().replace("Seg 1-1", "Segment one");
        assert!(matches!(Scenario::from_json_str(&doc), Err(ScenarioError::Parse { .. })));
    }

    #[test]
    fn undefined_keystone_is_reported() {
        let mut s = Scenario::default_scenario();
        s.keystones.push(SegmentId::parse("Seg 9-9").unwrap());
        assert_eq!(validate_scenario(&s), vec!["keystone Seg 9-9 undefined".to_string()]);
    }

    #[test]
    fn rubric_without_segments_is_reported() {
        let mut s = Scenario::default_scenario();
        for seg in &mut s.segments {
            seg.rubric_ids.retain(|r| *r != 5);
        }
        let v = validate_scenario(&s);
        assert!(v.contains(&"rubric 5 has no evidence source".to_string()), "{v:?}");
    }

    #[test]
    fn stage_must_match_id() {
        let mut s = Scenario::default_scenario();
        s.segments[0].stage = 2;
        let v = validate_scenario(&s);
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("Seg 1-1"));
    }

    #[test]
    fn rubric_three_includes_keystones() {
        let s = Scenario::default_scenario();
        let ids: Vec<&str> = segments_for_rubric(&s, 3).unwrap().iter().map(|seg| seg.id.as_str()).collect();
        assert!(ids.contains(&"Seg 3-2"));
        assert!(ids.contains(&"Seg 5-1"));
    }

    #[test]
    fn unknown_rubric() {
        let s = Scenario::default_scenario();
        assert!(matches!(segments_for_rubric(&s, 6), Err(ScenarioError::UnknownRubric(6))));
    }

    #[test]
    fn rubric_union_covers_mapped_segments_in_order() {
        let s = Scenario::default_scenario();
        let mut union = BTreeSet::new();
        for r in &s.rubrics {
            let segs = segments_for_rubric(&s, r.id).unwrap();
            let positions: Vec<usize> =
                segs.iter().map(|seg| s.segments.iter().position(|x| x.id == seg.id).unwrap()).collect();
            assert!(positions.windows(2).all(|w| w[0] < w[1]));
            union.extend(segs.iter().map(|seg| seg.id.clone()));
        }
        let mapped: BTreeSet<_> =
            s.segments.iter().filter(|seg| !seg.rubric_ids.is_empty()).map(|seg| seg.id.clone()).collect();
        assert_eq!(union, mapped);
    }

    #[test]
    fn json_round_trip_is_identity() {
        let s = Scenario::default_scenario();
        let again = Scenario::from_json_str(&s.to_json_string())
            .unwrap()
            .with_templates(s.templates().unwrap().clone())
            .unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn missing_template_reference() {
        let s = Scenario::from_json_str(Scenario::default_scenario_json()).unwrap();
        let err = s.with_templates(TemplateLibrary::new()).unwrap_err();
        match err {
            ScenarioError::Validation(v) => assert_eq!(v.len(), 4),
            other => panic!("{other:?}"),
        }
    }
}
