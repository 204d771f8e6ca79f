#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rubricflow_core::block::{serialize_program, Expr};
use rubricflow_core::grading::GraderConfig;
use rubricflow_core::scenario::{QuestionKind, Segment};
use rubricflow_core::{AnswerStatus, Grader, Scenario, StubLlm};

pub fn scenario() -> Arc<Scenario> {
    Arc::new(Scenario::default_scenario())
}

pub fn grader(s: &Arc<Scenario>) -> Grader {
    Grader::new(s.clone(), Arc::new(StubLlm::heuristic()), GraderConfig::default())
}

pub fn clock(step: i64) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 11, 4, 9, 0, 0).unwrap() + Duration::seconds(step)
}

pub fn correct_answer(s: &Scenario, seg: &Segment) -> String {
    let q = &seg.question;
    match q.kind {
        QuestionKind::Closed => q.closed_key.as_ref().unwrap().accepted[0].clone(),
        QuestionKind::Block => {
            let t = s.template(q.block_template_ref.as_deref().unwrap()).unwrap();
            serialize_program(&t.reference_program().unwrap())
        }
        QuestionKind::Open => exemplar(seg, AnswerStatus::Correct),
        QuestionKind::SelfCheck => unreachable!(),
    }
}

pub fn wrong_answer(s: &Scenario, seg: &Segment) -> String {
    let q = &seg.question;
    match q.kind {
        QuestionKind::Closed => "no idea 7".to_string(),
        QuestionKind::Block => {
            let t = s.template(q.block_template_ref.as_deref().unwrap()).unwrap();
            let zeros: BTreeMap<String, Expr> = t.solutions.keys().map(|k| (k.clone(), Expr::num(0.0))).collect();
            serialize_program(&t.fill(&zeros))
        }
        QuestionKind::Open => exemplar(seg, AnswerStatus::Incorrect),
        QuestionKind::SelfCheck => unreachable!(),
    }
}

fn exemplar(seg: &Segment, label: AnswerStatus) -> String {
    seg.question.exemplars.iter().find(|e| e.label == label).unwrap().text.clone()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Plan {
    Skip,
    SolveAt(u32),
    Fail,
}

/// Opens, plays and finalizes a session following `plan` per segment.
pub fn play(store: &rubricflow_core::Store, s: &Arc<Scenario>, id: &str, plan: impl Fn(&Segment) -> Plan) {
    let grader = grader(s);
    store.open_session(id, &s.id, id, clock(0)).unwrap();
    let mut tick = 0;
    for seg in s.gradable_segments() {
        let attempts = match plan(seg) {
            Plan::Skip => continue,
            Plan::SolveAt(k) => k,
            Plan::Fail => 4,
        };
        for a in 1..=attempts {
            let solved_now = plan(seg) == Plan::SolveAt(a);
            let raw = if solved_now { correct_answer(s, seg) } else { wrong_answer(s, seg) };
            let prior = store.prior_attempts(id, &seg.id).unwrap();
            tick += 60;
            let out = grader.grade_submission(id, seg.id.as_str(), &raw, a, prior, clock(tick)).unwrap();
            assert_eq!(out.record.answer_status == AnswerStatus::Correct, solved_now, "{} attempt {a}", seg.id);
            store.append_submission(out.record, out.feedback).unwrap();
            store.append_evaluation(out.evaluation).unwrap();
        }
    }
    store
        .record_selfcheck(
            id,
            rubricflow_core::SelfCheck {
                likert: vec![4, 3, 4, 2, 5],
                reflection: "Consecutive numbers satisfy x(x+1) = n.".to_string(),
            },
        )
        .unwrap();
    store.finalize(id, clock(tick + 60)).unwrap();
}
