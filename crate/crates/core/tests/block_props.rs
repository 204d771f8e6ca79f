use std::collections::BTreeMap;

use proptest::prelude::*;
use rubricflow_core::block::{
    grade_block, parse_program, run_program, serialize_program, solve_consecutive, BlockError, BlockProgram, Expr, Stmt,
};
use rubricflow_core::scenario::Scenario;
use rubricflow_core::AnswerStatus;

const VARS: [&str; 4] = ["a", "b", "n", "x1"];

fn expr_strategy(bound: Vec<&'static str>) -> BoxedStrategy<Expr> {
    let leaf = if bound.is_empty() {
        (-1000i32..1000).prop_map(|v| Expr::Num(v as f64 / 8.0)).boxed()
    } else {
        prop_oneof![
            (-1000i32..1000).prop_map(|v| Expr::Num(v as f64 / 8.0)),
            prop::sample::select(bound).prop_map(|n| Expr::Var(n.to_string())),
        ]
        .boxed()
    };
    leaf.prop_recursive(5, 48, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Expr::add(l, r)),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Expr::sub(l, r)),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Expr::mul(l, r)),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Expr::div(l, r)),
            inner.prop_map(Expr::sqrt),
        ]
    })
    .boxed()
}

/// Programs that set some of `VARS` in order and only read variables
/// already set.
fn program_strategy() -> impl Strategy<Value = BlockProgram> {
    (1usize..=VARS.len(), 0usize..3).prop_flat_map(|(sets, prints)| {
        let mut stmts: Vec<BoxedStrategy<Stmt>> = Vec::new();
        for i in 0..sets {
            let bound = VARS[..i].to_vec();
            let var = VARS[i].to_string();
            stmts.push(expr_strategy(bound).prop_map(move |expr| Stmt::Set { var: var.clone(), expr }).boxed());
        }
        for _ in 0..prints {
            stmts.push(expr_strategy(VARS[..sets].to_vec()).prop_map(Stmt::Print).boxed());
        }
        stmts.prop_map(BlockProgram::new)
    })
}

/// Independent evaluator: plain recursion over the tree, returning None on
/// any domain error.
fn eval(e: &Expr, env: &BTreeMap<String, f64>) -> Option<f64> {
    let v = match e {
        Expr::Num(v) => *v,
        Expr::Var(n) => *env.get(n)?,
        Expr::Slot(_) => return None,
        Expr::Add(l, r) => eval(l, env)? + eval(r, env)?,
        Expr::Sub(l, r) => eval(l, env)? - eval(r, env)?,
        Expr::Mul(l, r) => eval(l, env)? * eval(r, env)?,
        Expr::Div(l, r) => {
            let (a, b) = (eval(l, env)?, eval(r, env)?);
            if b == 0.0 {
                return None;
            }
            a / b
        }
        Expr::Sqrt(a) => {
            let v = eval(a, env)?;
            if v < 0.0 {
                return None;
            }
            v.sqrt()
        }
    };
    v.is_finite().then_some(v)
}

fn oracle_outputs(p: &BlockProgram) -> Option<Vec<f64>> {
    let mut env = BTreeMap::new();
    let mut out = Vec::new();
    for s in &p.stmts {
        match s {
            Stmt::Set { var, expr } => {
                env.insert(var.clone(), eval(expr, &env)?);
            }
            Stmt::Print(expr) => out.push(eval(expr, &env)?),
        }
    }
    Some(out)
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn xml_round_trip_is_exact(p in program_strategy()) {
        let xml = serialize_program(&p);
        let back = parse_program(&xml).unwrap();
        prop_assert_eq!(&back, &p);
        prop_assert_eq!(serialize_program(&back), xml);
        prop_assert!(p.exprs().all(|e| e.depth() <= 6));
    }

    #[test]
    fn interpreter_matches_recursive_oracle(p in program_strategy()) {
        let got = run_program(&p, &BTreeMap::new());
        match (got, oracle_outputs(&p)) {
            (Ok(trace), Some(expected)) => {
                prop_assert_eq!(trace.outputs.len(), expected.len());
                for (a, b) in trace.outputs.iter().zip(&expected) {
                    prop_assert!(close(*a, *b), "{} vs {}", a, b);
                }
            }
            (Err(e), None) => prop_assert!(matches!(
                e,
                BlockError::DivisionByZero | BlockError::NegativeSqrt(_) | BlockError::NonFinite
            )),
            (got, want) => prop_assert!(false, "interpreter {:?} vs oracle {:?}", got, want),
        }
    }

    #[test]
    fn solver_agrees_with_scan(n in 2u64..2_000_000) {
        let scan = (1..=n).take_while(|x| x * (x + 1) <= n).find(|x| x * (x + 1) == n);
        prop_assert_eq!(solve_consecutive(n).unwrap(), scan);
    }

    #[test]
    fn solver_finds_every_product(x in 1u64..3_000_000_000) {
        prop_assert_eq!(solve_consecutive(x * (x + 1)).unwrap(), Some(x));
        prop_assert_eq!(solve_consecutive(x * (x + 1) + 1).unwrap(), None);
    }
}

#[test]
fn worked_targets() {
    assert_eq!(solve_consecutive(110).unwrap(), Some(10));
    assert_eq!(solve_consecutive(8742).unwrap(), Some(93));
    assert_eq!(93 * 94, 8742);
    assert!(solve_consecutive(1).is_err());
}

#[test]
fn hard_template_accepts_reference_and_rejects_negative_root() {
    let s = Scenario::default_scenario();
    let t = s.template("quadratic_hard").unwrap();
    let good = t.reference_program().unwrap();
    assert_eq!(grade_block(&good, t).status, AnswerStatus::Correct);

    let negative =
        Expr::sub(Expr::num(-1.0), Expr::sqrt(Expr::add(Expr::num(1.0), Expr::mul(Expr::num(4.0), Expr::var("n")))));
    let bad = t.fill(&BTreeMap::from([("numerator".to_string(), negative)]));
    let v = grade_block(&bad, t);
    assert_eq!(v.status, AnswerStatus::Incorrect);
    assert_eq!(v.output_mismatches[0].actual, -94.0);
}
