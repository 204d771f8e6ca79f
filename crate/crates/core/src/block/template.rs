use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use roxmltree::Document;
use serde::Serialize;

use super::ast::{BlockKind, BlockProgram, Expr, Stmt};
use super::interp::run_program;
use super::xml::{
    check_attributes, check_use_before_set, element_children, escape_attr, expr_to_xml, is_var_name, number_attr,
    program_from_node, required_attr, write_program,
};
use super::BlockError;
use crate::grading::AnswerStatus;

/// Absolute tolerance for comparing printed values with expectations.
pub const OUTPUT_TOLERANCE: f64 = 1e-9;

/// Slot id to the learner subtree aligned with it.
pub type Bindings = BTreeMap<String, Expr>;

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceCase {
    pub bindings: Vec<(String, f64)>,
    pub expected: Vec<f64>,
}

impl ReferenceCase {
    pub fn env(&self) -> BTreeMap<String, f64> {
        self.bindings.iter().cloned().collect()
    }

    fn describe_env(&self) -> String {
        self.bindings.iter().map(|(k, v)| format!("{k}={}", format_number(*v))).collect::<Vec<_>>().join(", ")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockTemplate {
    pub id: String,
    pub program: BlockProgram,
    pub required_kinds: BTreeMap<BlockKind, usize>,
    pub references: Vec<ReferenceCase>,
    /// Reference subtree for each slot, when the author supplied one.
    pub solutions: BTreeMap<String, Expr>,
}

impl BlockTemplate {
    pub fn parse(xml: &str) -> Result<BlockTemplate, BlockError> {
        let doc = Document::parse(xml).map_err(|e| BlockError::Xml(e.to_string()))?;
        let root = doc.root_element();
        if root.tag_name().name() != "template" {
            return Err(BlockError::UnexpectedElement {
                found: root.tag_name().name().to_string(),
                expected: "<template> root",
            });
        }
        check_attributes(root, &["id"])?;
        let id = required_attr(root, "id")?.to_string();
        let mut program = None;
        let mut required_kinds = BTreeMap::new();
        let mut references = Vec::new();
        let mut solutions = BTreeMap::new();
        for child in element_children(root)? {
            match child.tag_name().name() {
                "program" => {
                    if program.is_some() {
                        return Err(BlockError::Template("more than one <program>".into()));
                    }
                    program = Some(program_from_node(child)?);
                }
                "require" => {
                    check_attributes(child, &["kind", "count"])?;
                    let name = required_attr(child, "kind")?;
                    let kind = BlockKind::from_name(name).filter(|k| *k != BlockKind::Slot).ok_or_else(|| {
                        BlockError::InvalidAttribute {
                            element: "require".into(),
                            attribute: "kind".into(),
                            value: name.into(),
                        }
                    })?;
                    let count = match child.attribute("count") {
                        None => 1,
                        Some(c) => c.parse::<usize>().map_err(|_| BlockError::InvalidAttribute {
                            element: "require".into(),
                            attribute: "count".into(),
                            value: c.into(),
                        })?,
                    };
                    *required_kinds.entry(kind).or_insert(0) += count;
                }
                "reference" => {
                    check_attributes(child, &[])?;
                    let mut case = ReferenceCase { bindings: Vec::new(), expected: Vec::new() };
                    for item in element_children(child)? {
                        match item.tag_name().name() {
                            "bind" => {
                                check_attributes(item, &["var", "value"])?;
                                let var = required_attr(item, "var")?;
                                if !is_var_name(var) {
                                    return Err(BlockError::InvalidAttribute {
                                        element: "bind".into(),
                                        attribute: "var".into(),
                                        value: var.into(),
                                    });
                                }
                                case.bindings.push((var.to_string(), number_attr(item, "value")?));
                            }
                            "expect" => {
                                check_attributes(item, &["value"])?;
                                case.expected.push(number_attr(item, "value")?);
                            }
                            other => return Err(BlockError::UnknownBlock(other.to_string())),
                        }
                    }
                    references.push(case);
                }
                "solution" => {
                    check_attributes(child, &["slot"])?;
                    let slot = required_attr(child, "slot")?.to_string();
                    let kids = element_children(child)?;
                    if kids.len() != 1 {
                        return Err(BlockError::Arity { block: "solution".into(), expected: 1, found: kids.len() });
                    }
                    let range = kids[0].range();
                    let expr = super::xml::parse_expr(&xml[range])?;
                    solutions.insert(slot, expr);
                }
                other => return Err(BlockError::UnknownBlock(other.to_string())),
            }
        }
        let program = program.ok_or_else(|| BlockError::Template("missing <program>".into()))?;
        check_use_before_set(&program)?;
        let t = BlockTemplate { id, program, required_kinds, references, solutions };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), BlockError> {
        let ids = self.program.slot_ids();
        let unique: BTreeSet<&str> = ids.iter().copied().collect();
        if unique.len() != ids.len() {
            return Err(BlockError::Template(format!("{}: slot ids are not unique", self.id)));
        }
        if self.references.is_empty() {
            return Err(BlockError::Template(format!("{}: no reference cases", self.id)));
        }
        if self.references.iter().any(|r| r.expected.is_empty()) {
            return Err(BlockError::Template(format!("{}: reference without expectations", self.id)));
        }
        for slot in self.solutions.keys() {
            if !unique.contains(slot.as_str()) {
                return Err(BlockError::Template(format!("{}: solution for unknown slot {slot}", self.id)));
            }
        }
        Ok(())
    }

    pub fn to_xml(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "<template id=\"{}\">", escape_attr(&self.id));
        write_program(&mut out, &self.program);
        for (kind, count) in &self.required_kinds {
            let _ = write!(out, "<require kind=\"{kind}\" count=\"{count}\"/>");
        }
        for r in &self.references {
            out.push_str("<reference>");
            for (var, value) in &r.bindings {
                let _ = write!(out, "<bind var=\"{var}\" value=\"{value}\"/>");
            }
            for value in &r.expected {
                let _ = write!(out, "<expect value=\"{value}\"/>");
            }
            out.push_str("</reference>");
        }
        for (slot, expr) in &self.solutions {
            let _ = write!(out, "<solution slot=\"{}\">{}</solution>", escape_attr(slot), expr_to_xml(expr));
        }
        out.push_str("</template>");
        out
    }

    /// Substitutes every slot with its binding. Unbound slots stay in place.
    pub fn fill(&self, bindings: &Bindings) -> BlockProgram {
        fn subst(e: &Expr, b: &Bindings) -> Expr {
            match e {
                Expr::Slot(id) => b.get(id).cloned().unwrap_or_else(|| e.clone()),
                Expr::Num(_) | Expr::Var(_) => e.clone(),
                Expr::Sqrt(a) => Expr::Sqrt(Box::new(subst(a, b))),
                Expr::Add(l, r) => Expr::Add(Box::new(subst(l, b)), Box::new(subst(r, b))),
                Expr::Sub(l, r) => Expr::Sub(Box::new(subst(l, b)), Box::new(subst(r, b))),
                Expr::Mul(l, r) => Expr::Mul(Box::new(subst(l, b)), Box::new(subst(r, b))),
                Expr::Div(l, r) => Expr::Div(Box::new(subst(l, b)), Box::new(subst(r, b))),
            }
        }
        BlockProgram {
            stmts: self
                .program
                .stmts
                .iter()
                .map(|s| match s {
                    Stmt::Set { var, expr } => Stmt::Set { var: var.clone(), expr: subst(expr, bindings) },
                    Stmt::Print(expr) => Stmt::Print(subst(expr, bindings)),
                })
                .collect(),
        }
    }

    /// The template completed with the author's solutions, if every slot has one.
    pub fn reference_program(&self) -> Option<BlockProgram> {
        let filled = self.fill(&self.solutions);
        filled.slot_ids().is_empty().then_some(filled)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MismatchReport {
    pub path: String,
    pub expected: String,
    pub found: String,
}

impl fmt::Display for MismatchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at {}: expected {}, found {}", self.path, self.expected, self.found)
    }
}

fn describe(e: &Expr) -> String {
    match e {
        Expr::Num(v) => format!("num {}", format_number(*v)),
        Expr::Var(n) => format!("var {n}"),
        Expr::Slot(id) => format!("slot {id}"),
        other => other.kind().name().to_string(),
    }
}

fn describe_stmt(s: &Stmt) -> String {
    match s {
        Stmt::Set { var, .. } => format!("set {var}"),
        Stmt::Print(_) => "print".to_string(),
    }
}

/// Aligns a learner program with a template. Non-slot nodes must agree
/// exactly; each slot captures the learner subtree at its position.
pub fn match_template(t: &BlockTemplate, p: &BlockProgram) -> Result<Bindings, MismatchReport> {
    let mut bindings = Bindings::new();
    let n = t.program.stmts.len().max(p.stmts.len());
    for i in 0..n {
        let path = format!("stmt[{}]", i + 1);
        let (ts, ps) = match (t.program.stmts.get(i), p.stmts.get(i)) {
            (Some(ts), Some(ps)) => (ts, ps),
            (Some(ts), None) => {
                return Err(MismatchReport { path, expected: describe_stmt(ts), found: "end of program".into() })
            }
            (None, Some(ps)) => {
                return Err(MismatchReport { path, expected: "end of program".into(), found: describe_stmt(ps) })
            }
            (None, None) => unreachable!(),
        };
        let same_head = match (ts, ps) {
            (Stmt::Set { var: a, .. }, Stmt::Set { var: b, .. }) => a == b,
            (Stmt::Print(_), Stmt::Print(_)) => true,
            _ => false,
        };
        if !same_head {
            return Err(MismatchReport { path, expected: describe_stmt(ts), found: describe_stmt(ps) });
        }
        let path = format!("{path}/{}", describe_stmt(ts).replace(' ', ":"));
        match_expr(ts.expr(), ps.expr(), &path, &mut bindings)?;
    }
    Ok(bindings)
}

fn match_expr(t: &Expr, p: &Expr, path: &str, bindings: &mut Bindings) -> Result<(), MismatchReport> {
    if let Expr::Slot(id) = t {
        bindings.insert(id.clone(), p.clone());
        return Ok(());
    }
    let here = format!("{path}/{}", t.kind().name());
    let same = match (t, p) {
        (Expr::Num(a), Expr::Num(b)) => a == b,
        (Expr::Var(a), Expr::Var(b)) => a == b,
        _ => t.kind() == p.kind(),
    };
    if !same {
        return Err(MismatchReport { path: here, expected: describe(t), found: describe(p) });
    }
    let labels: &[&str] = match t {
        Expr::Sqrt(_) => &["arg"],
        _ => &["left", "right"],
    };
    for ((tc, pc), label) in t.children().into_iter().zip(p.children()).zip(labels) {
        match_expr(tc, pc, &format!("{here}.{label}"), bindings)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputMismatch {
    pub actual: f64,
    pub expected: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockVerdict {
    pub status: AnswerStatus,
    pub extracted: Bindings,
    pub reasons: Vec<String>,
    pub mismatch: Option<MismatchReport>,
    pub missing_kinds: Vec<BlockKind>,
    pub output_mismatches: Vec<OutputMismatch>,
    /// Variables the learner reads that the template never mentions.
    pub foreign_vars: Vec<String>,
    pub runtime_error: Option<BlockError>,
}

pub(crate) fn format_number(v: f64) -> String {
    if (v - v.round()).abs() <= OUTPUT_TOLERANCE && v.abs() < 1e15 {
        let r = v.round();
        if r == 0.0 {
            "0".to_string()
        } else {
            format!("{}", r as i64)
        }
    } else {
        format!("{v}")
    }
}

pub(crate) fn outputs_agree(actual: f64, expected: f64) -> bool {
    if expected.fract() == 0.0 && (actual - actual.round()).abs() <= OUTPUT_TOLERANCE {
        actual.round() == expected
    } else {
        (actual - expected).abs() <= OUTPUT_TOLERANCE
    }
}

/// Correct iff the program matches the template, contains every required
/// block kind, and prints the expected values for every reference case.
pub fn grade_block(p: &BlockProgram, t: &BlockTemplate) -> BlockVerdict {
    let mut reasons = Vec::new();

    let learner_slots = p.slot_ids();
    if let Some(id) = learner_slots.first() {
        reasons.push(format!("program contains unfilled slot {id}"));
    }

    let (extracted, mismatch) = match match_template(t, p) {
        Ok(b) => (b, None),
        Err(m) => {
            reasons.push(format!("structure differs from the task template {m}"));
            (Bindings::new(), Some(m))
        }
    };

    let counts = p.kind_counts();
    let mut missing_kinds = Vec::new();
    for (kind, need) in &t.required_kinds {
        if counts.get(kind).copied().unwrap_or(0) < *need {
            missing_kinds.push(*kind);
            reasons.push(format!("missing required block: {kind}"));
        }
    }

    let template_vars: BTreeSet<&str> = t.program.vars_mentioned().into_iter().collect();
    let foreign_vars: Vec<String> =
        p.vars_read().into_iter().filter(|v| !template_vars.contains(v)).map(str::to_string).collect();

    let mut output_mismatches = Vec::new();
    let mut runtime_error = None;
    for case in &t.references {
        let env_text = case.describe_env();
        let suffix = if env_text.is_empty() { String::new() } else { format!(" for {env_text}") };
        match run_program(p, &case.env()) {
            Ok(trace) => {
                if trace.outputs.len() != case.expected.len() {
                    reasons.push(format!(
                        "printed {} value(s), expected {}{suffix}",
                        trace.outputs.len(),
                        case.expected.len()
                    ));
                }
                for (a, e) in trace.outputs.iter().zip(&case.expected) {
                    if !outputs_agree(*a, *e) {
                        reasons.push(format!("output {} ≠ {}{suffix}", format_number(*a), format_number(*e)));
                        output_mismatches.push(OutputMismatch { actual: *a, expected: *e });
                    }
                }
            }
            Err(err) => {
                if !matches!(err, BlockError::SlotInProgram(_)) {
                    reasons.push(format!("runtime error{suffix}: {err}"));
                }
                runtime_error.get_or_insert(err);
            }
        }
    }

    let status = if reasons.is_empty() { AnswerStatus::Correct } else { AnswerStatus::Incorrect };
    BlockVerdict { status, extracted, reasons, mismatch, missing_kinds, output_mismatches, foreign_vars, runtime_error }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block::parse_program;

    const TEMPLATE: &str = r#"
        <template id="t">
          <program>
            <set var="n"><num value="110"/></set>
            <set var="x"><div><slot id="numerator"/><num value="2"/></div></set>
            <print><var name="x"/></print>
          </program>
          <require kind="sqrt" count="1"/>
          <reference><bind var="n" value="110"/><expect value="10"/></reference>
          <solution slot="numerator">
            <add><num value="-1"/><sqrt><add><num value="1"/><mul><num value="4"/><var name="n"/></mul></add></sqrt></add>
          </solution>
        </template>"#;

    fn program_with_numerator(numerator: &str) -> BlockProgram {
        parse_program(&format!(
            r#"<program><set var="n"><num value="110"/></set>
               <set var="x"><div>{numerator}<num value="2"/></div></set>
               <print><var name="x"/></print></program>"#
        ))
        .unwrap()
    }

    const POSITIVE: &str = r#"<add><num value="-1"/><sqrt><add><num value="1"/><mul><num value="4"/><var name="n"/></mul></add></sqrt></add>"#;
    const NEGATIVE: &str = r#"<sub><num value="-1"/><sqrt><add><num value="1"/><mul><num value="4"/><var name="n"/></mul></add></sqrt></sub>"#;

    #[test]
    fn template_round_trips_through_xml() {
        let t = BlockTemplate::parse(TEMPLATE).unwrap();
        assert_eq!(BlockTemplate::parse(&t.to_xml()).unwrap(), t);
        assert_eq!(t.required_kinds[&BlockKind::Sqrt], 1);
        assert_eq!(t.references[0].expected, vec![10.0]);
    }

    #[test]
    fn slot_binds_learner_subtree() {
        let t = BlockTemplate::parse(
            r#"<template id="r"><program><set var="n"><num value="110"/></set>
               <print><sqrt><slot id="s1"/></sqrt></print></program>
               <reference><expect value="21"/></reference></template>"#,
        )
        .unwrap();
        let p = parse_program(
            r#"<program><set var="n"><num value="110"/></set><print><sqrt>
               <add><num value="1"/><mul><num value="4"/><var name="n"/></mul></add></sqrt></print></program>"#,
        )
        .unwrap();
        let b = match_template(&t, &p).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b["s1"], Expr::add(Expr::num(1.0), Expr::mul(Expr::num(4.0), Expr::var("n"))));
    }

    #[test]
    fn identical_slot_free_program_matches() {
        let t = BlockTemplate::parse(
            r#"<template id="f"><program><print><num value="3"/></print></program>
               <reference><expect value="3"/></reference></template>"#,
        )
        .unwrap();
        let b = match_template(&t, &t.program).unwrap();
        assert!(b.is_empty());
    }

    #[test]
    fn structural_divergence_is_located() {
        let t = BlockTemplate::parse(
            r#"<template id="f"><program><print><add><num value="1"/><num value="2"/></add></print></program>
               <reference><expect value="3"/></reference></template>"#,
        )
        .unwrap();
        let p =
            parse_program(r#"<program><print><sub><num value="1"/><num value="2"/></sub></print></program>"#).unwrap();
        let m = match_template(&t, &p).unwrap_err();
        assert_eq!(m.path, "stmt[1]/print/add");
        assert_eq!(m.expected, "add");
        assert_eq!(m.found, "sub");
    }

    #[test]
    fn grades_reference_completion_correct() {
        let t = BlockTemplate::parse(TEMPLATE).unwrap();
        let v = grade_block(&program_with_numerator(POSITIVE), &t);
        assert_eq!(v.status, AnswerStatus::Correct, "{:?}", v.reasons);
        assert!(v.extracted.contains_key("numerator"));
        assert_eq!(t.reference_program().unwrap(), program_with_numerator(POSITIVE));
    }

    #[test]
    fn negative_root_is_rejected_with_output_reason() {
        let t = BlockTemplate::parse(TEMPLATE).unwrap();
        let v = grade_block(&program_with_numerator(NEGATIVE), &t);
        assert_eq!(v.status, AnswerStatus::Incorrect);
        assert_eq!(v.reasons, vec!["output -11 ≠ 10 for n=110".to_string()]);
        assert_eq!(v.output_mismatches, vec![OutputMismatch { actual: -11.0, expected: 10.0 }]);
    }

    #[test]
    fn missing_sqrt_block() {
        let t = BlockTemplate::parse(TEMPLATE).unwrap();
        let v = grade_block(&program_with_numerator(r#"<num value="20"/>"#), &t);
        assert_eq!(v.status, AnswerStatus::Incorrect);
        assert_eq!(v.reasons, vec!["missing required block: sqrt".to_string()]);
        assert_eq!(v.missing_kinds, vec![BlockKind::Sqrt]);
    }

    #[test]
    fn runtime_errors_become_reasons() {
        let t = BlockTemplate::parse(TEMPLATE).unwrap();
        let v = grade_block(&program_with_numerator(r#"<sqrt><num value="-4"/></sqrt>"#), &t);
        assert_eq!(v.status, AnswerStatus::Incorrect);
        assert!(v.reasons.iter().any(|r| r.starts_with("runtime error for n=110")));
        assert!(matches!(v.runtime_error, Some(BlockError::NegativeSqrt(_))));
    }

    #[test]
    fn foreign_variables_are_flagged() {
        let t = BlockTemplate::parse(TEMPLATE).unwrap();
        let p = parse_program(
            r#"<program><set var="n"><num value="110"/></set><set var="m"><num value="3"/></set>
               <set var="x"><div><var name="m"/><num value="2"/></div></set>
               <print><var name="x"/></print></program>"#,
        )
        .unwrap();
        let v = grade_block(&p, &t);
        assert_eq!(v.foreign_vars, vec!["m".to_string()]);
        assert!(v.mismatch.is_some());
    }

    #[test]
    fn integer_outputs_tolerate_float_noise() {
        assert!(outputs_agree(10.000000000001, 10.0));
        assert!(!outputs_agree(10.1, 10.0));
        assert!(outputs_agree(0.5 + 1e-12, 0.5));
    }
}
