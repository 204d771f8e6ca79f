use std::fmt::Write as _;
use std::sync::OnceLock;

use regex::Regex;
use roxmltree::{Document, Node};

use super::ast::{BlockProgram, Expr, Stmt};
use super::BlockError;

fn var_name_pattern() -> &'static Regex {
    static P: OnceLock<Regex> = OnceLock::new();
    P.get_or_init(|| Regex::new(r"^[a-z][a-z0-9_]*$").expect("static regex"))
}

fn slot_id_pattern() -> &'static Regex {
    static P: OnceLock<Regex> = OnceLock::new();
    P.get_or_init(|| Regex::new(r"^[A-Za-z0-9_]+$").expect("static regex"))
}

pub(crate) fn is_var_name(s: &str) -> bool {
    var_name_pattern().is_match(s)
}

pub(crate) fn is_slot_id(s: &str) -> bool {
    slot_id_pattern().is_match(s)
}

/// Parses a `<program>` document and checks that every variable is set
/// before it is read.
pub fn parse_program(xml: &str) -> Result<BlockProgram, BlockError> {
    let doc = Document::parse(xml).map_err(|e| BlockError::Xml(e.to_string()))?;
    let root = doc.root_element();
    if root.tag_name().name() != "program" {
        return Err(BlockError::UnexpectedElement {
            found: root.tag_name().name().to_string(),
            expected: "<program> root",
        });
    }
    let program = program_from_node(root)?;
    check_use_before_set(&program)?;
    Ok(program)
}

/// Parses a single expression fragment such as `<add>...</add>`.
pub fn parse_expr(xml: &str) -> Result<Expr, BlockError> {
    let doc = Document::parse(xml).map_err(|e| BlockError::Xml(e.to_string()))?;
    expr_from_node(doc.root_element())
}

pub(crate) fn check_use_before_set(p: &BlockProgram) -> Result<(), BlockError> {
    match p.first_use_before_set() {
        Some(name) => Err(BlockError::UseBeforeSet(name.to_string())),
        None => Ok(()),
    }
}

pub(crate) fn element_children<'a, 'i>(node: Node<'a, 'i>) -> Result<Vec<Node<'a, 'i>>, BlockError> {
    let mut out = Vec::new();
    for child in node.children() {
        if child.is_element() {
            out.push(child);
        } else if child.is_text() {
            let text = child.text().unwrap_or_default();
            if !text.trim().is_empty() {
                return Err(BlockError::Xml(format!(
                    "unexpected text {:?} inside <{}>",
                    text.trim(),
                    node.tag_name().name()
                )));
            }
        }
    }
    Ok(out)
}

pub(crate) fn check_attributes(node: Node<'_, '_>, allowed: &[&str]) -> Result<(), BlockError> {
    for a in node.attributes() {
        if !allowed.contains(&a.name()) {
            return Err(BlockError::InvalidAttribute {
                element: node.tag_name().name().to_string(),
                attribute: a.name().to_string(),
                value: a.value().to_string(),
            });
        }
    }
    Ok(())
}

pub(crate) fn required_attr<'a>(node: Node<'a, '_>, attribute: &'static str) -> Result<&'a str, BlockError> {
    node.attribute(attribute)
        .ok_or_else(|| BlockError::MissingAttribute { element: node.tag_name().name().to_string(), attribute })
}

pub(crate) fn number_attr(node: Node<'_, '_>, attribute: &'static str) -> Result<f64, BlockError> {
    let raw = required_attr(node, attribute)?;
    match raw.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(BlockError::InvalidAttribute {
            element: node.tag_name().name().to_string(),
            attribute: attribute.to_string(),
            value: raw.to_string(),
        }),
    }
}

fn var_attr(node: Node<'_, '_>, attribute: &'static str) -> Result<String, BlockError> {
    let name = required_attr(node, attribute)?;
    if is_var_name(name) {
        Ok(name.to_string())
    } else {
        Err(BlockError::InvalidAttribute {
            element: node.tag_name().name().to_string(),
            attribute: attribute.to_string(),
            value: name.to_string(),
        })
    }
}

fn single_child<'a, 'i>(node: Node<'a, 'i>) -> Result<Node<'a, 'i>, BlockError> {
    let kids = element_children(node)?;
    if kids.len() != 1 {
        return Err(BlockError::Arity { block: node.tag_name().name().to_string(), expected: 1, found: kids.len() });
    }
    Ok(kids[0])
}

pub(crate) fn program_from_node(node: Node<'_, '_>) -> Result<BlockProgram, BlockError> {
    check_attributes(node, &[])?;
    let mut stmts = Vec::new();
    for child in element_children(node)? {
        let name = child.tag_name().name();
        let stmt = match name {
            "set" => {
                check_attributes(child, &["var"])?;
                let var = var_attr(child, "var")?;
                Stmt::Set { var, expr: expr_from_node(single_child(child)?)? }
            }
            "print" => {
                check_attributes(child, &[])?;
                Stmt::Print(expr_from_node(single_child(child)?)?)
            }
            "num" | "var" | "add" | "sub" | "mul" | "div" | "sqrt" | "slot" => {
                return Err(BlockError::UnexpectedElement {
                    found: name.to_string(),
                    expected: "a statement (<set> or <print>)",
                })
            }
            other => return Err(BlockError::UnknownBlock(other.to_string())),
        };
        stmts.push(stmt);
    }
    Ok(BlockProgram { stmts })
}

fn expr_from_node(node: Node<'_, '_>) -> Result<Expr, BlockError> {
    let name = node.tag_name().name();
    let kids = element_children(node)?;
    let arity = |expected: usize| -> Result<(), BlockError> {
        if kids.len() == expected {
            Ok(())
        } else {
            Err(BlockError::Arity { block: name.to_string(), expected, found: kids.len() })
        }
    };
    let binary = |make: fn(Box<Expr>, Box<Expr>) -> Expr| -> Result<Expr, BlockError> {
        arity(2)?;
        check_attributes(node, &[])?;
        Ok(make(Box::new(expr_from_node(kids[0])?), Box::new(expr_from_node(kids[1])?)))
    };
    match name {
        "num" => {
            arity(0)?;
            check_attributes(node, &["value"])?;
            Ok(Expr::Num(number_attr(node, "value")?))
        }
        "var" => {
            arity(0)?;
            check_attributes(node, &["name"])?;
            Ok(Expr::Var(var_attr(node, "name")?))
        }
        "slot" => {
            arity(0)?;
            check_attributes(node, &["id"])?;
            let id = required_attr(node, "id")?;
            if !is_slot_id(id) {
                return Err(BlockError::InvalidAttribute {
                    element: "slot".into(),
                    attribute: "id".into(),
                    value: id.into(),
                });
            }
            Ok(Expr::Slot(id.to_string()))
        }
        "add" => binary(Expr::Add),
        "sub" => binary(Expr::Sub),
        "mul" => binary(Expr::Mul),
        "div" => binary(Expr::Div),
        "sqrt" => {
            arity(1)?;
            check_attributes(node, &[])?;
            Ok(Expr::Sqrt(Box::new(expr_from_node(kids[0])?)))
        }
        "set" | "print" | "program" => {
            Err(BlockError::UnexpectedElement { found: name.to_string(), expected: "an expression block" })
        }
        other => Err(BlockError::UnknownBlock(other.to_string())),
    }
}

pub(crate) fn escape_attr(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Canonical compact XML: no whitespace between elements, attributes in
/// fixed order, numbers in shortest round-trip form.
pub fn serialize_program(p: &BlockProgram) -> String {
    let mut out = String::new();
    write_program(&mut out, p);
    out
}

pub(crate) fn write_program(out: &mut String, p: &BlockProgram) {
    if p.stmts.is_empty() {
        out.push_str("<program/>");
        return;
    }
    out.push_str("<program>");
    for s in &p.stmts {
        match s {
            Stmt::Set { var, expr } => {
                let _ = write!(out, "<set var=\"{}\">", escape_attr(var));
                write_expr(out, expr);
                out.push_str("</set>");
            }
            Stmt::Print(expr) => {
                out.push_str("<print>");
                write_expr(out, expr);
                out.push_str("</print>");
            }
        }
    }
    out.push_str("</program>");
}

pub fn expr_to_xml(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(&mut out, e);
    out
}

fn write_expr(out: &mut String, e: &Expr) {
    match e {
        Expr::Num(v) => {
            let _ = write!(out, "<num value=\"{v}\"/>");
        }
        Expr::Var(name) => {
            let _ = write!(out, "<var name=\"{}\"/>", escape_attr(name));
        }
        Expr::Slot(id) => {
            let _ = write!(out, "<slot id=\"{}\"/>", escape_attr(id));
        }
        Expr::Sqrt(a) => {
            out.push_str("<sqrt>");
            write_expr(out, a);
            out.push_str("</sqrt>");
        }
        Expr::Add(l, r) | Expr::Sub(l, r) | Expr::Mul(l, r) | Expr::Div(l, r) => {
            let tag = e.kind().name();
            let _ = write!(out, "<{tag}>");
            write_expr(out, l);
            write_expr(out, r);
            let _ = write!(out, "</{tag}>");
        }
    }
}
