use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Sqrt(Box<Expr>),
    /// Placeholder a learner fills in. Only legal inside templates.
    Slot(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    Num,
    Var,
    Add,
    Sub,
    Mul,
    Div,
    Sqrt,
    Slot,
}

impl BlockKind {
    pub fn name(self) -> &'static str {
        match self {
            BlockKind::Num => "num",
            BlockKind::Var => "var",
            BlockKind::Add => "add",
            BlockKind::Sub => "sub",
            BlockKind::Mul => "mul",
            BlockKind::Div => "div",
            BlockKind::Sqrt => "sqrt",
            BlockKind::Slot => "slot",
        }
    }

    pub fn from_name(name: &str) -> Option<BlockKind> {
        Some(match name {
            "num" => BlockKind::Num,
            "var" => BlockKind::Var,
            "add" => BlockKind::Add,
            "sub" => BlockKind::Sub,
            "mul" => BlockKind::Mul,
            "div" => BlockKind::Div,
            "sqrt" => BlockKind::Sqrt,
            "slot" => BlockKind::Slot,
            _ => return None,
        })
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[allow(clippy::should_implement_trait)]
impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn slot(id: &str) -> Expr {
        Expr::Slot(id.to_string())
    }

    pub fn add(l: Expr, r: Expr) -> Expr {
        Expr::Add(Box::new(l), Box::new(r))
    }

    pub fn sub(l: Expr, r: Expr) -> Expr {
        Expr::Sub(Box::new(l), Box::new(r))
    }

    pub fn mul(l: Expr, r: Expr) -> Expr {
        Expr::Mul(Box::new(l), Box::new(r))
    }

    pub fn div(l: Expr, r: Expr) -> Expr {
        Expr::Div(Box::new(l), Box::new(r))
    }

    pub fn sqrt(arg: Expr) -> Expr {
        Expr::Sqrt(Box::new(arg))
    }

    pub fn kind(&self) -> BlockKind {
        match self {
            Expr::Num(_) => BlockKind::Num,
            Expr::Var(_) => BlockKind::Var,
            Expr::Add(..) => BlockKind::Add,
            Expr::Sub(..) => BlockKind::Sub,
            Expr::Mul(..) => BlockKind::Mul,
            Expr::Div(..) => BlockKind::Div,
            Expr::Sqrt(_) => BlockKind::Sqrt,
            Expr::Slot(_) => BlockKind::Slot,
        }
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Num(_) | Expr::Var(_) | Expr::Slot(_) => vec![],
            Expr::Sqrt(a) => vec![a],
            Expr::Add(l, r) | Expr::Sub(l, r) | Expr::Mul(l, r) | Expr::Div(l, r) => vec![l, r],
        }
    }

    /// Pre-order traversal.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        for c in self.children() {
            c.visit(f);
        }
    }

    pub fn depth(&self) -> usize {
        1 + self.children().iter().map(|c| c.depth()).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Set { var: String, expr: Expr },
    Print(Expr),
}

impl Stmt {
    pub fn expr(&self) -> &Expr {
        match self {
            Stmt::Set { expr, .. } | Stmt::Print(expr) => expr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BlockProgram {
    pub stmts: Vec<Stmt>,
}

impl BlockProgram {
    pub fn new(stmts: Vec<Stmt>) -> Self {
        BlockProgram { stmts }
    }

    pub fn exprs(&self) -> impl Iterator<Item = &Expr> {
        self.stmts.iter().map(Stmt::expr)
    }

    /// Multiset of expression kinds present in the program.
    pub fn kind_counts(&self) -> BTreeMap<BlockKind, usize> {
        let mut counts = BTreeMap::new();
        for e in self.exprs() {
            e.visit(&mut |node| *counts.entry(node.kind()).or_insert(0) += 1);
        }
        counts
    }

    pub fn slot_ids(&self) -> Vec<&str> {
        let mut ids = Vec::new();
        for e in self.exprs() {
            e.visit(&mut |node| {
                if let Expr::Slot(id) = node {
                    ids.push(id.as_str());
                }
            });
        }
        ids
    }

    /// Variables read anywhere in the program.
    pub fn vars_read(&self) -> Vec<&str> {
        let mut names = Vec::new();
        for e in self.exprs() {
            e.visit(&mut |node| {
                if let Expr::Var(name) = node {
                    if !names.contains(&name.as_str()) {
                        names.push(name.as_str());
                    }
                }
            });
        }
        names
    }

    /// Variables read or assigned anywhere in the program.
    pub fn vars_mentioned(&self) -> Vec<&str> {
        let mut names = self.vars_read();
        for s in &self.stmts {
            if let Stmt::Set { var, .. } = s {
                if !names.contains(&var.as_str()) {
                    names.push(var.as_str());
                }
            }
        }
        names
    }

    /// First variable read before any `set` of it, in statement order.
    pub fn first_use_before_set(&self) -> Option<&str> {
        let mut defined: Vec<&str> = Vec::new();
        for s in &self.stmts {
            let mut missing = None;
            s.expr().visit(&mut |node| {
                if let Expr::Var(name) = node {
                    if missing.is_none() && !defined.contains(&name.as_str()) {
                        missing = Some(name.as_str());
                    }
                }
            });
            if missing.is_some() {
                return missing;
            }
            if let Stmt::Set { var, .. } = s {
                defined.push(var);
            }
        }
        None
    }
}
