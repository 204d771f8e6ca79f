//! The block-coding mini-language.
//!
//! Programs are flat statement lists (`set`, `print`) over arithmetic
//! expression trees. The XML vocabulary is closed: `program, set, print, num,
//! var, add, sub, mul, div, sqrt, slot`. Templates wrap a program that may
//! contain `slot` nodes, plus structural requirements and reference cases.

mod ast;
mod interp;
mod solver;
mod template;
mod xml;

pub use ast::{BlockKind, BlockProgram, Expr, Stmt};
pub use interp::{run_program, ExecTrace};
pub use solver::{solve_consecutive, DomainError};
pub(crate) use template::format_number;
pub use template::{
    grade_block, match_template, Bindings, BlockTemplate, BlockVerdict, MismatchReport, OutputMismatch, ReferenceCase,
    OUTPUT_TOLERANCE,
};
pub use xml::{expr_to_xml, parse_expr, parse_program, serialize_program};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BlockError {
    #[error("malformed XML: {0}")]
    Xml(String),
    #[error("unknown block <{0}>")]
    UnknownBlock(String),
    #[error("<{found}> is not allowed here; expected {expected}")]
    UnexpectedElement { found: String, expected: &'static str },
    #[error("<{block}> takes {expected} input(s), found {found}")]
    Arity { block: String, expected: usize, found: usize },
    #[error("<{element}> is missing attribute `{attribute}`")]
    MissingAttribute { element: String, attribute: &'static str },
    #[error("<{element}> has invalid attribute {attribute}={value:?}")]
    InvalidAttribute { element: String, attribute: String, value: String },
    #[error("variable `{0}` is read before it is set")]
    UseBeforeSet(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("square root of negative value {0}")]
    NegativeSqrt(f64),
    #[error("program contains unfilled slot `{0}`")]
    SlotInProgram(String),
    #[error("variable `{0}` has no value")]
    UnboundVariable(String),
    #[error("arithmetic overflowed to a non-finite value")]
    NonFinite,
    #[error("invalid template: {0}")]
    Template(String),
}
