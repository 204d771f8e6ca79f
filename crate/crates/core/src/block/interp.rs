use std::collections::BTreeMap;

use serde::Serialize;

use super::ast::{BlockProgram, Expr, Stmt};
use super::BlockError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExecTrace {
    pub outputs: Vec<f64>,
    pub final_env: BTreeMap<String, f64>,
    /// Statements plus expression nodes evaluated.
    pub steps: usize,
}

/// Executes statements in order, evaluating operands left to right.
pub fn run_program(p: &BlockProgram, env0: &BTreeMap<String, f64>) -> Result<ExecTrace, BlockError> {
    if let Some(id) = p.slot_ids().first() {
        return Err(BlockError::SlotInProgram(id.to_string()));
    }
    let mut machine = Machine { env: env0.clone(), steps: 0 };
    let mut outputs = Vec::new();
    for stmt in &p.stmts {
        machine.steps += 1;
        match stmt {
            Stmt::Set { var, expr } => {
                let v = machine.eval(expr)?;
                machine.env.insert(var.clone(), v);
            }
            Stmt::Print(expr) => outputs.push(machine.eval(expr)?),
        }
    }
    Ok(ExecTrace { outputs, final_env: machine.env, steps: machine.steps })
}

struct Machine {
    env: BTreeMap<String, f64>,
    steps: usize,
}

impl Machine {
    fn eval(&mut self, e: &Expr) -> Result<f64, BlockError> {
        self.steps += 1;
        let v = match e {
            Expr::Num(v) => *v,
            Expr::Var(name) => *self.env.get(name).ok_or_else(|| BlockError::UnboundVariable(name.clone()))?,
            Expr::Slot(id) => return Err(BlockError::SlotInProgram(id.clone())),
            Expr::Add(l, r) => self.eval(l)? + self.eval(r)?,
            Expr::Sub(l, r) => self.eval(l)? - self.eval(r)?,
            Expr::Mul(l, r) => self.eval(l)? * self.eval(r)?,
            Expr::Div(l, r) => {
                let num = self.eval(l)?;
                let den = self.eval(r)?;
                if den == 0.0 {
                    return Err(BlockError::DivisionByZero);
                }
                num / den
            }
            Expr::Sqrt(a) => {
                let v = self.eval(a)?;
                if v < 0.0 {
                    return Err(BlockError::NegativeSqrt(v));
                }
                v.sqrt()
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(BlockError::NonFinite)
        }
    }
}
