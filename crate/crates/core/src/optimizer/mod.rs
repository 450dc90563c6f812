//! Rule-based TCAP rewriting to a fixpoint.

mod pushdown;
mod redundant;
mod rewrite;

use crate::tcap::{canonicalize, validate, Diagnostic, Program};

/// Total rule firings allowed before the optimizer gives up.
pub const FIRING_CAP: usize = 10_000;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum OptimizerError {
    #[error("input program is invalid: {}", .0[0])]
    Invalid(Vec<Diagnostic>),
    #[error("optimizer did not converge after {0} rule firings")]
    OptimizerDivergence(usize),
    #[error("rule `{0}` produced an invalid program")]
    BrokenRule(&'static str),
}

/// A single rule application.
#[derive(Clone, Debug, PartialEq)]
pub struct Firing {
    pub rule: &'static str,
    pub detail: String,
}

/// Removes one APPLY that repeats a method call or attribute access
/// already computed upstream on the same data.
pub fn eliminate_redundant_apply(p: &Program) -> (Program, bool) {
    match redundant::fire(p) {
        Some((q, _)) => (q, true),
        None => (p.clone(), false),
    }
}

/// Moves one single-input conjunct of a post-join filter below the join.
pub fn push_filter_past_join(p: &Program) -> (Program, bool) {
    match pushdown::fire(p) {
        Some((q, _)) => (q, true),
        None => (p.clone(), false),
    }
}

pub fn optimize(p: &Program) -> Result<Program, OptimizerError> {
    optimize_traced(p).map(|(q, _)| q)
}

/// Runs both rules to a fixpoint and returns the canonical result together
/// with every firing in order.
pub fn optimize_traced(p: &Program) -> Result<(Program, Vec<Firing>), OptimizerError> {
    let diags = validate(p);
    if !diags.is_empty() {
        return Err(OptimizerError::Invalid(diags));
    }
    let mut cur = p.clone();
    let mut log = Vec::new();
    loop {
        let before = log.len();
        for rule in [redundant::fire, pushdown::fire] {
            while let Some((q, firing)) = rule(&cur) {
                if !validate(&q).is_empty() {
                    return Err(OptimizerError::BrokenRule(firing.rule));
                }
                cur = q;
                log.push(firing);
                if log.len() >= FIRING_CAP {
                    return Err(OptimizerError::OptimizerDivergence(log.len()));
                }
            }
        }
        if log.len() == before {
            break;
        }
    }
    Ok((canonicalize(&cur), log))
}
