//! Substitution-based standard reduction for the pure core plus `if`.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::syntax::{check_closed, substitute, Expr, ExprKind, Label, OpenTermError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RefOutcome {
    Value(Expr),
    Timeout,
    Stuck,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RefError {
    #[error(transparent)]
    Open(#[from] OpenTermError),
    #[error("the reference evaluator does not support the form at label {0}")]
    Unsupported(Label),
    #[error("internal error: substituted value {0} is not closed")]
    OpenValue(Expr),
}

/// One layer of an evaluation context, innermost last on the stack.
enum Hole {
    /// `([] a)`
    Operator(Expr),
    /// `(v [])`
    Operand(Expr),
    /// `(if [] t f)`
    Test(Expr, Expr),
}

fn contract(f: &Expr, a: &Expr) -> Result<Option<Expr>, RefError> {
    match f.kind() {
        ExprKind::Lam(x, body) => {
            if !a.fv().is_empty() {
                return Err(RefError::OpenValue(a.clone()));
            }
            Ok(Some(substitute(body, &BTreeMap::from([(x.clone(), a.clone())]))))
        }
        ExprKind::Callcc => Err(RefError::Unsupported(f.label())),
        _ => Ok(None),
    }
}

/// Evaluates a closed pure-core program by standard reduction, giving up
/// after `fuel` reduction steps.
///
/// Redexes are found left to right, operator before operand and test
/// before branches. After each contraction the search resumes at the
/// contractum inside the same context instead of from the root, which
/// finds the same redex.
pub fn eval_reference(e: &Expr, fuel: usize) -> Result<RefOutcome, RefError> {
    check_closed(e)?;
    if let Some(bad) = e.preorder().into_iter().find(|n| matches!(n.kind(), ExprKind::SetBang(..) | ExprKind::Callcc)) {
        return Err(RefError::Unsupported(bad.label()));
    }
    let mut ctx: Vec<Hole> = Vec::new();
    let mut focus = e.clone();
    let mut steps = 0;
    loop {
        if !focus.is_value() {
            match focus.kind() {
                ExprKind::App(f, a) => {
                    ctx.push(Hole::Operator(a.clone()));
                    focus = f.clone();
                }
                ExprKind::If(c, t, f) => {
                    ctx.push(Hole::Test(t.clone(), f.clone()));
                    focus = c.clone();
                }
                ExprKind::SetBang(..) => return Err(RefError::Unsupported(focus.label())),
                // only reachable on open terms, which are rejected above
                _ => return Ok(RefOutcome::Stuck),
            }
            continue;
        }
        let redex = match ctx.pop() {
            None => return Ok(RefOutcome::Value(focus)),
            Some(Hole::Operator(a)) if !a.is_value() => {
                ctx.push(Hole::Operand(focus));
                focus = a;
                continue;
            }
            Some(Hole::Operator(a)) => contract(&focus, &a)?,
            Some(Hole::Operand(f)) => contract(&f, &focus)?,
            Some(Hole::Test(t, f)) => {
                if matches!(focus.kind(), ExprKind::Callcc) {
                    return Err(RefError::Unsupported(focus.label()));
                }
                Some(if matches!(focus.kind(), ExprKind::False) { f } else { t })
            }
        };
        let Some(next) = redex else { return Ok(RefOutcome::Stuck) };
        if steps == fuel {
            return Ok(RefOutcome::Timeout);
        }
        steps += 1;
        focus = next;
    }
}
