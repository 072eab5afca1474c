use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Serialize, Serializer};
use thiserror::Error;

use super::StateGraph;
use crate::abstract_machine::AbsAddr;
use crate::concrete::{CeskState, Loc};
use crate::domain::{Control, Frame, Storable, Value};
use crate::syntax::{Expr, ExprKind, Label};

/// What a value looks like from the outside: which λ, or which literal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FlowValue {
    Lam(Label),
    False,
    Callcc,
    Continuation,
}

pub fn summarize<A>(v: &Value<A>) -> FlowValue {
    match v {
        Value::Lam(e) => FlowValue::Lam(e.label()),
        Value::False => FlowValue::False,
        Value::Callcc => FlowValue::Callcc,
        Value::Cont(_) => FlowValue::Continuation,
    }
}

impl fmt::Display for FlowValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowValue::Lam(l) => write!(f, "lam:{l}"),
            FlowValue::False => write!(f, "#f"),
            FlowValue::Callcc => write!(f, "callcc"),
            FlowValue::Continuation => write!(f, "cont"),
        }
    }
}

impl Serialize for FlowValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SiteKind {
    /// A variable reference: the values it may evaluate to.
    Var,
    /// An application: the functions it may call.
    App,
}

/// Values that may flow to one program point.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlowFact {
    pub site: Label,
    pub kind: SiteKind,
    pub values: BTreeSet<FlowValue>,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum FlowError {
    #[error("no expression has label {0}")]
    UnknownLabel(Label),
    #[error("label {0} is neither a variable reference nor an application")]
    NotASite(Label),
}

fn site_kind(program: &Expr, site: Label) -> Result<SiteKind, FlowError> {
    match program.find(site).map(Expr::kind) {
        None => Err(FlowError::UnknownLabel(site)),
        Some(ExprKind::Var(_)) => Ok(SiteKind::Var),
        Some(ExprKind::App(..)) => Ok(SiteKind::App),
        Some(_) => Err(FlowError::NotASite(site)),
    }
}

fn at_var(control: &Control<AbsAddr>, site: Label) -> Option<&crate::syntax::Name> {
    match control {
        Control::Eval(e) if e.label() == site => match e.kind() {
            ExprKind::Var(x) => Some(x),
            _ => None,
        },
        _ => None,
    }
}

/// Variable sites group by the abstract address of the variable, which is
/// the binding context; application sites have a single group.
pub fn flows_by_context(
    g: &StateGraph,
    site: Label,
) -> Result<BTreeMap<Option<AbsAddr>, BTreeSet<FlowValue>>, FlowError> {
    let kind = site_kind(&g.program, site)?;
    let mut out: BTreeMap<Option<AbsAddr>, BTreeSet<FlowValue>> = BTreeMap::new();
    for s in &g.nodes {
        match kind {
            SiteKind::Var => {
                let Some(a) = at_var(&s.control, site).and_then(|x| s.env.get(x)) else { continue };
                let values = out.entry(Some(a.clone())).or_default();
                for st in s.store.get(a).into_iter().flatten() {
                    if let Storable::Closure(v, _) = st {
                        values.insert(summarize(v));
                    }
                }
            }
            SiteKind::App => {
                if !matches!(s.control, Control::Return(_)) {
                    continue;
                }
                for st in s.store.get(&s.kont).into_iter().flatten() {
                    if let Storable::Kont(Frame::Fn { fun, site: l, .. }) = st {
                        if *l == site {
                            out.entry(None).or_default().insert(summarize(fun));
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

pub fn flows_at(g: &StateGraph, site: Label) -> Result<FlowFact, FlowError> {
    let kind = site_kind(&g.program, site)?;
    let values = flows_by_context(g, site)?.into_values().flatten().collect();
    Ok(FlowFact { site, kind, values })
}

/// Flow facts for every variable reference and application, in label order.
pub fn all_flows(g: &StateGraph) -> Vec<FlowFact> {
    g.program.labels().into_iter().filter_map(|l| flows_at(g, l).ok()).collect()
}

/// The same facts observed along one concrete run.
pub fn concrete_flows(trace: &[CeskState]) -> BTreeMap<Label, BTreeSet<FlowValue>> {
    let mut out: BTreeMap<Label, BTreeSet<FlowValue>> = BTreeMap::new();
    for s in trace {
        match &s.control {
            Control::Eval(e) => {
                if let ExprKind::Var(x) = e.kind() {
                    if let Some(Storable::Closure(v, _)) = s.env.get(x).and_then(|a: &Loc| s.store.get(a)) {
                        out.entry(e.label()).or_default().insert(summarize(v));
                    }
                }
            }
            Control::Return(_) => {
                if let Some(Storable::Kont(Frame::Fn { fun, site, .. })) = s.store.get(&s.kont) {
                    out.entry(*site).or_default().insert(summarize(fun));
                }
            }
        }
    }
    out
}
