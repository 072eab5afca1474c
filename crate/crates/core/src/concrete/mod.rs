//! Concrete semantics: the reference reducer, the CEK machine and the
//! time-stamped CESK* machine, with a common fuel-bounded driver.

mod cek;
mod ceskt;
mod reference;

use std::fmt;

pub use cek::{
    applicable_rules_cek, inject_cek, step_cek, unload_cek, unload_cek_state, CekClosure, CekEnv, CekKont, CekState,
    CekStep,
};
pub use ceskt::{
    applicable_rules_ceskt, inject_ceskt, step_ceskt, unload_ceskt, unload_ceskt_state, Allocator, CallString,
    CeskState, CeskStep, CounterAllocator, JournalEntry, Loc, Stamp, Store, UnloadError, A0,
};
pub use reference::{eval_reference, RefError, RefOutcome};

use crate::domain::{MachineError, Rule, StuckReason};
use crate::gc::GcMode;
use crate::syntax::Expr;

/// How a fuel-bounded run ended.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    /// Reached a final state; the unloaded value.
    Value(Expr),
    /// Reached a final state whose value has no term form, such as a
    /// reified continuation.
    Opaque(UnloadError),
    Timeout,
    Stuck(StuckReason),
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Value(v) => write!(f, "{v}"),
            Outcome::Opaque(e) => write!(f, "opaque value ({e})"),
            Outcome::Timeout => write!(f, "timeout"),
            Outcome::Stuck(r) => write!(f, "stuck ({r})"),
        }
    }
}

/// A finished run: every visited state, in order, and the rule taken out of
/// each non-final one.
#[derive(Clone, Debug)]
pub struct Run<S> {
    pub outcome: Outcome,
    pub trace: Vec<S>,
    pub rules: Vec<Rule>,
}

impl<S> Run<S> {
    /// Number of transitions taken.
    pub fn steps(&self) -> usize {
        self.rules.len()
    }
}

pub fn run_cek(e: &Expr, fuel: usize) -> Result<Run<CekState>, MachineError> {
    let mut s = inject_cek(e)?;
    let mut trace = Vec::new();
    let mut rules = Vec::new();
    let outcome = loop {
        let step = step_cek(&s);
        trace.push(s);
        match step {
            CekStep::Final(v, env) => break Outcome::Value(unload_cek(&v, &env)),
            CekStep::Stuck(r) => break Outcome::Stuck(r),
            CekStep::Next(_, _) if rules.len() == fuel => break Outcome::Timeout,
            CekStep::Next(n, rule) => {
                rules.push(rule);
                s = n;
            }
        }
    };
    Ok(Run { outcome, trace, rules })
}

/// Runs the time-stamped machine; with [`GcMode::Free`] every step is
/// followed by collection.
pub fn run_ceskt(e: &Expr, fuel: usize, alloc: &dyn Allocator, gc: GcMode) -> Result<Run<CeskState>, MachineError> {
    let mut s = inject_ceskt(e)?;
    let mut trace = Vec::new();
    let mut rules = Vec::new();
    let outcome = loop {
        let step = match gc {
            GcMode::None => step_ceskt(&s, alloc)?,
            GcMode::Free => crate::gc::gc_step_ceskt(&s, alloc)?,
        };
        trace.push(s);
        match step {
            CeskStep::Final { value, env, store } => {
                break match unload_ceskt(&value, &env, &store) {
                    Ok(v) => Outcome::Value(v),
                    Err(err) => Outcome::Opaque(err),
                }
            }
            CeskStep::Stuck(r) => break Outcome::Stuck(r),
            CeskStep::Next(..) if rules.len() == fuel => break Outcome::Timeout,
            CeskStep::Next(n, rule) => {
                rules.push(rule);
                s = n;
            }
        }
    };
    Ok(Run { outcome, trace, rules })
}

/// Which machine [`run_machine`] drives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Machine {
    Cek,
    /// The time-stamped machine with the counter allocator.
    Cesk(GcMode),
}

/// A run of either machine, for callers that only need the outcome and a
/// printable trace.
#[derive(Clone, Debug)]
pub enum MachineRun {
    Cek(Run<CekState>),
    Cesk(Run<CeskState>),
}

impl MachineRun {
    pub fn outcome(&self) -> &Outcome {
        match self {
            MachineRun::Cek(r) => &r.outcome,
            MachineRun::Cesk(r) => &r.outcome,
        }
    }

    pub fn steps(&self) -> usize {
        match self {
            MachineRun::Cek(r) => r.steps(),
            MachineRun::Cesk(r) => r.steps(),
        }
    }

    pub fn trace_len(&self) -> usize {
        match self {
            MachineRun::Cek(r) => r.trace.len(),
            MachineRun::Cesk(r) => r.trace.len(),
        }
    }

    /// One canonical s-expression per state.
    pub fn trace_lines(&self) -> Vec<String> {
        match self {
            MachineRun::Cek(r) => r.trace.iter().map(ToString::to_string).collect(),
            MachineRun::Cesk(r) => r.trace.iter().map(ToString::to_string).collect(),
        }
    }
}

pub fn run_machine(e: &Expr, machine: Machine, fuel: usize) -> Result<MachineRun, MachineError> {
    Ok(match machine {
        Machine::Cek => MachineRun::Cek(run_cek(e, fuel)?),
        Machine::Cesk(gc) => MachineRun::Cesk(run_ceskt(e, fuel, &CounterAllocator, gc)?),
    })
}
