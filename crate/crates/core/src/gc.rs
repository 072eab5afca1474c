//! Garbage collection for both store-passing machines: live locations, the
//! grey/black collection machine, and the step-then-collect composition.

use std::collections::BTreeSet;

use crate::abstract_machine::{AbsAddr, AbstractState, AbstractStore};
use crate::concrete::{CeskState, Loc, Store};
use crate::domain::{Control, Env, Frame, Storable, Value};
use crate::syntax::Name;

/// Read access to a store, concrete or abstract.
pub trait Heap<A> {
    /// Everything the store holds at `a`; `None` if `a` is unbound.
    fn contents(&self, a: &A) -> Option<Vec<&Storable<A>>>;

    /// Calls `f` on everything the store holds at `a`; false if `a` is
    /// unbound.
    fn for_each_content(&self, a: &A, f: &mut dyn FnMut(&Storable<A>)) -> bool;
}

impl Heap<Loc> for Store {
    fn contents(&self, a: &Loc) -> Option<Vec<&Storable<Loc>>> {
        self.get(a).map(|s| vec![s])
    }

    fn for_each_content(&self, a: &Loc, f: &mut dyn FnMut(&Storable<Loc>)) -> bool {
        self.get(a).map(f).is_some()
    }
}

impl Heap<AbsAddr> for AbstractStore {
    fn contents(&self, a: &AbsAddr) -> Option<Vec<&Storable<AbsAddr>>> {
        self.get(a).map(|set| set.iter().collect())
    }

    fn for_each_content(&self, a: &AbsAddr, f: &mut dyn FnMut(&Storable<AbsAddr>)) -> bool {
        self.get(a).map(|set| set.iter().for_each(f)).is_some()
    }
}

/// The addresses `env` gives to `names`.
fn env_locs<'n, A: Ord>(env: &Env<A>, names: impl IntoIterator<Item = &'n Name>, f: &mut impl FnMut(&A)) {
    names.into_iter().filter_map(|x| env.get(x)).for_each(f);
}

fn value_locs<A: Ord>(v: &Value<A>, env: &Env<A>, f: &mut impl FnMut(&A)) {
    match v {
        Value::Lam(e) => env_locs(env, e.fv(), f),
        Value::Cont(c) => f(c),
        Value::False | Value::Callcc => {}
    }
}

fn frame_locs<A: Ord>(k: &Frame<A>, f: &mut impl FnMut(&A)) {
    match k {
        Frame::Mt => {}
        Frame::Ar { arg, env, next, .. } => {
            env_locs(env, arg.fv(), f);
            f(next);
        }
        Frame::Fn { fun, env, next, .. } => {
            value_locs(fun, env, f);
            f(next);
        }
        Frame::If { then, els, env, next } => {
            env_locs(env, then.fv().iter().chain(els.fv()), f);
            f(next);
        }
        Frame::Set { target, next } => {
            f(target);
            f(next);
        }
    }
}

fn storable_locs<A: Ord>(s: &Storable<A>, f: &mut impl FnMut(&A)) {
    match s {
        Storable::Closure(v, env) => value_locs(v, env, f),
        Storable::Kont(k) => frame_locs(k, f),
    }
}

fn gather<A: Ord + Clone>(visit: impl FnOnce(&mut dyn FnMut(&A))) -> BTreeSet<A> {
    let mut out = BTreeSet::new();
    visit(&mut |a: &A| {
        out.insert(a.clone());
    });
    out
}

/// L(v, ρ): the environment restricted to fv(v), plus the frame address of a
/// reified continuation.
pub fn live_value<A: Ord + Clone>(v: &Value<A>, env: &Env<A>) -> BTreeSet<A> {
    gather(|f| value_locs(v, env, &mut |a| f(a)))
}

/// L(e, ρ) for either kind of control.
pub fn live_control<A: Ord + Clone>(c: &Control<A>, env: &Env<A>) -> BTreeSet<A> {
    match c {
        Control::Eval(e) => gather(|f| env_locs(env, e.fv(), &mut |a| f(a))),
        Control::Return(v) => live_value(v, env),
    }
}

/// One layer of a frame: its free-variable addresses and its `next`.
pub fn live_frame<A: Ord + Clone>(k: &Frame<A>) -> BTreeSet<A> {
    gather(|f| frame_locs(k, &mut |a| f(a)))
}

pub fn live_storable<A: Ord + Clone>(s: &Storable<A>) -> BTreeSet<A> {
    gather(|f| storable_locs(s, &mut |a| f(a)))
}

/// L(S): the union over a set of storables.
pub fn live_storables<'s, A: Ord + Clone + 's>(set: impl IntoIterator<Item = &'s Storable<A>>) -> BTreeSet<A> {
    set.into_iter().flat_map(live_storable).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("dangling address {0} during collection")]
pub struct DanglingError(pub String);

/// Grey/black collection machine state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GcState<A> {
    pub grey: BTreeSet<A>,
    pub black: BTreeSet<A>,
}

impl<A: Ord + Clone + std::fmt::Display> GcState<A> {
    pub fn new(grey: BTreeSet<A>, black: BTreeSet<A>) -> GcState<A> {
        let grey = grey.difference(&black).cloned().collect();
        GcState { grey, black }
    }

    pub fn is_done(&self) -> bool {
        self.grey.is_empty()
    }

    /// Blackens the grey address `a` and greys what its contents reach.
    pub fn visit(&mut self, heap: &impl Heap<A>, a: &A) -> Result<(), DanglingError> {
        assert!(self.grey.remove(a), "visiting a non-grey address");
        let contents = heap.contents(a).ok_or_else(|| DanglingError(a.to_string()))?;
        self.black.insert(a.clone());
        for b in live_storables(contents) {
            if !self.black.contains(&b) {
                self.grey.insert(b);
            }
        }
        Ok(())
    }
}

/// Runs the collection machine to completion, choosing the next grey
/// address with `pick`, and returns the black set.
pub fn gc_fixpoint_with<A: Ord + Clone + std::fmt::Display>(
    grey: BTreeSet<A>,
    black: BTreeSet<A>,
    heap: &impl Heap<A>,
    mut pick: impl FnMut(&BTreeSet<A>) -> A,
) -> Result<BTreeSet<A>, DanglingError> {
    let mut st = GcState::new(grey, black);
    while !st.is_done() {
        let a = pick(&st.grey);
        st.visit(heap, &a)?;
    }
    Ok(st.black)
}

/// The black set [`gc_fixpoint_with`] ends with, for any choice of grey
/// address. Greys are visited depth first from a stack.
pub fn gc_fixpoint<A: Ord + Clone + std::fmt::Display>(
    grey: BTreeSet<A>,
    mut black: BTreeSet<A>,
    heap: &impl Heap<A>,
) -> Result<BTreeSet<A>, DanglingError> {
    let mut stack: Vec<A> = grey.into_iter().filter(|a| !black.contains(a)).collect();
    while let Some(a) = stack.pop() {
        if black.contains(&a) {
            continue;
        }
        let bound = heap.for_each_content(&a, &mut |s| {
            storable_locs(s, &mut |b| {
                if !black.contains(b) {
                    stack.push(b.clone());
                }
            })
        });
        if !bound {
            return Err(DanglingError(a.to_string()));
        }
        black.insert(a);
    }
    Ok(black)
}

/// Everything reachable from a state: grey starts at L(e, ρ) ∪ L(σ(a)) and
/// black at {a}.
pub fn live_locs<A: Ord + Clone + std::fmt::Display>(
    control: &Control<A>,
    env: &Env<A>,
    kont: &A,
    heap: &impl Heap<A>,
) -> Result<BTreeSet<A>, DanglingError> {
    let kont_contents = heap.contents(kont).ok_or_else(|| DanglingError(kont.to_string()))?;
    let mut grey = live_control(control, env);
    grey.extend(live_storables(kont_contents));
    gc_fixpoint(grey, BTreeSet::from([kont.clone()]), heap)
}

/// Restricts the store of a state to its live addresses.
pub trait Collect: Sized {
    fn collect(&self) -> Result<Self, DanglingError>;
}

impl Collect for CeskState {
    fn collect(&self) -> Result<CeskState, DanglingError> {
        let live = live_locs(&self.control, &self.env, &self.kont, &self.store)?;
        Ok(CeskState { store: self.store.restrict(&live), ..self.clone() })
    }
}

impl Collect for AbstractState {
    fn collect(&self) -> Result<AbstractState, DanglingError> {
        let live = live_locs(&self.control, &self.env, &self.kont, &self.store)?;
        Ok(AbstractState { store: self.store.restrict(&live), ..self.clone() })
    }
}

pub fn collect<S: Collect>(s: &S) -> Result<S, DanglingError> {
    s.collect()
}

/// Whether a machine collects after every step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GcMode {
    None,
    #[default]
    Free,
}

impl GcMode {
    pub fn is_free(self) -> bool {
        self == GcMode::Free
    }
}

impl std::fmt::Display for GcMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GcMode::None => "none",
            GcMode::Free => "free",
        })
    }
}

impl std::str::FromStr for GcMode {
    type Err = String;

    fn from_str(s: &str) -> Result<GcMode, String> {
        match s {
            "none" => Ok(GcMode::None),
            "free" => Ok(GcMode::Free),
            other => Err(format!("unknown gc mode {other:?} (expected none or free)")),
        }
    }
}

/// The garbage-free concrete machine: one step, then collection.
pub fn gc_step_ceskt(
    s: &CeskState,
    alloc: &dyn crate::concrete::Allocator,
) -> Result<crate::concrete::CeskStep, crate::domain::MachineError> {
    use crate::concrete::CeskStep;
    Ok(match crate::concrete::step_ceskt(s, alloc)? {
        CeskStep::Next(n, rule) => {
            CeskStep::Next(collect(&n).map_err(|e| crate::domain::MachineError::Dangling(e.0))?, rule)
        }
        other => other,
    })
}

/// The abstract-garbage-free machine: every successor is collected.
pub fn gc_step_abstract(
    s: &AbstractState,
    policy: &dyn crate::abstract_machine::Policy,
) -> Result<crate::abstract_machine::Successors, crate::domain::MachineError> {
    let mut out = crate::abstract_machine::abs_step(s, policy)?;
    for (st, _) in out.states.iter_mut() {
        *st = collect(st).map_err(|e| crate::domain::MachineError::Dangling(e.0))?;
    }
    out.states.sort();
    out.states.dedup();
    Ok(out)
}
