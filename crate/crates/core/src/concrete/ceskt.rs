//! The time-stamped CESK* machine for the full language.
//!
//! The plain CESK* machine is the instance of this machine with
//! [`CounterAllocator`]; the two run in lock-step.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::domain::{
    call_site, restrict, Control, DisplayEnv, Env, Frame, MachineError, Role, Rule, Storable, StuckReason, Value,
};
use crate::syntax::{check_closed, substitute, Expr, ExprKind, Label, Name};

/// Concrete address.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Loc(pub u64);

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Call-site history, most recent first. Persistent cons list.
#[derive(Clone, Debug, Default)]
pub struct CallString(Option<Arc<(Label, CallString)>>);

impl CallString {
    pub fn push(&self, site: Label) -> CallString {
        CallString(Some(Arc::new((site, self.clone()))))
    }

    pub fn iter(&self) -> impl Iterator<Item = Label> + '_ {
        let mut cur = &self.0;
        std::iter::from_fn(move || {
            let cell = cur.as_ref()?;
            cur = &cell.1 .0;
            Some(cell.0)
        })
    }

    /// The `k` most recent call sites.
    pub fn prefix(&self, k: usize) -> Vec<Label> {
        self.iter().take(k).collect()
    }
}

impl PartialEq for CallString {
    fn eq(&self, other: &Self) -> bool {
        match (&self.0, &other.0) {
            (Some(a), Some(b)) if Arc::ptr_eq(a, b) => true,
            _ => self.iter().eq(other.iter()),
        }
    }
}

impl Eq for CallString {}

impl PartialOrd for CallString {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for CallString {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.iter().cmp(other.iter())
    }
}

/// Concrete time: a counter plus the (semantically inert) call history that
/// contour abstractions read.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct Stamp {
    pub tick: u64,
    pub calls: CallString,
}

impl fmt::Display for Stamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.tick)
    }
}

/// Allocation record of an address: why and when it was born.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JournalEntry {
    pub role: Role,
    pub birth: Stamp,
}

/// Concrete store with its allocation journal. The journal covers every
/// address in the store; collection drops both together.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Store {
    cells: im::OrdMap<Loc, Storable<Loc>>,
    journal: im::OrdMap<Loc, JournalEntry>,
}

impl Store {
    pub fn new() -> Store {
        Store::default()
    }

    pub fn get(&self, a: &Loc) -> Option<&Storable<Loc>> {
        self.cells.get(a)
    }

    pub fn contains(&self, a: &Loc) -> bool {
        self.cells.contains_key(a)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &im::OrdMap<Loc, Storable<Loc>> {
        &self.cells
    }

    pub fn journal(&self) -> &im::OrdMap<Loc, JournalEntry> {
        &self.journal
    }

    pub fn entry(&self, a: &Loc) -> Option<&JournalEntry> {
        self.journal.get(a)
    }

    /// Binds a freshly allocated address and journals it.
    pub fn allocate(&self, a: Loc, s: Storable<Loc>, role: Role, birth: Stamp) -> Store {
        Store { cells: self.cells.update(a, s), journal: self.journal.update(a, JournalEntry { role, birth }) }
    }

    /// Strong update of an existing cell.
    pub fn overwrite(&self, a: Loc, s: Storable<Loc>) -> Store {
        Store { cells: self.cells.update(a, s), journal: self.journal.clone() }
    }

    /// Keeps only the given addresses, in the cells and in the journal.
    pub fn restrict(&self, live: &std::collections::BTreeSet<Loc>) -> Store {
        let mut out = self.clone();
        for a in self.journal.keys().filter(|a| !live.contains(a)) {
            out.cells.remove(a);
            out.journal.remove(a);
        }
        out
    }

    /// Number of continuation frames in the store.
    pub fn kont_count(&self) -> usize {
        self.cells.values().filter(|s| matches!(s, Storable::Kont(_))).count()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CeskState {
    pub control: Control<Loc>,
    pub env: Env<Loc>,
    pub store: Store,
    pub kont: Loc,
    pub time: Stamp,
}

/// Supplies fresh addresses and advancing times.
///
/// Contract: `alloc` never returns an address in the store's domain and
/// `tick` is strictly greater than the current time.
pub trait Allocator {
    fn tick(&self, s: &CeskState, kont: Option<&Frame<Loc>>) -> Stamp;
    fn alloc(&self, s: &CeskState, kont: Option<&Frame<Loc>>) -> Loc;
}

/// `tick(t) = t + 1` and `alloc(t) = t + 1`, so the address of each
/// allocation is the time it happened. The call history grows on calls.
#[derive(Clone, Copy, Debug, Default)]
pub struct CounterAllocator;

impl Allocator for CounterAllocator {
    fn tick(&self, s: &CeskState, kont: Option<&Frame<Loc>>) -> Stamp {
        let calls = match call_site(&s.control, kont) {
            Some(site) => s.time.calls.push(site),
            None => s.time.calls.clone(),
        };
        Stamp { tick: s.time.tick + 1, calls }
    }

    fn alloc(&self, s: &CeskState, _kont: Option<&Frame<Loc>>) -> Loc {
        Loc(s.time.tick + 1)
    }
}

pub const A0: Loc = Loc(0);

pub fn inject_ceskt(e: &Expr) -> Result<CeskState, MachineError> {
    check_closed(e)?;
    let store = Store::new().allocate(A0, Storable::Kont(Frame::Mt), Role::Kont(e.label()), Stamp::default());
    Ok(CeskState { control: Control::of_expr(e), env: Env::new(), store, kont: A0, time: Stamp::default() })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CeskStep {
    Next(CeskState, Rule),
    Final { value: Value<Loc>, env: Env<Loc>, store: Store },
    Stuck(StuckReason),
}

fn dangling(a: &Loc) -> MachineError {
    MachineError::Dangling(a.to_string())
}

pub(crate) fn frame_at<'s>(store: &'s Store, a: &Loc) -> Result<&'s Frame<Loc>, MachineError> {
    match store.get(a) {
        Some(Storable::Kont(k)) => Ok(k),
        Some(_) => Err(MachineError::WrongKind { addr: a.to_string(), expected: "continuation" }),
        None => Err(dangling(a)),
    }
}

pub fn step_ceskt(s: &CeskState, alloc: &dyn Allocator) -> Result<CeskStep, MachineError> {
    let next =
        |control, env, store, kont, time, rule| Ok(CeskStep::Next(CeskState { control, env, store, kont, time }, rule));
    match &s.control {
        Control::Eval(e) => {
            let (frame, role, inner, rule) = match e.kind() {
                ExprKind::Var(x) => {
                    let Some(a) = s.env.get(x) else {
                        return Ok(CeskStep::Stuck(StuckReason::Unbound(x.clone())));
                    };
                    return match s.store.get(a) {
                        Some(Storable::Closure(v, env)) => next(
                            Control::Return(v.clone()),
                            env.clone(),
                            s.store.clone(),
                            s.kont,
                            alloc.tick(s, None),
                            Rule::Lookup,
                        ),
                        Some(_) => Err(MachineError::WrongKind { addr: a.to_string(), expected: "closure" }),
                        None => Err(dangling(a)),
                    };
                }
                ExprKind::App(f, arg) => (
                    Frame::Ar { arg: arg.clone(), env: restrict(&s.env, arg.fv()), next: s.kont, site: e.label() },
                    Role::Kont(f.label()),
                    f,
                    Rule::PushAr,
                ),
                ExprKind::If(c, t, f) => (
                    Frame::If {
                        then: t.clone(),
                        els: f.clone(),
                        env: restrict(&s.env, t.fv().iter().chain(f.fv())),
                        next: s.kont,
                    },
                    Role::Kont(c.label()),
                    c,
                    Rule::PushIf,
                ),
                ExprKind::SetBang(x, rhs) => {
                    let Some(target) = s.env.get(x) else {
                        return Ok(CeskStep::Stuck(StuckReason::Unbound(x.clone())));
                    };
                    (Frame::Set { target: *target, next: s.kont }, Role::Kont(rhs.label()), rhs, Rule::PushSet)
                }
                ExprKind::Lam(..) | ExprKind::False | ExprKind::Callcc => {
                    return Err(MachineError::UnnormalizedControl(e.clone()))
                }
            };
            let b = alloc.alloc(s, None);
            let u = alloc.tick(s, None);
            let store = s.store.allocate(b, Storable::Kont(frame), role, u.clone());
            next(Control::of_expr(inner), restrict(&s.env, inner.fv()), store, b, u, rule)
        }
        Control::Return(v) => {
            let kont = frame_at(&s.store, &s.kont)?;
            let u = || alloc.tick(s, Some(kont));
            let b = || alloc.alloc(s, Some(kont));
            match kont {
                Frame::Mt => Ok(CeskStep::Final { value: v.clone(), env: s.env.clone(), store: s.store.clone() }),
                Frame::Ar { arg, env, next: c, site } => {
                    let (b, u) = (b(), u());
                    let frame = Frame::Fn { fun: v.clone(), env: s.env.clone(), next: *c, site: *site };
                    let store = s.store.allocate(b, Storable::Kont(frame), Role::Kont(arg.label()), u.clone());
                    next(Control::of_expr(arg), env.clone(), store, b, u, Rule::SwapToFn)
                }
                Frame::Fn { fun, env, next: c, .. } => match (fun, v) {
                    (Value::Lam(lam), _) => {
                        let ExprKind::Lam(x, body) = lam.kind() else { unreachable!() };
                        let (b, u) = (b(), u());
                        let store = s.store.allocate(
                            b,
                            Storable::Closure(v.clone(), s.env.clone()),
                            Role::Binding(x.clone()),
                            u.clone(),
                        );
                        let env = restrict(&env.update(x.clone(), b), body.fv());
                        next(Control::of_expr(body), env, store, *c, u, Rule::Apply)
                    }
                    (Value::Callcc, Value::Lam(lam)) => {
                        let ExprKind::Lam(x, body) = lam.kind() else { unreachable!() };
                        let (b, u) = (b(), u());
                        let store = s.store.allocate(
                            b,
                            Storable::Closure(Value::Cont(*c), Env::new()),
                            Role::Binding(x.clone()),
                            u.clone(),
                        );
                        let env = restrict(&s.env.update(x.clone(), b), body.fv());
                        next(Control::of_expr(body), env, store, *c, u, Rule::CallccClosure)
                    }
                    (Value::Callcc, Value::Cont(target)) => next(
                        Control::Return(Value::Cont(*c)),
                        Env::new(),
                        s.store.clone(),
                        *target,
                        u(),
                        Rule::CallccCont,
                    ),
                    (Value::Cont(target), _) => {
                        next(Control::Return(v.clone()), s.env.clone(), s.store.clone(), *target, u(), Rule::ContApply)
                    }
                    _ => Ok(CeskStep::Stuck(StuckReason::NotAFunction)),
                },
                Frame::If { then, els, env, next: c } => {
                    let (branch, rule) = if v.is_false() { (els, Rule::IfFalse) } else { (then, Rule::IfTrue) };
                    next(Control::of_expr(branch), restrict(env, branch.fv()), s.store.clone(), *c, u(), rule)
                }
                Frame::Set { target, next: c } => match s.store.get(target) {
                    Some(Storable::Closure(old, old_env)) => {
                        let store = s.store.overwrite(*target, Storable::Closure(v.clone(), s.env.clone()));
                        next(Control::Return(old.clone()), old_env.clone(), store, *c, u(), Rule::SetApply)
                    }
                    Some(_) => Err(MachineError::WrongKind { addr: target.to_string(), expected: "closure" }),
                    None => Err(dangling(target)),
                },
            }
        }
    }
}

/// Every rule whose guard holds; see [`crate::concrete::applicable_rules_cek`].
pub fn applicable_rules_ceskt(s: &CeskState) -> Vec<Rule> {
    let mut out = Vec::new();
    match &s.control {
        Control::Eval(e) => {
            if matches!(e.kind(), ExprKind::Var(x) if s.env.get(x).is_some_and(|a| matches!(s.store.get(a), Some(Storable::Closure(..)))))
            {
                out.push(Rule::Lookup);
            }
            if matches!(e.kind(), ExprKind::App(..)) {
                out.push(Rule::PushAr);
            }
            if matches!(e.kind(), ExprKind::If(..)) {
                out.push(Rule::PushIf);
            }
            if matches!(e.kind(), ExprKind::SetBang(x, _) if s.env.contains_key(x)) {
                out.push(Rule::PushSet);
            }
        }
        Control::Return(v) => {
            let Some(Storable::Kont(k)) = s.store.get(&s.kont) else { return out };
            let guards = [
                (Rule::SwapToFn, matches!(k, Frame::Ar { .. })),
                (Rule::Apply, matches!(k, Frame::Fn { fun: Value::Lam(_), .. })),
                (Rule::CallccClosure, matches!(k, Frame::Fn { fun: Value::Callcc, .. }) && matches!(v, Value::Lam(_))),
                (Rule::CallccCont, matches!(k, Frame::Fn { fun: Value::Callcc, .. }) && matches!(v, Value::Cont(_))),
                (Rule::ContApply, matches!(k, Frame::Fn { fun: Value::Cont(_), .. })),
                (Rule::IfTrue, matches!(k, Frame::If { .. }) && !v.is_false()),
                (Rule::IfFalse, matches!(k, Frame::If { .. }) && v.is_false()),
                (
                    Rule::SetApply,
                    matches!(k, Frame::Set { target, .. } if matches!(s.store.get(target), Some(Storable::Closure(..)))),
                ),
            ];
            out.extend(guards.iter().filter(|(_, g)| *g).map(|(r, _)| *r));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum UnloadError {
    #[error("address {0} repeats on the unloading path")]
    Cycle(Loc),
    #[error("a continuation has no term representation")]
    Continuation,
    #[error("dangling address {0}")]
    Dangling(Loc),
}

fn unload_value(v: &Value<Loc>, env: &Env<Loc>, store: &Store, path: &mut Vec<Loc>) -> Result<Expr, UnloadError> {
    match v {
        Value::Lam(e) => unload_term(e, env, store, path),
        Value::False => Ok(Expr::lit_false()),
        Value::Callcc => Ok(Expr::callcc()),
        Value::Cont(_) => Err(UnloadError::Continuation),
    }
}

fn unload_term(e: &Expr, env: &Env<Loc>, store: &Store, path: &mut Vec<Loc>) -> Result<Expr, UnloadError> {
    let mut subst = BTreeMap::<Name, Expr>::new();
    for x in crate::syntax::free_vars(e) {
        let Some(a) = env.get(&x) else { continue };
        if path.contains(a) {
            return Err(UnloadError::Cycle(*a));
        }
        path.push(*a);
        let term = match store.get(a) {
            Some(Storable::Closure(v, env2)) => unload_value(v, env2, store, path)?,
            Some(Storable::Kont(_)) => return Err(UnloadError::Continuation),
            None => return Err(UnloadError::Dangling(*a)),
        };
        path.pop();
        subst.insert(x, term);
    }
    Ok(substitute(e, &subst))
}

/// The closed term a store-allocated closure represents.
pub fn unload_ceskt(v: &Value<Loc>, env: &Env<Loc>, store: &Store) -> Result<Expr, UnloadError> {
    unload_value(v, env, store, &mut Vec::new())
}

/// The whole program a state represents, following the continuation
/// pointer chain through the store.
pub fn unload_ceskt_state(s: &CeskState) -> Result<Expr, UnloadError> {
    let mut term = match &s.control {
        Control::Eval(e) => unload_term(e, &s.env, &s.store, &mut Vec::new())?,
        Control::Return(v) => unload_ceskt(v, &s.env, &s.store)?,
    };
    let mut a = s.kont;
    let mut seen = Vec::new();
    loop {
        if seen.contains(&a) {
            return Err(UnloadError::Cycle(a));
        }
        seen.push(a);
        let frame = match s.store.get(&a) {
            Some(Storable::Kont(k)) => k,
            _ => return Err(UnloadError::Dangling(a)),
        };
        let load = |e: &Expr, env: &Env<Loc>| unload_term(e, env, &s.store, &mut Vec::new());
        term = match frame {
            Frame::Mt => return Ok(term),
            Frame::Ar { arg, env, .. } => Expr::app(term, load(arg, env)?),
            Frame::Fn { fun, env, .. } => Expr::app(unload_ceskt(fun, env, &s.store)?, term),
            Frame::If { then, els, env, .. } => Expr::if_(term, load(then, env)?, load(els, env)?),
            Frame::Set { .. } => return Err(UnloadError::Continuation),
        };
        a = *frame.next().expect("non-mt frame");
    }
}

impl fmt::Display for CeskState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(cesk {} {} (", self.control, DisplayEnv(&self.env))?;
        for (i, (a, s)) in self.store.cells().iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "[{a} {s}]")?;
        }
        write!(f, ") {} {})", self.kont, self.time)
    }
}
