//! Machine components shared by the concrete and abstract store-passing
//! machines. Everything is generic over the address type so that the two
//! machines (and the abstraction map between them) use one vocabulary.

use std::collections::BTreeSet;
use std::fmt;

use crate::syntax::{free_vars, Expr, ExprKind, Label, Name};

/// Variable → address. Persistent so that states share structure.
pub type Env<A> = im::OrdMap<Name, A>;

/// Denotable values: functions, `#f`, `callcc`, and reified continuations
/// (represented by the address of their frame).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value<A> {
    /// Holds the whole λ node.
    Lam(Expr),
    False,
    Callcc,
    Cont(A),
}

impl<A> Value<A> {
    /// The value denoted by a value expression, if it is one.
    pub fn of_expr(e: &Expr) -> Option<Value<A>> {
        match e.kind() {
            ExprKind::Lam(..) => Some(Value::Lam(e.clone())),
            ExprKind::False => Some(Value::False),
            ExprKind::Callcc => Some(Value::Callcc),
            _ => None,
        }
    }

    pub fn is_false(&self) -> bool {
        matches!(self, Value::False)
    }

    /// Free variables of the value term; only λ can have any.
    pub fn free_vars(&self) -> BTreeSet<Name> {
        match self {
            Value::Lam(e) => free_vars(e),
            _ => BTreeSet::new(),
        }
    }

    pub fn try_map<B, E>(&self, f: &mut impl FnMut(&A) -> Result<B, E>) -> Result<Value<B>, E> {
        Ok(match self {
            Value::Lam(e) => Value::Lam(e.clone()),
            Value::False => Value::False,
            Value::Callcc => Value::Callcc,
            Value::Cont(a) => Value::Cont(f(a)?),
        })
    }
}

impl<A: fmt::Display> fmt::Display for Value<A> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Lam(e) => write!(f, "{e}"),
            Value::False => write!(f, "#f"),
            Value::Callcc => write!(f, "callcc"),
            Value::Cont(a) => write!(f, "(cont {a})"),
        }
    }
}

/// The control string: an expression still to evaluate, or a value being
/// returned to the current continuation.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Control<A> {
    Eval(Expr),
    Return(Value<A>),
}

impl<A> Control<A> {
    /// Value expressions go straight to return mode.
    pub fn of_expr(e: &Expr) -> Control<A> {
        match Value::of_expr(e) {
            Some(v) => Control::Return(v),
            None => Control::Eval(e.clone()),
        }
    }

    pub fn free_vars(&self) -> BTreeSet<Name> {
        match self {
            Control::Eval(e) => free_vars(e),
            Control::Return(v) => v.free_vars(),
        }
    }

    pub fn try_map<B, E>(&self, f: &mut impl FnMut(&A) -> Result<B, E>) -> Result<Control<B>, E> {
        Ok(match self {
            Control::Eval(e) => Control::Eval(e.clone()),
            Control::Return(v) => Control::Return(v.try_map(f)?),
        })
    }

    /// Label of the control expression (value or not), if it has one.
    pub fn label(&self) -> Option<Label> {
        match self {
            Control::Eval(e) | Control::Return(Value::Lam(e)) => Some(e.label()),
            _ => None,
        }
    }
}

impl<A: fmt::Display> fmt::Display for Control<A> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Control::Eval(e) => write!(f, "(ev {e})"),
            Control::Return(v) => write!(f, "(ret {v})"),
        }
    }
}

/// Store-allocated continuation frames. `next` points at the rest of the
/// stack. Application frames remember the call-site label for contours.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Frame<A> {
    Mt,
    Ar { arg: Expr, env: Env<A>, next: A, site: Label },
    Fn { fun: Value<A>, env: Env<A>, next: A, site: Label },
    If { then: Expr, els: Expr, env: Env<A>, next: A },
    Set { target: A, next: A },
}

impl<A> Frame<A> {
    pub fn next(&self) -> Option<&A> {
        match self {
            Frame::Mt => None,
            Frame::Ar { next, .. } | Frame::Fn { next, .. } | Frame::If { next, .. } | Frame::Set { next, .. } => {
                Some(next)
            }
        }
    }

    pub fn try_map<B: Clone, E>(&self, f: &mut impl FnMut(&A) -> Result<B, E>) -> Result<Frame<B>, E> {
        Ok(match self {
            Frame::Mt => Frame::Mt,
            Frame::Ar { arg, env, next, site } => {
                Frame::Ar { arg: arg.clone(), env: map_env(env, f)?, next: f(next)?, site: *site }
            }
            Frame::Fn { fun, env, next, site } => {
                Frame::Fn { fun: fun.try_map(f)?, env: map_env(env, f)?, next: f(next)?, site: *site }
            }
            Frame::If { then, els, env, next } => {
                Frame::If { then: then.clone(), els: els.clone(), env: map_env(env, f)?, next: f(next)? }
            }
            Frame::Set { target, next } => Frame::Set { target: f(target)?, next: f(next)? },
        })
    }
}

impl<A: fmt::Display> fmt::Display for Frame<A> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Frame::Mt => write!(f, "(mt)"),
            Frame::Ar { arg, env, next, site } => {
                write!(f, "(ar {arg} {} {next} {site})", DisplayEnv(env))
            }
            Frame::Fn { fun, env, next, site } => {
                write!(f, "(fn {fun} {} {next} {site})", DisplayEnv(env))
            }
            Frame::If { then, els, env, next } => {
                write!(f, "(if {then} {els} {} {next})", DisplayEnv(env))
            }
            Frame::Set { target, next } => write!(f, "(set {target} {next})"),
        }
    }
}

/// What a store cell holds: a closure (value plus environment) or a frame.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Storable<A> {
    Closure(Value<A>, Env<A>),
    Kont(Frame<A>),
}

impl<A: Clone> Storable<A> {
    pub fn try_map<B: Clone, E>(&self, f: &mut impl FnMut(&A) -> Result<B, E>) -> Result<Storable<B>, E> {
        Ok(match self {
            Storable::Closure(v, env) => Storable::Closure(v.try_map(f)?, map_env(env, f)?),
            Storable::Kont(k) => Storable::Kont(k.try_map(f)?),
        })
    }
}

impl<A: fmt::Display> fmt::Display for Storable<A> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Storable::Closure(v, env) => write!(f, "(clo {v} {})", DisplayEnv(env)),
            Storable::Kont(k) => write!(f, "{k}"),
        }
    }
}

pub fn map_env<A, B: Clone, E>(env: &Env<A>, f: &mut impl FnMut(&A) -> Result<B, E>) -> Result<Env<B>, E> {
    let mut out = Env::new();
    for (x, a) in env.iter() {
        out.insert(x.clone(), f(a)?);
    }
    Ok(out)
}

/// Canonical s-expression rendering of an environment.
pub struct DisplayEnv<'a, A>(pub &'a Env<A>);

impl<A: fmt::Display> fmt::Display for DisplayEnv<'_, A> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, (x, a)) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "[{x} {a}]")?;
        }
        write!(f, ")")
    }
}

/// Why an address was allocated. Recorded by the concrete machine and used
/// by the abstract allocator as the allocation-site tag.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Binding(Name),
    /// A frame pushed while evaluating the expression with this label.
    Kont(Label),
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Binding(x) => write!(f, "{x}"),
            Role::Kont(l) => write!(f, "k{l}"),
        }
    }
}

/// Transition rules of the store-passing machines, used for tracing and
/// for the one-rule-per-state audit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rule {
    Lookup,
    PushAr,
    PushIf,
    PushSet,
    SwapToFn,
    Apply,
    IfTrue,
    IfFalse,
    SetApply,
    CallccClosure,
    CallccCont,
    ContApply,
}

/// The call site of a transition, when it enters a function body. Both the
/// concrete and the abstract clocks advance their contour only here.
pub fn call_site<A>(control: &Control<A>, kont: Option<&Frame<A>>) -> Option<Label> {
    match (control, kont) {
        (Control::Return(_), Some(Frame::Fn { fun: Value::Lam(_), site, .. })) => Some(*site),
        (Control::Return(Value::Lam(_)), Some(Frame::Fn { fun: Value::Callcc, site, .. })) => Some(*site),
        _ => None,
    }
}

/// Why a machine cannot take another step from a non-final state.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StuckReason {
    /// `#f` (or `callcc` applied to a non-function) in operator position.
    NotAFunction,
    Unbound(Name),
    /// A form the machine does not support, e.g. `set!` on the CEK machine.
    Unsupported(Label),
}

impl fmt::Display for StuckReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StuckReason::NotAFunction => write!(f, "applied a non-function"),
            StuckReason::Unbound(x) => write!(f, "unbound variable {x}"),
            StuckReason::Unsupported(l) => write!(f, "unsupported form at label {l}"),
        }
    }
}

/// Internal machine errors: malformed states that a well-formed run never
/// produces. Stuck states are ordinary results, not errors.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum MachineError {
    #[error(transparent)]
    Open(#[from] crate::syntax::OpenTermError),
    #[error("internal error: dangling address {0}")]
    Dangling(String),
    #[error("internal error: address {addr} does not hold a {expected}")]
    WrongKind { addr: String, expected: &'static str },
    #[error("internal error: value expression {0} in evaluation position")]
    UnnormalizedControl(Expr),
}

/// `env` restricted to `names`. Names that `env` does not bind are skipped.
pub fn restrict<'n, V: Clone>(
    env: &im::OrdMap<Name, V>,
    names: impl IntoIterator<Item = &'n Name>,
) -> im::OrdMap<Name, V> {
    let mut out = im::OrdMap::new();
    for x in names {
        if let Some(v) = env.get(x) {
            out.insert(x.clone(), v.clone());
        }
    }
    if out.len() == env.len() {
        return env.clone();
    }
    out
}
