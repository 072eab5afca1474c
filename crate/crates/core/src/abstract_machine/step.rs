use super::{AbsAddr, AbsStorable, AbstractState, AbstractStore, Policy, Time};
use crate::domain::{restrict, Control, Env, Frame, MachineError, Role, Rule, Storable, StuckReason, Value};
use crate::syntax::{Expr, ExprKind};

/// All successors of an abstract state, plus the branches that ended.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Successors {
    /// Sorted and free of duplicates.
    pub states: Vec<(AbstractState, Rule)>,
    /// Branches with no applicable rule, such as `#f` in operator position.
    pub stuck: Vec<StuckReason>,
    /// Branches that returned a value to `mt`.
    pub finals: usize,
}

impl Successors {
    pub fn is_final(&self) -> bool {
        self.finals > 0
    }
}

struct Builder<'a> {
    s: &'a AbstractState,
    policy: &'a dyn Policy,
    out: Successors,
}

impl Builder<'_> {
    fn push(
        &mut self,
        control: Control<AbsAddr>,
        env: Env<AbsAddr>,
        store: AbstractStore,
        kont: AbsAddr,
        time: Time,
        rule: Rule,
    ) {
        self.out.states.push((AbstractState { control, env, store, kont, time }, rule));
    }

    /// Moves to evaluating `e`, with the environment cut down to fv(e).
    fn enter(&mut self, e: &Expr, env: &Env<AbsAddr>, store: AbstractStore, kont: AbsAddr, time: Time, rule: Rule) {
        self.push(Control::of_expr(e), restrict(env, e.fv()), store, kont, time, rule);
    }

    fn eval(&mut self, e: &Expr) {
        let s = self.s;
        let (frame, role, inner, rule) = match e.kind() {
            ExprKind::Var(x) => {
                let Some(a) = s.env.get(x) else {
                    self.out.stuck.push(StuckReason::Unbound(x.clone()));
                    return;
                };
                let time = self.policy.tick(s, None);
                for st in s.store.get(a).into_iter().flatten() {
                    if let Storable::Closure(v, env) = st {
                        self.push(
                            Control::Return(v.clone()),
                            env.clone(),
                            s.store.clone(),
                            s.kont.clone(),
                            time.clone(),
                            Rule::Lookup,
                        );
                    }
                }
                return;
            }
            ExprKind::App(f, arg) => (
                Frame::Ar { arg: arg.clone(), env: restrict(&s.env, arg.fv()), next: s.kont.clone(), site: e.label() },
                Role::Kont(f.label()),
                f,
                Rule::PushAr,
            ),
            ExprKind::If(c, t, f) => (
                Frame::If {
                    then: t.clone(),
                    els: f.clone(),
                    env: restrict(&s.env, t.fv().iter().chain(f.fv())),
                    next: s.kont.clone(),
                },
                Role::Kont(c.label()),
                c,
                Rule::PushIf,
            ),
            ExprKind::SetBang(x, rhs) => {
                let Some(target) = s.env.get(x) else {
                    self.out.stuck.push(StuckReason::Unbound(x.clone()));
                    return;
                };
                (
                    Frame::Set { target: target.clone(), next: s.kont.clone() },
                    Role::Kont(rhs.label()),
                    rhs,
                    Rule::PushSet,
                )
            }
            ExprKind::Lam(..) | ExprKind::False | ExprKind::Callcc => unreachable!("checked by abs_step"),
        };
        let b = self.policy.alloc(s, None, &role);
        let u = self.policy.tick(s, None);
        let store = s.store.join(b.clone(), Storable::Kont(frame));
        self.enter(inner, &s.env, store, b, u, rule);
    }

    fn ret(&mut self, v: &Value<AbsAddr>, kont: &Frame<AbsAddr>) {
        let s = self.s;
        let policy = self.policy;
        let u = || policy.tick(s, Some(kont));
        let bind = |x| policy.alloc(s, Some(kont), &Role::Binding(x));
        match kont {
            Frame::Mt => self.out.finals += 1,
            Frame::Ar { arg, env, next: c, site } => {
                let b = policy.alloc(s, Some(kont), &Role::Kont(arg.label()));
                let frame = Frame::Fn { fun: v.clone(), env: s.env.clone(), next: c.clone(), site: *site };
                let store = s.store.join(b.clone(), Storable::Kont(frame));
                self.enter(arg, env, store, b, u(), Rule::SwapToFn);
            }
            Frame::Fn { fun, env, next: c, .. } => match (fun, v) {
                (Value::Lam(lam), _) => {
                    let ExprKind::Lam(x, body) = lam.kind() else { unreachable!() };
                    let b = bind(x.clone());
                    let store = s.store.join(b.clone(), Storable::Closure(v.clone(), s.env.clone()));
                    self.enter(body, &env.update(x.clone(), b), store, c.clone(), u(), Rule::Apply);
                }
                (Value::Callcc, Value::Lam(lam)) => {
                    let ExprKind::Lam(x, body) = lam.kind() else { unreachable!() };
                    let b = bind(x.clone());
                    let store = s.store.join(b.clone(), Storable::Closure(Value::Cont(c.clone()), Env::new()));
                    self.enter(body, &s.env.update(x.clone(), b), store, c.clone(), u(), Rule::CallccClosure);
                }
                (Value::Callcc, Value::Cont(target)) => self.push(
                    Control::Return(Value::Cont(c.clone())),
                    Env::new(),
                    s.store.clone(),
                    target.clone(),
                    u(),
                    Rule::CallccCont,
                ),
                (Value::Cont(target), _) => self.push(
                    Control::Return(v.clone()),
                    s.env.clone(),
                    s.store.clone(),
                    target.clone(),
                    u(),
                    Rule::ContApply,
                ),
                _ => self.out.stuck.push(StuckReason::NotAFunction),
            },
            Frame::If { then, els, env, next: c } => {
                let (branch, rule) = if v.is_false() { (els, Rule::IfFalse) } else { (then, Rule::IfTrue) };
                self.enter(branch, env, s.store.clone(), c.clone(), u(), rule);
            }
            Frame::Set { target, next: c } => {
                let time = u();
                let store = s.store.join(target.clone(), Storable::Closure(v.clone(), s.env.clone()));
                for old in s.store.get(target).into_iter().flatten() {
                    if let Storable::Closure(old, old_env) = old {
                        self.push(
                            Control::Return(old.clone()),
                            old_env.clone(),
                            store.clone(),
                            c.clone(),
                            time.clone(),
                            Rule::SetApply,
                        );
                    }
                }
            }
        }
    }
}

/// Every successor of `s`: one per continuation frame at the continuation
/// address and, for lookups and assignments, one per value at the address.
pub fn abs_step(s: &AbstractState, policy: &dyn Policy) -> Result<Successors, MachineError> {
    let mut b = Builder { s, policy, out: Successors::default() };
    match &s.control {
        Control::Eval(e) if e.is_value() => return Err(MachineError::UnnormalizedControl(e.clone())),
        Control::Eval(e) => b.eval(e),
        Control::Return(v) => {
            let frames = s.store.get(&s.kont).ok_or_else(|| MachineError::Dangling(s.kont.to_string()))?;
            for st in frames {
                if let AbsStorable::Kont(k) = st {
                    b.ret(v, k);
                }
            }
        }
    }
    let mut out = b.out;
    out.states.sort();
    out.states.dedup();
    Ok(out)
}
