//! The CEK machine for the pure core plus `if`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::domain::{restrict, Rule, StuckReason};
use crate::syntax::{check_closed, substitute, Expr, ExprKind, Label, Name, OpenTermError};

/// A value term closed by an environment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CekClosure {
    pub value: Expr,
    pub env: CekEnv,
}

pub type CekEnv = im::OrdMap<Name, Arc<CekClosure>>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CekKont {
    Mt,
    Ar { arg: Expr, env: CekEnv, next: Arc<CekKont>, site: Label },
    Fn { fun: Expr, env: CekEnv, next: Arc<CekKont> },
    If { then: Expr, els: Expr, env: CekEnv, next: Arc<CekKont> },
}

impl CekKont {
    /// Number of frames including `mt`.
    pub fn depth(&self) -> usize {
        let mut n = 1;
        let mut k = self;
        loop {
            k = match k {
                CekKont::Mt => return n,
                CekKont::Ar { next, .. } | CekKont::Fn { next, .. } | CekKont::If { next, .. } => next,
            };
            n += 1;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CekState {
    pub control: Expr,
    pub env: CekEnv,
    pub kont: Arc<CekKont>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CekStep {
    Next(CekState, Rule),
    Final(Expr, CekEnv),
    Stuck(StuckReason),
}

pub fn inject_cek(e: &Expr) -> Result<CekState, OpenTermError> {
    check_closed(e)?;
    Ok(CekState { control: e.clone(), env: CekEnv::new(), kont: Arc::new(CekKont::Mt) })
}

fn closure(value: &Expr, env: &CekEnv) -> Arc<CekClosure> {
    Arc::new(CekClosure { value: value.clone(), env: env.clone() })
}

pub fn step_cek(s: &CekState) -> CekStep {
    let CekState { control, env, kont } = s;
    match control.kind() {
        ExprKind::Var(x) => match env.get(x) {
            Some(c) => CekStep::Next(
                CekState { control: c.value.clone(), env: c.env.clone(), kont: kont.clone() },
                Rule::Lookup,
            ),
            None => CekStep::Stuck(StuckReason::Unbound(x.clone())),
        },
        ExprKind::App(f, a) => CekStep::Next(
            CekState {
                control: f.clone(),
                env: restrict(env, f.fv()),
                kont: Arc::new(CekKont::Ar {
                    arg: a.clone(),
                    env: restrict(env, a.fv()),
                    next: kont.clone(),
                    site: control.label(),
                }),
            },
            Rule::PushAr,
        ),
        ExprKind::If(c, t, e) => CekStep::Next(
            CekState {
                control: c.clone(),
                env: restrict(env, c.fv()),
                kont: Arc::new(CekKont::If {
                    then: t.clone(),
                    els: e.clone(),
                    env: restrict(env, t.fv().iter().chain(e.fv())),
                    next: kont.clone(),
                }),
            },
            Rule::PushIf,
        ),
        ExprKind::SetBang(..) | ExprKind::Callcc => CekStep::Stuck(StuckReason::Unsupported(control.label())),
        ExprKind::Lam(..) | ExprKind::False => match &**kont {
            CekKont::Mt => CekStep::Final(control.clone(), env.clone()),
            CekKont::Ar { arg, env: arg_env, next, .. } => CekStep::Next(
                CekState {
                    control: arg.clone(),
                    env: arg_env.clone(),
                    kont: Arc::new(CekKont::Fn { fun: control.clone(), env: env.clone(), next: next.clone() }),
                },
                Rule::SwapToFn,
            ),
            CekKont::Fn { fun, env: fun_env, next } => match fun.kind() {
                ExprKind::Lam(x, body) => CekStep::Next(
                    CekState {
                        control: body.clone(),
                        env: restrict(&fun_env.update(x.clone(), closure(control, env)), body.fv()),
                        kont: next.clone(),
                    },
                    Rule::Apply,
                ),
                _ => CekStep::Stuck(StuckReason::NotAFunction),
            },
            CekKont::If { then, els, env: if_env, next } => {
                let (branch, rule) =
                    if matches!(control.kind(), ExprKind::False) { (els, Rule::IfFalse) } else { (then, Rule::IfTrue) };
                CekStep::Next(
                    CekState { control: branch.clone(), env: restrict(if_env, branch.fv()), kont: next.clone() },
                    rule,
                )
            }
        },
    }
}

/// Every rule whose guard holds in `s`; a deterministic machine has at most
/// one. Written independently of [`step_cek`]'s match for auditing.
pub fn applicable_rules_cek(s: &CekState) -> Vec<Rule> {
    let is_value = matches!(s.control.kind(), ExprKind::Lam(..) | ExprKind::False);
    let guards = [
        (Rule::Lookup, matches!(s.control.kind(), ExprKind::Var(x) if s.env.contains_key(x))),
        (Rule::PushAr, matches!(s.control.kind(), ExprKind::App(..))),
        (Rule::PushIf, matches!(s.control.kind(), ExprKind::If(..))),
        (Rule::SwapToFn, is_value && matches!(&*s.kont, CekKont::Ar { .. })),
        (Rule::Apply, is_value && matches!(&*s.kont, CekKont::Fn { fun, .. } if fun.is_lam())),
        (
            Rule::IfTrue,
            is_value && !matches!(s.control.kind(), ExprKind::False) && matches!(&*s.kont, CekKont::If { .. }),
        ),
        (Rule::IfFalse, matches!(s.control.kind(), ExprKind::False) && matches!(&*s.kont, CekKont::If { .. })),
    ];
    guards.iter().filter(|(_, g)| *g).map(|(r, _)| *r).collect()
}

/// The closed term a closure represents.
pub fn unload_cek(value: &Expr, env: &CekEnv) -> Expr {
    let fv = crate::syntax::free_vars(value);
    let subst: BTreeMap<Name, Expr> =
        fv.into_iter().filter_map(|x| env.get(&x).map(|c| (x, unload_cek(&c.value, &c.env)))).collect();
    substitute(value, &subst)
}

fn plug(hole: Expr, kont: &CekKont) -> Expr {
    let mut term = hole;
    let mut k = kont;
    loop {
        match k {
            CekKont::Mt => return term,
            CekKont::Ar { arg, env, next, .. } => {
                term = Expr::app(term, unload_cek(arg, env));
                k = next;
            }
            CekKont::Fn { fun, env, next } => {
                term = Expr::app(unload_cek(fun, env), term);
                k = next;
            }
            CekKont::If { then, els, env, next } => {
                term = Expr::if_(term, unload_cek(then, env), unload_cek(els, env));
                k = next;
            }
        }
    }
}

/// The whole program a state represents: the closed control plugged into
/// the evaluation context its continuation stands for.
pub fn unload_cek_state(s: &CekState) -> Expr {
    plug(unload_cek(&s.control, &s.env), &s.kont)
}

impl fmt::Display for CekState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(cek {} ", self.control)?;
        fmt_env(&self.env, f)?;
        write!(f, " ")?;
        fmt_kont(&self.kont, f)?;
        write!(f, ")")
    }
}

fn fmt_env(env: &CekEnv, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    write!(f, "(")?;
    for (i, (x, c)) in env.iter().enumerate() {
        if i > 0 {
            write!(f, " ")?;
        }
        write!(f, "[{x} (clo {} ", c.value)?;
        fmt_env(&c.env, f)?;
        write!(f, ")]")?;
    }
    write!(f, ")")
}

fn fmt_kont(k: &CekKont, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match k {
        CekKont::Mt => write!(f, "(mt)"),
        CekKont::Ar { arg, env, next, .. } => {
            write!(f, "(ar {arg} ")?;
            fmt_env(env, f)?;
            write!(f, " ")?;
            fmt_kont(next, f)?;
            write!(f, ")")
        }
        CekKont::Fn { fun, env, next } => {
            write!(f, "(fn {fun} ")?;
            fmt_env(env, f)?;
            write!(f, " ")?;
            fmt_kont(next, f)?;
            write!(f, ")")
        }
        CekKont::If { then, els, env, next } => {
            write!(f, "(if {then} {els} ")?;
            fmt_env(env, f)?;
            write!(f, " ")?;
            fmt_kont(next, f)?;
            write!(f, ")")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{alpha_eq, parse};

    fn id(x: &str) -> Expr {
        Expr::lam(x, Expr::var(x)).relabel()
    }

    #[test]
    fn injection_is_empty_env_and_mt() {
        let e = parse("(λ (x) x)").unwrap();
        let s = inject_cek(&e).unwrap();
        assert_eq!(s.control, e);
        assert!(s.env.is_empty());
        assert_eq!(*s.kont, CekKont::Mt);
        let e = parse("((λ (x) x) #f)").unwrap();
        assert_eq!(inject_cek(&e).unwrap().control, e);
        assert!(inject_cek(&parse("(λ (x) y)").unwrap()).is_err());
    }

    #[test]
    fn application_pushes_argument_frame() {
        let e = parse("((λ (x) x) (λ (y) y))").unwrap();
        let s = inject_cek(&e).unwrap();
        let CekStep::Next(s1, Rule::PushAr) = step_cek(&s) else { panic!() };
        let ExprKind::App(f, a) = e.kind() else { panic!() };
        assert_eq!(&s1.control, f);
        match &*s1.kont {
            CekKont::Ar { arg, env, next, .. } => {
                assert_eq!(arg, a);
                assert!(env.is_empty());
                assert_eq!(**next, CekKont::Mt);
            }
            k => panic!("{k:?}"),
        }
    }

    #[test]
    fn variable_lookup_and_application() {
        let y = id("y");
        let env = CekEnv::new().update("x".into(), closure(&y, &CekEnv::new()));
        let s = CekState { control: Expr::var("x"), env, kont: Arc::new(CekKont::Mt) };
        let CekStep::Next(s1, Rule::Lookup) = step_cek(&s) else { panic!() };
        assert_eq!(s1.control, y);
        assert!(s1.env.is_empty());

        let x = id("x");
        let s = CekState {
            control: y.clone(),
            env: CekEnv::new(),
            kont: Arc::new(CekKont::Fn { fun: x.clone(), env: CekEnv::new(), next: Arc::new(CekKont::Mt) }),
        };
        let CekStep::Next(s2, Rule::Apply) = step_cek(&s) else { panic!() };
        let ExprKind::Lam(_, body) = x.kind() else { panic!() };
        assert_eq!(&s2.control, body);
        assert_eq!(s2.env.get("x").unwrap().value, y);
        assert_eq!(*s2.kont, CekKont::Mt);
    }

    #[test]
    fn unload_substitutes_environment() {
        assert!(alpha_eq(&unload_cek(&id("y"), &CekEnv::new()), &parse("(λ (y) y)").unwrap()));
        let v = Expr::lam("y", Expr::var("x")).relabel();
        let env = CekEnv::new().update("x".into(), closure(&id("z"), &CekEnv::new()));
        assert!(alpha_eq(&unload_cek(&v, &env), &parse("(λ (y) (λ (z) z))").unwrap()));
        assert_eq!(unload_cek(&Expr::lit_false(), &CekEnv::new()).to_string(), "#f");
    }

    #[test]
    fn applying_false_gets_stuck() {
        let s = CekState {
            control: id("y"),
            env: CekEnv::new(),
            kont: Arc::new(CekKont::Fn { fun: Expr::lit_false(), env: CekEnv::new(), next: Arc::new(CekKont::Mt) }),
        };
        assert_eq!(step_cek(&s), CekStep::Stuck(StuckReason::NotAFunction));
        assert!(applicable_rules_cek(&s).is_empty());
    }

    #[test]
    fn depth_counts_mt() {
        let k = CekKont::If {
            then: Expr::lit_false(),
            els: Expr::lit_false(),
            env: CekEnv::new(),
            next: Arc::new(CekKont::Mt),
        };
        assert_eq!(k.depth(), 2);
    }
}
