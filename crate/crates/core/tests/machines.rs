use std::collections::BTreeSet;
use std::sync::Arc;

use im::ordmap::DiffItem;

use aam_core::concrete::{
    applicable_rules_cek, applicable_rules_ceskt, inject_cek, inject_ceskt, run_cek, run_ceskt, step_ceskt, unload_cek,
    unload_ceskt, CekClosure, CekEnv, CekKont, CekState, CeskState, CeskStep, CounterAllocator, Loc, Outcome, Stamp,
    Store, UnloadError, A0,
};
use aam_core::corpus;
use aam_core::domain::{Control, Env, Frame, Role, Rule, Storable, Value};
use aam_core::gc::GcMode;
use aam_core::syntax::{alpha_eq, free_vars, parse, Expr, Name};

const FUEL: usize = 10_000;

fn names<V>(env: &im::OrdMap<Name, V>) -> BTreeSet<Name> {
    env.keys().cloned().collect()
}

fn value_fv(v: &Value<Loc>) -> BTreeSet<Name> {
    v.free_vars()
}

fn check_frame_envs(f: &Frame<Loc>, what: &str) {
    let (env, expected): (&Env<Loc>, BTreeSet<Name>) = match f {
        Frame::Mt | Frame::Set { .. } => return,
        Frame::Ar { arg, env, .. } => (env, free_vars(arg)),
        Frame::Fn { fun, env, .. } => (env, value_fv(fun)),
        Frame::If { then, els, env, .. } => (env, free_vars(then).union(&free_vars(els)).cloned().collect()),
    };
    assert_eq!(names(env), expected, "{what}: frame {f}");
}

/// Every environment in the state binds exactly the free variables of what
/// it closes, and every address it mentions is in the store.
fn check_ceskt_invariants(s: &CeskState, what: &str) {
    assert_eq!(names(&s.env), s.control.free_vars(), "{what}: state env");
    assert!(matches!(s.store.get(&s.kont), Some(Storable::Kont(_))), "{what}: kont address");
    for a in s.env.values() {
        assert!(s.store.contains(a), "{what}: env address {a}");
    }
    let cells: BTreeSet<Loc> = s.store.cells().keys().copied().collect();
    let journaled: BTreeSet<Loc> = s.store.journal().keys().copied().collect();
    assert!(cells.is_subset(&journaled), "{what}: journal misses an address");
    for (a, st) in s.store.cells() {
        match st {
            Storable::Closure(v, env) => assert_eq!(names(env), value_fv(v), "{what}: closure at {a}"),
            Storable::Kont(f) => {
                check_frame_envs(f, what);
                if let Some(n) = f.next() {
                    assert!(matches!(s.store.get(n), Some(Storable::Kont(_))), "{what}: next of {a}");
                }
            }
        }
    }
}

fn check_cek_env(env: &CekEnv, control: &Expr, what: &str) {
    assert_eq!(names(env), free_vars(control), "{what}: CEK env of {control}");
    for c in env.values() {
        check_cek_env(&c.env, &c.value, what);
    }
}

#[test]
fn cek_environments_bind_exactly_free_variables() {
    for p in corpus::pure().unwrap() {
        let run = run_cek(&p.expr, 2_000).unwrap();
        for (i, s) in run.trace.iter().enumerate() {
            check_cek_env(&s.env, &s.control, &format!("{} state {i}", p.name));
        }
    }
}

#[test]
fn ceskt_states_are_well_formed() {
    for p in corpus::all().unwrap() {
        for gc in [GcMode::None, GcMode::Free] {
            let run = run_ceskt(&p.expr, 400, &CounterAllocator, gc).unwrap();
            for (i, s) in run.trace.iter().enumerate() {
                check_ceskt_invariants(s, &format!("{} gc={gc} state {i}", p.name));
            }
        }
    }
}

#[test]
fn counter_allocator_is_fresh_and_monotone() {
    for p in corpus::all().unwrap() {
        let run = run_ceskt(&p.expr, FUEL, &CounterAllocator, GcMode::None).unwrap();
        for (i, pair) in run.trace.windows(2).enumerate() {
            let (before, after) = (&pair[0], &pair[1]);
            assert!(after.time.tick > before.time.tick, "{} step {i}: time did not advance", p.name);
            let mut fresh = Vec::new();
            for d in before.store.cells().diff(after.store.cells()) {
                match d {
                    DiffItem::Add(a, _) => fresh.push(*a),
                    DiffItem::Update { old: (a, _), .. } => {
                        assert_eq!(run.rules[i], Rule::SetApply, "{} step {i}: {a} overwritten", p.name)
                    }
                    DiffItem::Remove(a, _) => panic!("{} step {i}: {a} removed without collection", p.name),
                }
            }
            assert!(fresh.len() <= 1, "{} step {i}: {} new addresses", p.name, fresh.len());
            for a in fresh {
                assert!(!before.store.journal().contains_key(&a), "{} step {i}: {a} reused", p.name);
                let entry = after.store.entry(&a).unwrap();
                assert_eq!(entry.birth.tick, a.0, "{} step {i}: address is not its birth time", p.name);
                assert!(a.0 > before.store.cells().get_max().unwrap().0 .0, "{} step {i}", p.name);
            }
        }
    }
}

#[test]
fn set_changes_only_its_target() {
    for p in corpus::effects().unwrap() {
        let run = run_ceskt(&p.expr, FUEL, &CounterAllocator, GcMode::None).unwrap();
        for (i, rule) in run.rules.iter().enumerate() {
            if *rule != Rule::SetApply {
                continue;
            }
            let (before, after) = (&run.trace[i], &run.trace[i + 1]);
            let Some(Storable::Kont(Frame::Set { target, .. })) = before.store.get(&before.kont) else {
                panic!("{} step {i}: set! applied without a set frame", p.name);
            };
            assert_eq!(before.store.len(), after.store.len(), "{} step {i}", p.name);
            for (a, s) in before.store.cells() {
                if a != target {
                    assert_eq!(after.store.get(a), Some(s), "{} step {i}: {a} changed", p.name);
                }
            }
            let Control::Return(new) = &before.control else { panic!() };
            assert!(matches!(after.store.get(target), Some(Storable::Closure(v, _)) if v == new));
            let Some(Storable::Closure(old, _)) = before.store.get(target) else { panic!() };
            assert_eq!(
                after.control,
                Control::Return(old.clone()),
                "{} step {i}: set! must return the old value",
                p.name
            );
        }
    }
}

#[test]
fn exactly_one_rule_per_nonterminal_state() {
    for p in corpus::pure().unwrap() {
        let run = run_cek(&p.expr, 2_000).unwrap();
        for (i, s) in run.trace.iter().enumerate() {
            let rules = applicable_rules_cek(s);
            match run.rules.get(i) {
                Some(r) => assert_eq!(rules, vec![*r], "{} state {i}", p.name),
                None => assert!(rules.is_empty() || run.outcome == Outcome::Timeout, "{} final {rules:?}", p.name),
            }
        }
    }
    for p in corpus::all().unwrap() {
        let run = run_ceskt(&p.expr, 2_000, &CounterAllocator, GcMode::None).unwrap();
        for (i, s) in run.trace.iter().enumerate() {
            let rules = applicable_rules_ceskt(s);
            match run.rules.get(i) {
                Some(r) => assert_eq!(rules, vec![*r], "{} state {i}", p.name),
                None => assert!(rules.is_empty() || run.outcome == Outcome::Timeout, "{} final {rules:?}", p.name),
            }
        }
    }
}

#[test]
fn corpus_outcomes_match_headers() {
    for p in corpus::all().unwrap() {
        let expect = p.expect.as_ref().unwrap_or_else(|| panic!("{} has no header", p.name));
        for gc in [GcMode::None, GcMode::Free] {
            let run = run_ceskt(&p.expr, FUEL, &CounterAllocator, gc).unwrap();
            assert!(expect.matches(&run.outcome), "{} gc={gc}: expected {expect}, got {}", p.name, run.outcome);
        }
    }
}

#[test]
fn traces_are_reproducible() {
    for p in corpus::all().unwrap() {
        let a = run_ceskt(&p.expr, 500, &CounterAllocator, GcMode::Free).unwrap();
        let b = run_ceskt(&p.expr, 500, &CounterAllocator, GcMode::Free).unwrap();
        let lines =
            |r: &aam_core::concrete::Run<CeskState>| r.trace.iter().map(ToString::to_string).collect::<Vec<_>>();
        assert_eq!(lines(&a), lines(&b), "{}", p.name);
    }
}

#[test]
fn injections() {
    let e = parse("((λ (x) x) #f)").unwrap();
    let s = inject_cek(&e).unwrap();
    assert_eq!(s, CekState { control: e.clone(), env: CekEnv::new(), kont: Arc::new(CekKont::Mt) });
    let s = inject_ceskt(&e).unwrap();
    assert_eq!(s.kont, A0);
    assert_eq!(A0, Loc(0));
    assert_eq!(s.store.cells().keys().collect::<Vec<_>>(), vec![&A0]);
    assert_eq!(s.store.get(&A0), Some(&Storable::Kont(Frame::Mt)));
    assert_eq!(s.time, Stamp::default());
    let lam = parse("(λ (x) x)").unwrap();
    assert!(matches!(inject_ceskt(&lam).unwrap().control, Control::Return(Value::Lam(_))));
    assert!(inject_cek(&parse("(x x)").unwrap()).is_err());
    assert!(inject_ceskt(&parse("(λ (y) x)").unwrap()).is_err());
}

#[test]
fn application_rule_allocates_argument_frame() {
    let e = parse("((λ (x) x) (λ (y) y))").unwrap();
    let s = inject_ceskt(&e).unwrap();
    let CeskStep::Next(n, Rule::PushAr) = step_ceskt(&s, &CounterAllocator).unwrap() else { panic!() };
    let b = Loc(1);
    assert_eq!(n.kont, b);
    assert_eq!(n.time.tick, 1);
    let Some(Storable::Kont(Frame::Ar { arg, next, .. })) = n.store.get(&b) else { panic!() };
    assert!(alpha_eq(arg, &parse("(λ (y) y)").unwrap()));
    assert_eq!(*next, A0);
}

#[test]
fn set_returns_value_before_mutation() {
    let e = parse("((λ (x) (set! x #f)) (λ (y) y))").unwrap();
    let run = run_ceskt(&e, 100, &CounterAllocator, GcMode::None).unwrap();
    let i = run.rules.iter().position(|r| *r == Rule::SetApply).unwrap();
    let before = &run.trace[i];
    let after = &run.trace[i + 1];
    let Some(Storable::Kont(Frame::Set { target, .. })) = before.store.get(&before.kont) else { panic!() };
    let Control::Return(Value::Lam(old)) = &after.control else { panic!() };
    assert!(alpha_eq(old, &parse("(λ (y) y)").unwrap()));
    assert_eq!(after.store.get(target), Some(&Storable::Closure(Value::False, Env::new())));
}

#[test]
fn callcc_escape_aborts_into_mt() {
    let e = parse("(callcc (λ (k) (k (λ (y) y))))").unwrap();
    let run = run_ceskt(&e, 100, &CounterAllocator, GcMode::None).unwrap();
    assert!(matches!(&run.outcome, Outcome::Value(v) if alpha_eq(v, &parse("(λ (y) y)").unwrap())));
    assert!(run.rules.contains(&Rule::CallccClosure));
    assert!(run.rules.contains(&Rule::ContApply));
}

#[test]
fn unloading_examples() {
    assert_eq!(unload_ceskt(&Value::False, &Env::new(), &Store::new()).unwrap().to_string(), "#f");
    let body = parse("(λ (y) x)").unwrap();
    let id_z = parse("(λ (z) z)").unwrap();
    let a = Loc(7);
    let store = Store::new().allocate(
        a,
        Storable::Closure(Value::Lam(id_z.clone()), Env::new()),
        Role::Binding("x".into()),
        Stamp::default(),
    );
    let env: Env<Loc> = [(Name::from("x"), a)].into_iter().collect();
    let got = unload_ceskt(&Value::Lam(body.clone()), &env, &store).unwrap();
    assert!(alpha_eq(&got, &parse("(λ (y) (λ (z) z))").unwrap()));

    let cek_env: CekEnv =
        [(Name::from("x"), Arc::new(CekClosure { value: id_z, env: CekEnv::new() }))].into_iter().collect();
    assert!(alpha_eq(&unload_cek(&body, &cek_env), &got));

    // x is bound to a closure whose own x points back at the same cell
    let looping = Store::new().allocate(
        a,
        Storable::Closure(Value::Lam(body.clone()), env.clone()),
        Role::Binding("x".into()),
        Stamp::default(),
    );
    assert_eq!(unload_ceskt(&Value::Lam(body), &env, &looping), Err(UnloadError::Cycle(a)));
}

#[test]
fn machines_agree_on_effect_free_corpus_results() {
    for p in corpus::pure().unwrap() {
        let cek = run_cek(&p.expr, FUEL).unwrap();
        let cesk = run_ceskt(&p.expr, FUEL, &CounterAllocator, GcMode::None).unwrap();
        match (&cek.outcome, &cesk.outcome) {
            (Outcome::Value(a), Outcome::Value(b)) => assert!(alpha_eq(a, b), "{}", p.name),
            (a, b) => assert_eq!(a, b, "{}", p.name),
        }
    }
}
