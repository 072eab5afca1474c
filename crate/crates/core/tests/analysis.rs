use std::collections::{BTreeMap, BTreeSet, VecDeque};

use aam_core::abstract_machine::{
    alpha_state, leq_state, policy_k_cfa, policy_zero_cfa, AbsAddr, AlphaTracker, Policy, PolicySpec, Time,
};
use aam_core::concrete::{inject_ceskt, run_ceskt, CounterAllocator, Outcome};
use aam_core::corpus;
use aam_core::domain::{Role, Storable};
use aam_core::engine::{
    all_flows, analyze, concrete_flows, flows_at, flows_by_context, parse_document, to_dot, to_json, AnalysisConfig,
    AnalysisError, FlowError, FlowValue, GraphDocument, SiteKind, StateGraph,
};
use aam_core::gc::GcMode;
use aam_core::syntax::{parse, Expr, ExprKind, Label};

const TWO_CALL_SITES: &str = "((λ (id) ((λ (a) ((λ (b) b) (id (λ (w) w)))) (id (λ (z) z)))) (λ (x) x))";
const MERGE: &str = "((λ (f) ((λ (u) (f #f)) (f (λ (z) z)))) (λ (x) x))";

fn lam_label(e: &Expr, param: &str) -> Label {
    e.preorder()
        .into_iter()
        .find(|n| matches!(n.kind(), ExprKind::Lam(x, _) if &**x == param))
        .map(Expr::label)
        .unwrap()
}

fn var_site(e: &Expr, x: &str) -> Label {
    let sites: Vec<Label> = e
        .preorder()
        .into_iter()
        .filter(|n| matches!(n.kind(), ExprKind::Var(y) if &**y == x))
        .map(Expr::label)
        .collect();
    assert_eq!(sites.len(), 1, "{x} occurs {} times", sites.len());
    sites[0]
}

fn graph(e: &Expr, policy: &dyn Policy, gc: GcMode) -> StateGraph {
    analyze(e, policy, &AnalysisConfig::with_gc(gc)).unwrap()
}

fn small_graph(e: &Expr, policy: &dyn Policy, gc: GcMode) -> Option<StateGraph> {
    let config = AnalysisConfig { node_cap: 20_000, ..AnalysisConfig::with_gc(gc) };
    match analyze(e, policy, &config) {
        Ok(g) => Some(g),
        Err(AnalysisError::CapExceeded { .. }) => None,
        Err(err) => panic!("{err}"),
    }
}

#[test]
fn single_binding_flows_one_value() {
    let e = parse("((λ (x) x) (λ (y) y))").unwrap();
    let g = graph(&e, &policy_zero_cfa(&e), GcMode::Free);
    let fact = flows_at(&g, var_site(&e, "x")).unwrap();
    assert_eq!(fact.kind, SiteKind::Var);
    assert_eq!(fact.values, BTreeSet::from([FlowValue::Lam(lam_label(&e, "y"))]));
    let app = flows_at(&g, e.label()).unwrap();
    assert_eq!(app.kind, SiteKind::App);
    assert_eq!(app.values, BTreeSet::from([FlowValue::Lam(lam_label(&e, "x"))]));
}

#[test]
fn zero_cfa_merges_both_call_sites() {
    let e = parse(TWO_CALL_SITES).unwrap();
    for gc in [GcMode::None, GcMode::Free] {
        let g = graph(&e, &policy_zero_cfa(&e), gc);
        let fact = flows_at(&g, var_site(&e, "x")).unwrap();
        let expected = BTreeSet::from([FlowValue::Lam(lam_label(&e, "z")), FlowValue::Lam(lam_label(&e, "w"))]);
        assert_eq!(fact.values, expected, "gc={gc}");
    }
}

#[test]
fn one_cfa_separates_call_sites() {
    let e = parse(TWO_CALL_SITES).unwrap();
    let g = graph(&e, &policy_k_cfa(&e, 1), GcMode::Free);
    let by_context = flows_by_context(&g, var_site(&e, "x")).unwrap();
    let values: BTreeSet<BTreeSet<FlowValue>> = by_context.values().cloned().collect();
    let expected = BTreeSet::from([
        BTreeSet::from([FlowValue::Lam(lam_label(&e, "z"))]),
        BTreeSet::from([FlowValue::Lam(lam_label(&e, "w"))]),
    ]);
    assert_eq!(values, expected);
    let contours: BTreeSet<&Time> = by_context.keys().map(|a| &a.as_ref().unwrap().time).collect();
    assert_eq!(contours.len(), 2);
}

#[test]
fn flow_queries_reject_non_sites() {
    let e = parse("((λ (x) x) #f)").unwrap();
    let g = graph(&e, &policy_zero_cfa(&e), GcMode::Free);
    assert_eq!(flows_at(&g, Label(99)), Err(FlowError::UnknownLabel(Label(99))));
    assert_eq!(flows_at(&g, lam_label(&e, "x")), Err(FlowError::NotASite(lam_label(&e, "x"))));
    let sites: Vec<Label> = all_flows(&g).iter().map(|f| f.site).collect();
    assert_eq!(sites, vec![e.label(), var_site(&e, "x")]);
}

#[test]
fn alpha_merges_two_bindings_of_one_variable() {
    let e = parse(MERGE).unwrap();
    let run = run_ceskt(&e, 1000, &CounterAllocator, GcMode::None).unwrap();
    let last = run.trace.last().unwrap();
    let bindings = last.store.journal().values().filter(|j| j.role == Role::Binding("x".into())).count();
    assert_eq!(bindings, 2);
    let zero = policy_zero_cfa(&e);
    let a = alpha_state(last, &zero).unwrap();
    let x = AbsAddr::new(Role::Binding("x".into()), Time::empty());
    let held: BTreeSet<String> = a.store.get(&x).unwrap().iter().map(ToString::to_string).collect();
    assert_eq!(held.len(), 2, "{held:?}");
    assert!(a.store.get(&x).unwrap().iter().any(|s| matches!(s, Storable::Closure(aam_core::domain::Value::False, _))));

    let one = policy_k_cfa(&e, 1);
    let a1 = alpha_state(last, &one).unwrap();
    let xs: Vec<&AbsAddr> = a1.store.iter().map(|(a, _)| a).filter(|a| a.role == Role::Binding("x".into())).collect();
    assert_eq!(xs.len(), 2);
    assert!(a1.store.iter().all(|(_, set)| set.len() == 1));
}

#[test]
fn alpha_of_injection_is_abstract_root() {
    for p in corpus::all().unwrap() {
        for policy in [policy_zero_cfa(&p.expr), policy_k_cfa(&p.expr, 2)] {
            let a = alpha_state(&inject_ceskt(&p.expr).unwrap(), &policy).unwrap();
            assert_eq!(a.store.len(), 1);
            assert_eq!(a.time, Time::empty());
            assert_eq!(graph(&p.expr, &policy, GcMode::Free).root(), &a, "{}", p.name);
        }
    }
}

#[test]
fn k_zero_is_zero_cfa() {
    for p in corpus::all().unwrap() {
        assert_eq!(policy_k_cfa(&p.expr, 0), policy_zero_cfa(&p.expr));
        assert_eq!(policy_k_cfa(&p.expr, 0).spec(), PolicySpec::zero_cfa());
        let a = to_json(&graph(&p.expr, &policy_k_cfa(&p.expr, 0), GcMode::Free));
        let b = to_json(&graph(&p.expr, &policy_zero_cfa(&p.expr), GcMode::Free));
        assert_eq!(a, b, "{}", p.name);
    }
}

#[test]
fn policy_carriers_are_bounded() {
    for p in corpus::all().unwrap() {
        let apps = p.expr.preorder().iter().filter(|n| matches!(n.kind(), ExprKind::App(..))).count() as f64;
        let tags = (p.expr.variables().len() + p.expr.node_count()) as f64;
        let (times, addrs) = policy_zero_cfa(&p.expr).carrier_sizes(&p.expr);
        assert_eq!((times, addrs), (1.0, tags));
        let (times, _) = policy_k_cfa(&p.expr, 2).carrier_sizes(&p.expr);
        assert_eq!(times, 1.0 + apps + apps * apps);
        for g in [
            graph(&p.expr, &policy_zero_cfa(&p.expr), GcMode::Free),
            graph(&p.expr, &policy_k_cfa(&p.expr, 1), GcMode::Free),
        ] {
            let addrs: BTreeSet<&AbsAddr> = g.nodes.iter().flat_map(|n| n.store.iter().map(|(a, _)| a)).collect();
            let times: BTreeSet<&Time> = g.nodes.iter().map(|n| &n.time).collect();
            let (tmax, amax) = policy_k_cfa(&p.expr, g.policy.k).carrier_sizes(&p.expr);
            assert!(addrs.len() as f64 <= amax && times.len() as f64 <= tmax, "{}", p.name);
            assert!((g.nodes.len() as f64).log2() <= g.stats.log2_ceiling, "{}", p.name);
        }
    }
}

fn check_graph_shape(g: &StateGraph, what: &str) {
    let n = g.nodes.len();
    assert!(g.edges.windows(2).all(|w| w[0] < w[1]), "{what}: edges unsorted");
    assert!(g.edges.iter().all(|&(a, b)| a < n && b < n), "{what}: edge out of range");
    let distinct: BTreeSet<_> = g.nodes.iter().collect();
    assert_eq!(distinct.len(), n, "{what}: duplicate nodes");
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        for j in g.successors(i) {
            if !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    assert!(seen.iter().all(|&s| s), "{what}: unreachable node");
    assert_eq!(g.stats.steps, n, "{what}");
    assert_eq!(g.stats.edges, g.edges.len(), "{what}");
}

#[test]
fn graphs_are_well_formed() {
    for p in corpus::all().unwrap() {
        for policy in [policy_zero_cfa(&p.expr), policy_k_cfa(&p.expr, 1)] {
            for gc in [GcMode::None, GcMode::Free] {
                if let Some(g) = small_graph(&p.expr, &policy, gc) {
                    check_graph_shape(&g, &format!("{} {} gc={gc}", p.name, policy.spec()));
                }
            }
        }
    }
}

#[test]
fn omega_graph_has_a_back_edge_and_no_final_node() {
    let e = parse("((λ (x) (x x)) (λ (x) (x x)))").unwrap();
    let g = graph(&e, &policy_zero_cfa(&e), GcMode::Free);
    assert!(g.finals.is_empty());
    let dot = to_dot(&g);
    let back = dot.lines().filter_map(|l| l.trim().strip_suffix(';')?.split_once(" -> ")).any(|(a, b)| {
        let a: usize = a.trim_start_matches('n').parse().unwrap();
        let b: usize = b.trim_start_matches('n').parse().unwrap();
        b <= a
    });
    assert!(back, "{dot}");
    assert_eq!(dot.matches(" [label=").count(), g.nodes.len());
}

#[test]
fn stuck_programs_report_stuck_nodes() {
    for p in corpus::all().unwrap() {
        let g = graph(&p.expr, &policy_zero_cfa(&p.expr), GcMode::Free);
        let run = run_ceskt(&p.expr, 10_000, &CounterAllocator, GcMode::Free).unwrap();
        match run.outcome {
            Outcome::Stuck(_) => assert!(!g.stuck.is_empty(), "{}", p.name),
            Outcome::Value(_) | Outcome::Opaque(_) => assert!(!g.finals.is_empty(), "{}", p.name),
            Outcome::Timeout => {}
        }
        let dot = to_dot(&g);
        assert_eq!(dot.matches("color=red").count(), g.stuck.len(), "{}", p.name);
        assert_eq!(dot.matches("peripheries=2").count(), g.finals.len(), "{}", p.name);
    }
}

#[test]
fn json_documents_validate() {
    for p in corpus::all().unwrap() {
        let g = graph(&p.expr, &policy_k_cfa(&p.expr, 1), GcMode::Free);
        let text = to_json(&g);
        let doc = parse_document(&text).unwrap_or_else(|e| panic!("{}: {e}", p.name));
        assert_eq!(doc, GraphDocument::from_graph(&g));
        assert_eq!(doc.policy, PolicySpec::k_cfa(1));
        assert_eq!(doc.stats.stuck_nodes, g.stuck.len());
        assert_eq!(doc.flows.len(), all_flows(&g).len());
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        let keys: Vec<&str> = value.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys, ["edges", "flows", "gc", "nodes", "policy", "program", "stats"]);
    }
}

#[test]
fn tampered_documents_are_rejected() {
    let e = parse("((λ (x) x) (λ (y) y))").unwrap();
    let g = graph(&e, &policy_zero_cfa(&e), GcMode::Free);
    let good: serde_json::Value = serde_json::from_str(&to_json(&g)).unwrap();
    let edit = |f: &dyn Fn(&mut serde_json::Value)| {
        let mut v = good.clone();
        f(&mut v);
        parse_document(&v.to_string())
    };
    assert!(edit(&|_| {}).is_ok());
    assert!(edit(&|v| v["edges"].as_array_mut().unwrap().push(serde_json::json!([0, 99]))).is_err());
    assert!(edit(&|v| v["nodes"][0]["id"] = serde_json::json!(5)).is_err());
    assert!(edit(&|v| v["stats"]["nodes"] = serde_json::json!(0)).is_err());
    assert!(edit(&|v| v["flows"][0]["kind"] = serde_json::json!("lam")).is_err());
    assert!(edit(&|v| v["nodes"][0]["colour"] = serde_json::json!("red")).is_err());
    assert!(edit(&|v| v["policy"]["k"] = serde_json::json!(-1)).is_err());
    assert!(edit(&|v| v["gc"] = serde_json::json!("sometimes")).is_err());
    assert!(edit(&|v| {
        v.as_object_mut().unwrap().remove("stats");
    })
    .is_err());
}

/// The α-images of a concrete run follow a path through the graph: each is
/// below some node reachable from a node below the previous image.
fn embeds_as_path(g: &StateGraph, policy: &dyn Policy, e: &Expr, gc: GcMode, fuel: usize) -> Result<usize, String> {
    let run = run_ceskt(e, fuel, &CounterAllocator, gc).map_err(|err| err.to_string())?;
    let mut tracker = AlphaTracker::new(policy);
    let mut current: BTreeSet<usize> = BTreeSet::from([0]);
    for (i, s) in run.trace.iter().enumerate() {
        let a = tracker.alpha(s).map_err(|err| err.to_string())?;
        let candidates: BTreeSet<usize> =
            if i == 0 { current.clone() } else { current.iter().flat_map(|&n| g.successors(n)).collect() };
        current = candidates.into_iter().filter(|&n| leq_state(&a, &g.nodes[n])).collect();
        if current.is_empty() {
            return Err(format!("state {i} leaves the graph"));
        }
    }
    Ok(run.trace.len())
}

#[test]
fn terminating_runs_embed_as_graph_paths() {
    let mut checked = 0;
    for p in corpus::all().unwrap() {
        for policy in [policy_zero_cfa(&p.expr), policy_k_cfa(&p.expr, 1)] {
            for gc in [GcMode::None, GcMode::Free] {
                let Some(g) = small_graph(&p.expr, &policy, gc) else { continue };
                embeds_as_path(&g, &policy, &p.expr, gc, 2_000)
                    .unwrap_or_else(|err| panic!("{} {} gc={gc}: {err}", p.name, policy.spec()));
                checked += 1;
            }
        }
    }
    assert!(checked >= 280, "only {checked} graphs fit the cap");
}

#[test]
fn flows_cover_concrete_observations() {
    for p in corpus::all().unwrap() {
        for policy in [policy_zero_cfa(&p.expr), policy_k_cfa(&p.expr, 1)] {
            for gc in [GcMode::None, GcMode::Free] {
                let Some(g) = small_graph(&p.expr, &policy, gc) else { continue };
                let run = run_ceskt(&p.expr, 2_000, &CounterAllocator, gc).unwrap();
                let reported: BTreeMap<Label, BTreeSet<FlowValue>> =
                    all_flows(&g).into_iter().map(|f| (f.site, f.values)).collect();
                for (site, seen) in concrete_flows(&run.trace) {
                    let got = reported.get(&site).cloned().unwrap_or_default();
                    assert!(
                        seen.is_subset(&got),
                        "{} {} gc={gc} at {site}: {seen:?} not in {got:?}",
                        p.name,
                        policy.spec()
                    );
                }
            }
        }
    }
}

#[test]
fn garbage_collection_never_grows_the_graph_here() {
    let e = parse(TWO_CALL_SITES).unwrap();
    let zero = policy_zero_cfa(&e);
    let free = graph(&e, &zero, GcMode::Free);
    let none = graph(&e, &zero, GcMode::None);
    assert!(free.nodes.len() <= none.nodes.len(), "{} > {}", free.nodes.len(), none.nodes.len());
    assert!(free.stats.max_store_size <= none.stats.max_store_size);
}

#[test]
fn one_cfa_erases_onto_zero_cfa_metric() {
    let e = parse(TWO_CALL_SITES).unwrap();
    let g0 = graph(&e, &policy_zero_cfa(&e), GcMode::Free);
    let g1 = graph(&e, &policy_k_cfa(&e, 1), GcMode::Free);
    let controls = |g: &StateGraph| g.nodes.iter().map(|n| n.control.clone()).collect::<BTreeSet<_>>();
    assert!(controls(&g1).is_subset(&controls(&g0)));
}
