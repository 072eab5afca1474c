use std::collections::HashMap;
use std::fmt;

use super::{analyze, expand, AnalysisConfig, AnalysisError, NodeId, StateGraph};
use crate::abstract_machine::{leq_state, AbsAddr, AbstractState, AlphaTracker, Policy, PolicySpec, Time};
use crate::concrete::{run_ceskt, CounterAllocator, Outcome};
use crate::domain::{Control, Env};
use crate::gc::GcMode;
use crate::syntax::Expr;

/// The first place where the abstraction failed to cover the concrete run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    /// No abstract successor of α(ςᵢ) dominates α(ςᵢ₊₁).
    Step { index: usize, concrete: String, expected: String, successors: Vec<String> },
    /// α(ςᵢ) is below no node of the graph.
    Coverage { index: usize, concrete: String, expected: String },
    /// The concrete run or the analysis failed outright.
    Error(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Step { index, concrete, expected, successors } => {
                writeln!(f, "step {index}: no abstract successor covers the next state")?;
                writeln!(f, "  concrete: {concrete}")?;
                writeln!(f, "  needed:   {expected}")?;
                for s in successors {
                    writeln!(f, "  offered:  {s}")?;
                }
                Ok(())
            }
            Violation::Coverage { index, concrete, expected } => {
                writeln!(f, "state {index} is covered by no graph node")?;
                writeln!(f, "  concrete: {concrete}")?;
                write!(f, "  needed:   {expected}")
            }
            Violation::Error(e) => write!(f, "{e}"),
        }
    }
}

/// How the α-images of the concrete run were shown to lie below reachable
/// abstract states.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Coverage {
    /// Each image is below a node of the fully built graph.
    Graph,
    /// The graph exceeded the node budget. Each image is instead below a
    /// witness state, where the first witness is the root and every later
    /// one is a successor of the one before, so every witness is reachable.
    WitnessPath,
}

/// Largest graph `soundness_check` builds before switching to a witness
/// path.
pub const SOUNDNESS_GRAPH_CAP: usize = 50_000;

#[derive(Clone, Debug)]
pub struct SoundnessReport {
    pub policy: PolicySpec,
    pub gc: GcMode,
    pub concrete_steps: usize,
    pub concrete_outcome: Option<Outcome>,
    /// Zero when the graph was not built.
    pub graph_nodes: usize,
    pub coverage: Coverage,
    pub violation: Option<Violation>,
}

impl SoundnessReport {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }
}

type Shape = (Control<AbsAddr>, Env<AbsAddr>, AbsAddr, Time);

fn shape_of(s: &AbstractState) -> Shape {
    (s.control.clone(), s.env.clone(), s.kont.clone(), s.time.clone())
}

fn covered(index: &HashMap<Shape, Vec<NodeId>>, g: &StateGraph, a: &AbstractState) -> bool {
    index.get(&shape_of(a)).is_some_and(|ids| ids.iter().any(|&i| a.store.leq(&g.nodes[i].store)))
}

/// Checks a concrete run against the analysis of the same program.
///
/// The concrete machine is the counter-allocated time-stamped machine,
/// collecting after every step exactly when the analysis does. Two things
/// are checked for every step `ς → ς′`: some abstract successor of `α(ς)`
/// dominates `α(ς′)`, and `α(ς)` is below some reachable abstract state.
pub fn soundness_check(e: &Expr, policy: &dyn Policy, gc: GcMode, fuel: usize) -> SoundnessReport {
    soundness_check_with_cap(e, policy, gc, fuel, SOUNDNESS_GRAPH_CAP)
}

/// [`soundness_check`] with an explicit graph budget.
pub fn soundness_check_with_cap(
    e: &Expr,
    policy: &dyn Policy,
    gc: GcMode,
    fuel: usize,
    graph_cap: usize,
) -> SoundnessReport {
    let mut report = SoundnessReport {
        policy: policy.spec(),
        gc,
        concrete_steps: 0,
        concrete_outcome: None,
        graph_nodes: 0,
        coverage: Coverage::Graph,
        violation: None,
    };
    let fail = |mut r: SoundnessReport, v: Violation| {
        r.violation = Some(v);
        r
    };
    let run = match run_ceskt(e, fuel, &CounterAllocator, gc) {
        Ok(run) => run,
        Err(err) => return fail(report, Violation::Error(format!("concrete run failed: {err}"))),
    };
    report.concrete_steps = run.steps();
    report.concrete_outcome = Some(run.outcome.clone());
    let config = AnalysisConfig { node_cap: graph_cap, ..AnalysisConfig::with_gc(gc) };
    let graph = match analyze(e, policy, &config) {
        Ok(g) => Some(g),
        Err(AnalysisError::CapExceeded { .. }) => None,
        Err(err) => return fail(report, Violation::Error(format!("analysis failed: {err}"))),
    };
    let mut index: HashMap<Shape, Vec<NodeId>> = HashMap::new();
    if let Some(graph) = &graph {
        report.graph_nodes = graph.nodes.len();
        for (i, n) in graph.nodes.iter().enumerate() {
            index.entry(shape_of(n)).or_default().push(i);
        }
    } else {
        report.coverage = Coverage::WitnessPath;
    }

    let mut tracker = AlphaTracker::new(policy);
    let mut alphas = Vec::with_capacity(run.trace.len());
    for s in &run.trace {
        match tracker.alpha(s) {
            Ok(a) => alphas.push(a),
            Err(err) => return fail(report, Violation::Error(format!("abstraction failed: {err}"))),
        }
    }
    let coverage_violation = |i: usize, a: &AbstractState| Violation::Coverage {
        index: i,
        concrete: run.trace[i].to_string(),
        expected: a.to_string(),
    };
    let mut witness = match &graph {
        Some(_) => None,
        None => match super::initial_state(e, policy, gc) {
            Ok(root) => Some(root),
            Err(err) => return fail(report, Violation::Error(format!("abstraction failed: {err}"))),
        },
    };
    for (i, a) in alphas.iter().enumerate() {
        let covered = match (&graph, &witness) {
            (Some(g), _) => covered(&index, g, a),
            (None, Some(w)) => leq_state(a, w),
            (None, None) => false,
        };
        if !covered {
            return fail(report, coverage_violation(i, a));
        }
        let Some(next) = alphas.get(i + 1) else { break };
        let succ = match expand(a, policy, gc) {
            Ok(succ) => succ,
            Err(err) => return fail(report, Violation::Error(format!("abstract step failed: {err}"))),
        };
        if !succ.states.iter().any(|(s, _)| leq_state(next, s)) {
            let v = Violation::Step {
                index: i,
                concrete: run.trace[i].to_string(),
                expected: next.to_string(),
                successors: succ.states.iter().map(|(s, _)| s.to_string()).collect(),
            };
            return fail(report, v);
        }
        if let Some(w) = &witness {
            let from_witness = match expand(w, policy, gc) {
                Ok(succ) => succ,
                Err(err) => return fail(report, Violation::Error(format!("abstract step failed: {err}"))),
            };
            match from_witness.states.into_iter().map(|(s, _)| s).find(|s| leq_state(next, s)) {
                Some(s) => witness = Some(s),
                None => return fail(report, coverage_violation(i + 1, next)),
            }
        }
    }
    report
}
