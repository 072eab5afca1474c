//! Reachable-state exploration of the abstract machine and what is read
//! back from the resulting graph.

mod export;
mod flows;
mod soundness;

use std::collections::{BTreeSet, HashMap};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::abstract_machine::{alpha_state, AbstractState, Policy, PolicySpec, Successors};
use crate::concrete::inject_ceskt;
use crate::domain::{Control, MachineError};
use crate::gc::{collect, GcMode};
use crate::syntax::Expr;

pub use export::{
    parse_document, to_dot, to_json, validate_document, DocumentError, EdgeDoc, FlowDoc, GraphDocument, NodeDoc,
    StatsDoc,
};
pub use flows::{
    all_flows, concrete_flows, flows_at, flows_by_context, summarize, FlowError, FlowFact, FlowValue, SiteKind,
};
pub use soundness::{
    soundness_check, soundness_check_with_cap, Coverage, SoundnessReport, Violation, SOUNDNESS_GRAPH_CAP,
};

pub const DEFAULT_NODE_CAP: usize = 1_000_000;

pub type NodeId = usize;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnalysisConfig {
    pub gc: GcMode,
    pub node_cap: usize,
    /// Worker threads for frontier expansion. `None` uses the global pool;
    /// `Some(1)` runs sequentially.
    pub jobs: Option<usize>,
}

impl Default for AnalysisConfig {
    fn default() -> AnalysisConfig {
        AnalysisConfig { gc: GcMode::Free, node_cap: DEFAULT_NODE_CAP, jobs: None }
    }
}

impl AnalysisConfig {
    pub fn with_gc(gc: GcMode) -> AnalysisConfig {
        AnalysisConfig { gc, ..AnalysisConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Machine(#[from] MachineError),
    #[error("node cap of {cap} states exceeded")]
    CapExceeded { cap: usize },
    #[error("could not build the worker pool: {0}")]
    Pool(String),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Stats {
    /// States expanded, which is every node.
    pub steps: usize,
    pub edges: usize,
    pub stuck_branches: usize,
    pub final_branches: usize,
    /// Largest store, counted in addresses. Under collection this is the
    /// largest live set.
    pub max_store_size: usize,
    pub total_store_size: usize,
    /// log₂ of the policy-derived ceiling on the number of states.
    pub log2_ceiling: f64,
    pub wall_time: Duration,
}

/// The reachable abstract states of a program and the transitions between
/// them. Node 0 is the root; ids follow breadth-first discovery order.
#[derive(Clone, Debug)]
pub struct StateGraph {
    pub program: Expr,
    pub policy: PolicySpec,
    pub gc: GcMode,
    pub nodes: Vec<AbstractState>,
    /// Sorted, without duplicates.
    pub edges: Vec<(NodeId, NodeId)>,
    /// Nodes with at least one branch that returned to `mt`.
    pub finals: BTreeSet<NodeId>,
    /// Nodes with at least one stuck branch.
    pub stuck: BTreeSet<NodeId>,
    pub stats: Stats,
}

impl StateGraph {
    pub fn root(&self) -> &AbstractState {
        &self.nodes[0]
    }

    pub fn successors(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        let start = self.edges.partition_point(|&(a, _)| a < id);
        self.edges[start..].iter().take_while(move |&&(a, _)| a == id).map(|&(_, b)| b)
    }

    /// Final-shaped nodes: a value returned to a store holding `mt`.
    pub fn final_nodes(&self) -> impl Iterator<Item = &AbstractState> + '_ {
        self.finals.iter().map(|&i| &self.nodes[i])
    }

    /// Whether some edge goes from a node to one discovered no later.
    pub fn has_back_edge(&self) -> bool {
        self.edges.iter().any(|&(a, b)| b <= a)
    }
}

/// log₂ of a crude bound on the number of well-formed states: controls
/// times environments times stores times continuation addresses times
/// times.
pub fn log2_state_ceiling(program: &Expr, policy: &dyn Policy) -> f64 {
    let (times, addrs) = policy.carrier_sizes(program);
    let labels = program.node_count() as f64;
    let vars = program.variables().len() as f64;
    let values = labels + 2.0 + addrs;
    let controls = labels + values;
    let envs_log2 = vars * (addrs + 1.0).log2();
    let frames_log2 = (labels + values).log2() + 2.0 * envs_log2 + 2.0 * (addrs + 1.0).log2();
    let storables = 2f64.powf(frames_log2) + values * 2f64.powf(envs_log2);
    controls.log2() + envs_log2 + addrs * storables + addrs.log2() + times.log2()
}

fn initial_state(e: &Expr, policy: &dyn Policy, gc: GcMode) -> Result<AbstractState, MachineError> {
    let s = alpha_state(&inject_ceskt(e)?, policy).map_err(|err| MachineError::Dangling(err.to_string()))?;
    match gc {
        GcMode::None => Ok(s),
        GcMode::Free => collect(&s).map_err(|err| MachineError::Dangling(err.0)),
    }
}

/// One abstract transition under the given collection mode.
pub fn expand(s: &AbstractState, policy: &dyn Policy, gc: GcMode) -> Result<Successors, MachineError> {
    match gc {
        GcMode::None => crate::abstract_machine::abs_step(s, policy),
        GcMode::Free => crate::gc::gc_step_abstract(s, policy),
    }
}

fn expand_frontier(
    nodes: &[AbstractState],
    frontier: &[NodeId],
    policy: &dyn Policy,
    gc: GcMode,
    pool: Option<&Pool>,
) -> Vec<Result<Successors, MachineError>> {
    let work = |id: &NodeId| expand(&nodes[*id], policy, gc);
    match pool {
        #[cfg(feature = "parallel")]
        Some(pool) => {
            use rayon::prelude::*;
            pool.install(|| frontier.par_iter().map(work).collect())
        }
        #[cfg(not(feature = "parallel"))]
        Some(_) => frontier.iter().map(work).collect(),
        None => frontier.iter().map(work).collect(),
    }
}

#[cfg(feature = "parallel")]
type Pool = rayon::ThreadPool;

#[cfg(not(feature = "parallel"))]
type Pool = ();

fn build_pool(jobs: Option<usize>) -> Result<Option<Pool>, AnalysisError> {
    #[cfg(feature = "parallel")]
    {
        match jobs {
            Some(1) => Ok(None),
            n => rayon::ThreadPoolBuilder::new()
                .num_threads(n.unwrap_or(0))
                .build()
                .map(Some)
                .map_err(|e| AnalysisError::Pool(e.to_string())),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = jobs;
        Ok(None)
    }
}

/// Explores every abstract state reachable from the abstraction of the
/// initial concrete state.
///
/// Frontiers are expanded level by level, possibly in parallel; successors
/// are merged in frontier order, so the graph does not depend on the number
/// of workers.
pub fn analyze(e: &Expr, policy: &dyn Policy, config: &AnalysisConfig) -> Result<StateGraph, AnalysisError> {
    let started = Instant::now();
    let pool = build_pool(config.jobs)?;
    let root = initial_state(e, policy, config.gc)?;
    let mut nodes = vec![root.clone()];
    let mut index: HashMap<AbstractState, NodeId> = HashMap::from([(root, 0)]);
    let mut edges = BTreeSet::new();
    let mut finals = BTreeSet::new();
    let mut stuck = BTreeSet::new();
    let mut stats = Stats::default();
    let mut frontier = vec![0];
    while !frontier.is_empty() {
        let results = expand_frontier(&nodes, &frontier, policy, config.gc, pool.as_ref());
        let mut next = Vec::new();
        for (&id, result) in frontier.iter().zip(results) {
            let succ = result?;
            stats.steps += 1;
            stats.stuck_branches += succ.stuck.len();
            stats.final_branches += succ.finals;
            if succ.is_final() {
                finals.insert(id);
            }
            if !succ.stuck.is_empty() {
                stuck.insert(id);
            }
            for (s, _) in succ.states {
                let target = match index.get(&s) {
                    Some(&t) => t,
                    None => {
                        if nodes.len() == config.node_cap {
                            return Err(AnalysisError::CapExceeded { cap: config.node_cap });
                        }
                        let t = nodes.len();
                        index.insert(s.clone(), t);
                        nodes.push(s);
                        next.push(t);
                        t
                    }
                };
                edges.insert((id, target));
            }
        }
        frontier = next;
    }
    for n in &nodes {
        stats.max_store_size = stats.max_store_size.max(n.store.len());
        stats.total_store_size += n.store.len();
    }
    stats.edges = edges.len();
    stats.log2_ceiling = log2_state_ceiling(e, policy);
    stats.wall_time = started.elapsed();
    Ok(StateGraph {
        program: e.clone(),
        policy: policy.spec(),
        gc: config.gc,
        nodes,
        edges: edges.into_iter().collect(),
        finals,
        stuck,
        stats,
    })
}

/// Whether a node returns a value (as opposed to evaluating a term).
pub fn is_return(s: &AbstractState) -> bool {
    matches!(s.control, Control::Return(_))
}
