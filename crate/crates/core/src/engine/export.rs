use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{all_flows, StateGraph};
use crate::abstract_machine::PolicySpec;
use crate::domain::DisplayEnv;
use crate::gc::GcMode;
use crate::syntax::Label;

/// The JSON form of a state graph. Field order is the serialization order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDocument {
    pub program: String,
    pub policy: PolicySpec,
    pub gc: GcMode,
    pub nodes: Vec<NodeDoc>,
    pub edges: Vec<EdgeDoc>,
    pub flows: Vec<FlowDoc>,
    pub stats: StatsDoc,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDoc {
    pub id: usize,
    pub control: String,
    pub env: String,
    pub kont: String,
    pub time: String,
    pub store_size: usize,
    #[serde(rename = "final")]
    pub is_final: bool,
    pub stuck: bool,
}

/// `[from, to]`.
pub type EdgeDoc = [usize; 2];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowDoc {
    pub label: Label,
    pub kind: String,
    pub values: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsDoc {
    pub nodes: usize,
    pub edges: usize,
    pub steps: usize,
    pub final_nodes: usize,
    pub stuck_nodes: usize,
    pub stuck_branches: usize,
    pub max_store_size: usize,
    pub total_store_size: usize,
    /// Absent when the bound overflows a double.
    pub log2_ceiling: Option<f64>,
}

impl GraphDocument {
    pub fn from_graph(g: &StateGraph) -> GraphDocument {
        let nodes = g
            .nodes
            .iter()
            .enumerate()
            .map(|(id, s)| NodeDoc {
                id,
                control: s.control.to_string(),
                env: DisplayEnv(&s.env).to_string(),
                kont: s.kont.to_string(),
                time: s.time.to_string(),
                store_size: s.store.len(),
                is_final: g.finals.contains(&id),
                stuck: g.stuck.contains(&id),
            })
            .collect();
        let flows = all_flows(g)
            .into_iter()
            .map(|f| FlowDoc {
                label: f.site,
                kind: serde_json::to_value(f.kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
                values: f.values.iter().map(ToString::to_string).collect(),
            })
            .collect();
        GraphDocument {
            program: g.program.to_string(),
            policy: g.policy.clone(),
            gc: g.gc,
            nodes,
            edges: g.edges.iter().map(|&(a, b)| [a, b]).collect(),
            flows,
            stats: StatsDoc {
                nodes: g.nodes.len(),
                edges: g.edges.len(),
                steps: g.stats.steps,
                final_nodes: g.finals.len(),
                stuck_nodes: g.stuck.len(),
                stuck_branches: g.stats.stuck_branches,
                max_store_size: g.stats.max_store_size,
                total_store_size: g.stats.total_store_size,
                log2_ceiling: g.stats.log2_ceiling.is_finite().then_some(g.stats.log2_ceiling),
            },
        }
    }
}

pub fn to_json(g: &StateGraph) -> String {
    let mut out = serde_json::to_string_pretty(&GraphDocument::from_graph(g)).expect("graph documents serialize");
    out.push('\n');
    out
}

#[derive(Debug, Error)]
pub enum DocumentError {
    #[error("malformed graph document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid graph document: {0}")]
    Invalid(String),
}

/// Parses a graph document against the schema and checks its internal
/// consistency.
pub fn parse_document(text: &str) -> Result<GraphDocument, DocumentError> {
    let doc: GraphDocument = serde_json::from_str(text)?;
    validate_document(&doc)?;
    Ok(doc)
}

pub fn validate_document(doc: &GraphDocument) -> Result<(), DocumentError> {
    let bad = |m: String| Err(DocumentError::Invalid(m));
    if doc.nodes.is_empty() {
        return bad("no root node".into());
    }
    if let Some((i, n)) = doc.nodes.iter().enumerate().find(|(i, n)| n.id != *i) {
        return bad(format!("node at position {i} has id {}", n.id));
    }
    if let Some(e) = doc.edges.iter().find(|[a, b]| *a >= doc.nodes.len() || *b >= doc.nodes.len()) {
        return bad(format!("edge {e:?} leaves the node set"));
    }
    if doc.edges.windows(2).any(|w| w[0] >= w[1]) {
        return bad("edges are not sorted and distinct".into());
    }
    if let Some(f) = doc.flows.iter().find(|f| f.kind != "var" && f.kind != "app") {
        return bad(format!("flow at {} has kind {:?}", f.label, f.kind));
    }
    let s = &doc.stats;
    if s.nodes != doc.nodes.len() || s.edges != doc.edges.len() {
        return bad("stats disagree with the node or edge lists".into());
    }
    if s.final_nodes != doc.nodes.iter().filter(|n| n.is_final).count()
        || s.stuck_nodes != doc.nodes.iter().filter(|n| n.stuck).count()
    {
        return bad("stats disagree with the node flags".into());
    }
    Ok(())
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn caption(s: &str, max: usize) -> String {
    if s.chars().count() <= max {
        s.to_string()
    } else {
        let mut out: String = s.chars().take(max - 1).collect();
        out.push('…');
        out
    }
}

/// Graphviz rendering. Node `n{i}` is the state with id `i`; final nodes
/// have a double border and stuck nodes are red.
pub fn to_dot(g: &StateGraph) -> String {
    let mut out = String::new();
    writeln!(out, "digraph states {{").unwrap();
    writeln!(out, "  node [shape=box, fontname=\"monospace\"];").unwrap();
    for (i, s) in g.nodes.iter().enumerate() {
        let label = format!("{}\\n{}", escape(&caption(&s.control.to_string(), 48)), escape(&s.time.to_string()));
        let mut attrs = format!("label=\"{label}\"");
        if g.finals.contains(&i) {
            attrs.push_str(", peripheries=2");
        }
        if g.stuck.contains(&i) {
            attrs.push_str(", color=red");
        }
        writeln!(out, "  n{i} [{attrs}];").unwrap();
    }
    for (a, b) in &g.edges {
        writeln!(out, "  n{a} -> n{b};").unwrap();
    }
    writeln!(out, "}}").unwrap();
    out
}
