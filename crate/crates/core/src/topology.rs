//! Folding serialized episodes back into agent interaction graphs.
//!
//! Node identity is the agent id, so an agent activated twice is one node and
//! a revisit shows up as a repeated or cyclic edge. A synthetic source (the
//! task) feeds the first agent of each branch and the last agent of each
//! branch feeds a synthetic sink (the answer). Source and sink are excluded
//! from density and cycle counts: those describe inter-agent structure only.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orchestrator::EpisodeResult;

pub const DEFAULT_CYCLE_CAP: usize = 10_000;
pub const DEFAULT_TREND_WINDOW: usize = 25;

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("episode has no trajectories")]
    NoTrajectories,
    #[error("branch {0} has an empty trajectory")]
    EmptyTrajectory(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Source,
    Agent(String),
    Sink,
}

impl Node {
    fn label(&self) -> &str {
        match self {
            Node::Source => "source",
            Node::Agent(id) => id,
            Node::Sink => "sink",
        }
    }
}

/// Folded episode graph. Edges keep their multiplicity.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TopologyGraph {
    agents: BTreeSet<String>,
    edges: BTreeMap<(Node, Node), u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Motif {
    Chain,
    Tree,
    Dag,
    Cyclic,
}

impl Motif {
    pub fn as_str(self) -> &'static str {
        match self {
            Motif::Chain => "chain",
            Motif::Tree => "tree",
            Motif::Dag => "dag",
            Motif::Cyclic => "cyclic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyMetrics {
    pub density: f64,
    pub simple_cycle_count: usize,
    /// The cycle enumeration hit its cap; the count is a lower bound.
    pub cycles_saturated: bool,
    pub self_loop_count: usize,
    pub motif: Motif,
    pub node_count: usize,
    /// Distinct agent-to-agent edges, self-loops excluded.
    pub edge_count: usize,
    /// Agent-to-agent transitions counted with multiplicity, self-loops included.
    pub transition_count: u64,
}

impl TopologyGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_agent(&mut self, id: &str) {
        self.agents.insert(id.to_string());
    }

    pub fn add_edge(&mut self, from: Node, to: Node) {
        for node in [&from, &to] {
            if let Node::Agent(id) = node {
                self.agents.insert(id.clone());
            }
        }
        *self.edges.entry((from, to)).or_insert(0) += 1;
    }

    /// Folds branch activation sequences (terminator already removed).
    pub fn from_branches<S: AsRef<str>>(branches: &[Vec<S>]) -> Self {
        let mut g = Self::new();
        for seq in branches {
            let mut prev = Node::Source;
            for id in seq {
                let node = Node::Agent(id.as_ref().to_string());
                g.add_edge(prev, node.clone());
                prev = node;
            }
            g.add_edge(prev, Node::Sink);
        }
        g
    }

    pub fn agents(&self) -> impl Iterator<Item = &str> {
        self.agents.iter().map(String::as_str)
    }

    pub fn node_count(&self) -> usize {
        self.agents.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (&Node, &Node, u64)> {
        self.edges.iter().map(|((a, b), &c)| (a, b, c))
    }

    pub fn multiplicity(&self, from: &Node, to: &Node) -> u64 {
        self.edges
            .get(&(from.clone(), to.clone()))
            .copied()
            .unwrap_or(0)
    }

    pub fn out_degree(&self, node: &Node) -> u64 {
        self.edges
            .iter()
            .filter(|((a, _), _)| a == node)
            .map(|(_, c)| c)
            .sum()
    }

    pub fn in_degree(&self, node: &Node) -> u64 {
        self.edges
            .iter()
            .filter(|((_, b), _)| b == node)
            .map(|(_, c)| c)
            .sum()
    }

    /// Agent-to-agent edges with multiplicity, self-loops included.
    pub fn internal_edges(&self) -> impl Iterator<Item = (&str, &str, u64)> {
        self.edges.iter().filter_map(|((a, b), &c)| match (a, b) {
            (Node::Agent(x), Node::Agent(y)) => Some((x.as_str(), y.as_str(), c)),
            _ => None,
        })
    }

    /// Index adjacency over agent nodes, self-loops dropped.
    fn adjacency(&self) -> Vec<Vec<usize>> {
        let index: BTreeMap<&str, usize> = self
            .agents
            .iter()
            .enumerate()
            .map(|(i, a)| (a.as_str(), i))
            .collect();
        let mut adj = vec![Vec::new(); self.agents.len()];
        for (a, b, _) in self.internal_edges() {
            if a != b {
                adj[index[a]].push(index[b]);
            }
        }
        adj
    }

    pub fn merge(&mut self, other: &TopologyGraph) {
        self.agents.extend(other.agents.iter().cloned());
        for (k, c) in &other.edges {
            *self.edges.entry(k.clone()).or_insert(0) += c;
        }
    }

    pub fn to_dot(&self, name: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "digraph \"{}\" {{", escape(name));
        let _ = writeln!(out, "  \"source\" [shape=box];");
        let _ = writeln!(out, "  \"sink\" [shape=box];");
        for agent in &self.agents {
            let _ = writeln!(out, "  \"agent:{}\" [label=\"{}\"];", escape(agent), escape(agent));
        }
        for ((a, b), c) in &self.edges {
            let _ = writeln!(
                out,
                "  \"{}\" -> \"{}\" [label=\"{c}\", penwidth={c}];",
                dot_id(a),
                dot_id(b)
            );
        }
        out.push_str("}\n");
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        let edges: Vec<_> = self
            .edges
            .iter()
            .map(|((a, b), c)| serde_json::json!({"from": a.label(), "to": b.label(), "count": c}))
            .collect();
        serde_json::json!({
            "nodes": self.agents,
            "edges": edges,
        })
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn dot_id(node: &Node) -> String {
    match node {
        Node::Agent(id) => format!("agent:{}", escape(id)),
        other => other.label().to_string(),
    }
}

/// Folds an episode: one graph over all of its branches.
pub fn fold(episode: &EpisodeResult) -> Result<TopologyGraph, TopologyError> {
    if episode.trajectories.is_empty() {
        return Err(TopologyError::NoTrajectories);
    }
    let mut branches = Vec::with_capacity(episode.trajectories.len());
    for traj in &episode.trajectories {
        if traj.is_empty() {
            return Err(TopologyError::EmptyTrajectory(traj.branch));
        }
        branches.push(traj.activations().collect::<Vec<_>>());
    }
    Ok(TopologyGraph::from_branches(&branches))
}

pub fn metrics(graph: &TopologyGraph) -> TopologyMetrics {
    metrics_with_cap(graph, DEFAULT_CYCLE_CAP)
}

pub fn metrics_with_cap(graph: &TopologyGraph, cycle_cap: usize) -> TopologyMetrics {
    let n = graph.node_count();
    let adj = graph.adjacency();
    let edge_count: usize = adj.iter().map(Vec::len).sum();
    let self_loop_count = graph.internal_edges().filter(|(a, b, _)| a == b).count();
    let transition_count = graph.internal_edges().map(|(_, _, c)| c).sum();
    let density = if n >= 2 {
        edge_count as f64 / (n * (n - 1)) as f64
    } else {
        0.0
    };
    let (simple_cycle_count, cycles_saturated) = count_simple_cycles(&adj, cycle_cap);

    let mut in_deg = vec![0usize; n];
    for targets in &adj {
        for &t in targets {
            in_deg[t] += 1;
        }
    }
    let max_in = in_deg.iter().copied().max().unwrap_or(0);
    let max_out = adj.iter().map(Vec::len).max().unwrap_or(0);
    let motif = if simple_cycle_count > 0 || self_loop_count > 0 {
        Motif::Cyclic
    } else if max_in <= 1 && max_out <= 1 && edge_count + 1 >= n {
        // acyclic, degrees <= 1 and n - 1 edges: a single directed path
        Motif::Chain
    } else if max_in <= 1 {
        Motif::Tree
    } else {
        Motif::Dag
    };

    TopologyMetrics {
        density,
        simple_cycle_count,
        cycles_saturated,
        self_loop_count,
        motif,
        node_count: n,
        edge_count,
        transition_count,
    }
}

/// Counts elementary circuits with Johnson's algorithm, stopping at `cap`.
///
/// `adj` must not contain self-loops. Returns `(count, saturated)`.
pub fn count_simple_cycles(adj: &[Vec<usize>], cap: usize) -> (usize, bool) {
    let n = adj.len();
    let mut search = CircuitSearch {
        blocked: vec![false; n],
        block_map: vec![BTreeSet::new(); n],
        in_component: vec![false; n],
        count: 0,
        cap,
    };
    for start in 0..n {
        let component = component_of(adj, start);
        if component.len() < 2 {
            continue;
        }
        for v in 0..n {
            search.in_component[v] = false;
            search.blocked[v] = false;
            search.block_map[v].clear();
        }
        for &v in &component {
            search.in_component[v] = true;
        }
        search.circuit(adj, start, start);
        if search.count >= cap {
            return (cap, true);
        }
    }
    (search.count, false)
}

struct CircuitSearch {
    blocked: Vec<bool>,
    block_map: Vec<BTreeSet<usize>>,
    in_component: Vec<bool>,
    count: usize,
    cap: usize,
}

impl CircuitSearch {
    fn unblock(&mut self, u: usize) {
        let mut stack = vec![u];
        while let Some(v) = stack.pop() {
            if !self.blocked[v] {
                continue;
            }
            self.blocked[v] = false;
            let waiting = std::mem::take(&mut self.block_map[v]);
            stack.extend(waiting.into_iter().filter(|&w| self.blocked[w]));
        }
    }

    fn circuit(&mut self, adj: &[Vec<usize>], v: usize, start: usize) -> bool {
        if self.count >= self.cap {
            return true;
        }
        let mut found = false;
        self.blocked[v] = true;
        for &w in &adj[v] {
            if !self.in_component[w] {
                continue;
            }
            if w == start {
                self.count += 1;
                found = true;
                if self.count >= self.cap {
                    return true;
                }
            } else if !self.blocked[w] && self.circuit(adj, w, start) {
                found = true;
            }
        }
        if found {
            self.unblock(v);
        } else {
            for &w in &adj[v] {
                if self.in_component[w] {
                    self.block_map[w].insert(v);
                }
            }
        }
        found
    }
}

/// Strongly connected component containing `start` in the subgraph induced
/// by vertices `>= start`.
fn component_of(adj: &[Vec<usize>], start: usize) -> Vec<usize> {
    let reach = |forward: bool| {
        let mut seen = vec![false; adj.len()];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(v) = stack.pop() {
            let next: Vec<usize> = if forward {
                adj[v].clone()
            } else {
                (0..adj.len()).filter(|&u| adj[u].contains(&v)).collect()
            };
            for w in next {
                if w >= start && !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen
    };
    let fwd = reach(true);
    let bwd = reach(false);
    (start..adj.len()).filter(|&v| fwd[v] && bwd[v]).collect()
}

/// Centered moving average with windows truncated at the ends.
///
/// A window of `w` covers `(w - 1) / 2` points before and `w / 2` after, so
/// odd windows are symmetric.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let before = (window - 1) / 2;
    let after = window / 2;
    let mut prefix = Vec::with_capacity(values.len() + 1);
    prefix.push(0.0);
    for v in values {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(before);
            let hi = (i + after).min(values.len() - 1);
            // direct summation keeps constant series exact
            if hi - lo < 64 {
                values[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
            } else {
                (prefix[hi + 1] - prefix[lo]) / (hi - lo + 1) as f64
            }
        })
        .collect()
}

/// Smooths `(episode, value)` points, keeping the episode indices.
pub fn trend_series(points: &[(u64, f64)], window: usize) -> Vec<(u64, f64)> {
    let values: Vec<f64> = points.iter().map(|p| p.1).collect();
    points
        .iter()
        .zip(moving_average(&values, window))
        .map(|(p, v)| (p.0, v))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(ids: &[&str]) -> TopologyGraph {
        TopologyGraph::from_branches(&[ids.to_vec()])
    }

    #[test]
    fn simple_chain() {
        let g = chain(&["A", "B"]);
        let m = metrics(&g);
        assert_eq!(m.density, 0.5);
        assert_eq!(m.motif, Motif::Chain);
        assert_eq!(g.multiplicity(&Node::Source, &Node::Agent("A".into())), 1);
        assert_eq!(g.multiplicity(&Node::Agent("B".into()), &Node::Sink), 1);
    }

    #[test]
    fn revisit_makes_a_cycle() {
        let g = chain(&["A", "B", "A"]);
        let m = metrics(&g);
        assert_eq!(m.node_count, 2);
        assert_eq!(m.edge_count, 2);
        assert_eq!(m.simple_cycle_count, 1);
        assert_eq!(m.motif, Motif::Cyclic);
    }

    #[test]
    fn branch_fan_out() {
        let g = TopologyGraph::from_branches(&[vec!["A"], vec!["B", "C"], vec!["A", "C"]]);
        assert_eq!(g.out_degree(&Node::Source), 3);
        assert_eq!(g.in_degree(&Node::Sink), 3);
    }

    #[test]
    fn four_node_chain() {
        let m = metrics(&chain(&["a", "b", "c", "d"]));
        assert_eq!(m.density, 0.25);
        assert_eq!(m.simple_cycle_count, 0);
        assert_eq!(m.motif, Motif::Chain);
    }

    #[test]
    fn self_loop_only() {
        let m = metrics(&chain(&["a", "a"]));
        assert_eq!(m.self_loop_count, 1);
        assert_eq!(m.simple_cycle_count, 0);
        assert_eq!(m.motif, Motif::Cyclic);
        assert_eq!(m.density, 0.0);
    }

    #[test]
    fn complete_digraph_on_three() {
        let m = metrics(&TopologyGraph::from_branches(&[
            vec!["a", "b", "c", "a", "c", "b", "a"],
        ]));
        assert_eq!(m.density, 1.0);
        assert_eq!(m.simple_cycle_count, 5);
    }

    #[test]
    fn tree_and_dag() {
        let tree = TopologyGraph::from_branches(&[vec!["a", "b"], vec!["a", "c"]]);
        assert_eq!(metrics(&tree).motif, Motif::Tree);
        let dag = TopologyGraph::from_branches(&[vec!["a", "c"], vec!["b", "c"]]);
        assert_eq!(metrics(&dag).motif, Motif::Dag);
        let forest = TopologyGraph::from_branches(&[vec!["a"], vec!["b"]]);
        assert_eq!(metrics(&forest).motif, Motif::Tree);
    }

    #[test]
    fn cycle_cap_saturates() {
        // complete digraph on 6 nodes has 409 elementary cycles
        let adj: Vec<Vec<usize>> = (0..6).map(|i| (0..6).filter(|&j| j != i).collect()).collect();
        assert_eq!(count_simple_cycles(&adj, usize::MAX), (409, false));
        assert_eq!(count_simple_cycles(&adj, 100), (100, true));
    }

    #[test]
    fn trend_examples() {
        let constant = vec![3.5; 40];
        assert_eq!(moving_average(&constant, 25), constant);
        let xs: Vec<f64> = (0..30).map(|i| (i * i) as f64).collect();
        assert_eq!(moving_average(&xs, 1), xs);
        let ramp: Vec<f64> = (0..100).map(f64::from).collect();
        let smooth = moving_average(&ramp, 25);
        for i in 12..88 {
            assert!((smooth[i] - ramp[i]).abs() < 1e-9);
        }
        assert_eq!(smooth.len(), 100);
    }

    #[test]
    fn dot_and_json_export() {
        let g = chain(&["a", "b", "a"]);
        let dot = g.to_dot("ep1");
        assert!(dot.contains("\"agent:a\" -> \"agent:b\""));
        assert!(dot.contains("\"source\" -> \"agent:a\""));
        let json = g.to_json();
        assert_eq!(json["nodes"].as_array().unwrap().len(), 2);
        assert_eq!(json["edges"].as_array().unwrap().len(), 4);
    }
}
