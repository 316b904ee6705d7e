//! Typed, weighted property graph over testing entities.
//!
//! Edges are directed and carry a weight in (0,1]. Traversals expose BFS,
//! DFS, Dijkstra shortest path over cost `1 - weight + 1e-6` (important
//! relationships are "closer"), and weighted PageRank with uniform
//! dangling-mass redistribution.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const EDGE_COST_EPSILON: f64 = 1e-6;
pub const DEFAULT_DAMPING: f64 = 0.85;
pub const DEFAULT_PAGERANK_TOL: f64 = 1e-8;
pub const DEFAULT_PAGERANK_MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeType {
    Requirement,
    TestCase,
    BusinessProcess,
    Component,
    Interface,
    ChangeRequest,
    ExecutionResult,
    Configuration,
    Regulation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeType {
    Requires,
    Validates,
    DependsOn,
    Impacts,
    Covers,
    ImplementedBy,
    PartOf,
    PrecededBy,
    InterfacesWith,
    MapsTo,
    DerivedFrom,
    Executes,
    Configures,
    Supersedes,
    ConflictsWith,
}

impl EdgeType {
    pub const ALL: [EdgeType; 15] = [
        EdgeType::Requires,
        EdgeType::Validates,
        EdgeType::DependsOn,
        EdgeType::Impacts,
        EdgeType::Covers,
        EdgeType::ImplementedBy,
        EdgeType::PartOf,
        EdgeType::PrecededBy,
        EdgeType::InterfacesWith,
        EdgeType::MapsTo,
        EdgeType::DerivedFrom,
        EdgeType::Executes,
        EdgeType::Configures,
        EdgeType::Supersedes,
        EdgeType::ConflictsWith,
    ];

    pub fn default_weight(self) -> f64 {
        match self {
            EdgeType::Requires | EdgeType::DependsOn => 0.9,
            EdgeType::Validates | EdgeType::Covers => 0.85,
            EdgeType::Impacts | EdgeType::MapsTo => 0.8,
            _ => 0.6,
        }
    }
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphNode {
    pub id: String,
    #[serde(rename = "type")]
    pub node_type: NodeType,
    pub label: String,
    #[serde(default)]
    pub attrs: BTreeMap<String, String>,
    #[serde(default)]
    pub chunk_refs: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphEdge {
    pub src: String,
    pub dst: String,
    #[serde(rename = "type")]
    pub edge_type: EdgeType,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Out,
    In,
    Both,
}

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("duplicate node `{0}`")]
    DuplicateNode(String),
    #[error("edge ({src})-[{edge_type}]->({dst}) already exists")]
    DuplicateEdge {
        src: String,
        dst: String,
        edge_type: EdgeType,
    },
    #[error("edge weight {0} outside (0,1]")]
    BadWeight(f64),
    #[error("graph is empty")]
    EmptyGraph,
    #[error("graph io failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("graph file malformed: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnowledgeGraph {
    nodes: BTreeMap<String, GraphNode>,
    edges: Vec<GraphEdge>,
    out_adj: HashMap<String, Vec<usize>>,
    in_adj: HashMap<String, Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PageRankResult {
    pub scores: BTreeMap<String, f64>,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PathResult {
    Found { path: Vec<String>, cost: f64 },
    NoPath,
}

impl KnowledgeGraph {
    pub fn new() -> KnowledgeGraph {
        KnowledgeGraph::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn add_chunk_ref(&mut self, node_id: &str, chunk_id: &str) -> Result<(), GraphError> {
        let node = self
            .nodes
            .get_mut(node_id)
            .ok_or_else(|| GraphError::UnknownNode(node_id.to_string()))?;
        node.chunk_refs.insert(chunk_id.to_string());
        Ok(())
    }

    pub fn node(&self, id: &str) -> Option<&GraphNode> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &GraphNode> {
        self.nodes.values()
    }

    pub fn edges(&self) -> &[GraphEdge] {
        &self.edges
    }

    pub fn nodes_of_type(&self, node_type: NodeType) -> Vec<&GraphNode> {
        self.nodes
            .values()
            .filter(|n| n.node_type == node_type)
            .collect()
    }

    fn require_node(&self, id: &str) -> Result<(), GraphError> {
        if self.nodes.contains_key(id) {
            Ok(())
        } else {
            Err(GraphError::UnknownNode(id.to_string()))
        }
    }

    pub fn add_node(&mut self, node: GraphNode) -> Result<(), GraphError> {
        if self.nodes.contains_key(&node.id) {
            return Err(GraphError::DuplicateNode(node.id));
        }
        self.out_adj.entry(node.id.clone()).or_default();
        self.in_adj.entry(node.id.clone()).or_default();
        self.nodes.insert(node.id.clone(), node);
        Ok(())
    }

    /// Adds a directed edge with the type's default weight.
    pub fn add_edge(&mut self, src: &str, dst: &str, edge_type: EdgeType) -> Result<(), GraphError> {
        self.add_weighted_edge(src, dst, edge_type, edge_type.default_weight())
    }

    pub fn add_weighted_edge(
        &mut self,
        src: &str,
        dst: &str,
        edge_type: EdgeType,
        weight: f64,
    ) -> Result<(), GraphError> {
        self.require_node(src)?;
        self.require_node(dst)?;
        if !(weight > 0.0 && weight <= 1.0) {
            return Err(GraphError::BadWeight(weight));
        }
        // Parallel edges allowed only with distinct types.
        if self
            .edges
            .iter()
            .any(|e| e.src == src && e.dst == dst && e.edge_type == edge_type)
        {
            return Err(GraphError::DuplicateEdge {
                src: src.to_string(),
                dst: dst.to_string(),
                edge_type,
            });
        }
        let idx = self.edges.len();
        self.edges.push(GraphEdge {
            src: src.to_string(),
            dst: dst.to_string(),
            edge_type,
            weight,
        });
        self.out_adj.get_mut(src).unwrap().push(idx);
        self.in_adj.get_mut(dst).unwrap().push(idx);
        Ok(())
    }

    /// Removes a node and every edge touching it.
    pub fn remove_node(&mut self, id: &str) -> Result<(), GraphError> {
        self.require_node(id)?;
        self.nodes.remove(id);
        let kept: Vec<GraphEdge> = self
            .edges
            .drain(..)
            .filter(|e| e.src != id && e.dst != id)
            .collect();
        self.rebuild_adjacency(kept);
        Ok(())
    }

    pub fn remove_edge(&mut self, src: &str, dst: &str, edge_type: EdgeType) -> Result<(), GraphError> {
        let before = self.edges.len();
        let kept: Vec<GraphEdge> = self
            .edges
            .drain(..)
            .filter(|e| !(e.src == src && e.dst == dst && e.edge_type == edge_type))
            .collect();
        if kept.len() == before {
            self.rebuild_adjacency(kept);
            return Err(GraphError::UnknownNode(format!("{src}->{dst}")));
        }
        self.rebuild_adjacency(kept);
        Ok(())
    }

    fn rebuild_adjacency(&mut self, edges: Vec<GraphEdge>) {
        self.edges = edges;
        self.out_adj.clear();
        self.in_adj.clear();
        for id in self.nodes.keys() {
            self.out_adj.insert(id.clone(), Vec::new());
            self.in_adj.insert(id.clone(), Vec::new());
        }
        for (idx, e) in self.edges.iter().enumerate() {
            self.out_adj.get_mut(&e.src).unwrap().push(idx);
            self.in_adj.get_mut(&e.dst).unwrap().push(idx);
        }
    }

    pub fn out_edges(&self, id: &str) -> Vec<&GraphEdge> {
        self.out_adj
            .get(id)
            .map(|v| v.iter().map(|&i| &self.edges[i]).collect())
            .unwrap_or_default()
    }

    pub fn in_edges(&self, id: &str) -> Vec<&GraphEdge> {
        self.in_adj
            .get(id)
            .map(|v| v.iter().map(|&i| &self.edges[i]).collect())
            .unwrap_or_default()
    }

    fn sorted_out_neighbors(&self, id: &str) -> Vec<String> {
        let mut n: Vec<String> = self.out_edges(id).iter().map(|e| e.dst.clone()).collect();
        n.sort();
        n.dedup();
        n
    }

    /// Layered BFS. Each reachable node appears once at its minimum depth;
    /// nodes within a depth are ordered by ascending id.
    pub fn bfs(&self, start: &str, max_depth: usize) -> Result<Vec<(String, usize)>, GraphError> {
        self.require_node(start)?;
        let mut seen: BTreeSet<String> = BTreeSet::new();
        seen.insert(start.to_string());
        let mut result = vec![(start.to_string(), 0)];
        let mut frontier = vec![start.to_string()];
        for depth in 1..=max_depth {
            let mut next: BTreeSet<String> = BTreeSet::new();
            for node in &frontier {
                for nb in self.sorted_out_neighbors(node) {
                    if !seen.contains(&nb) {
                        next.insert(nb);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            for nb in &next {
                seen.insert(nb.clone());
                result.push((nb.clone(), depth));
            }
            frontier = next.into_iter().collect();
        }
        Ok(result)
    }

    /// Depth-limited preorder DFS, neighbors visited in ascending-id order.
    pub fn dfs(&self, start: &str, max_depth: usize) -> Result<Vec<String>, GraphError> {
        self.require_node(start)?;
        let mut visited: BTreeSet<String> = BTreeSet::new();
        let mut order = Vec::new();
        self.dfs_visit(start, 0, max_depth, &mut visited, &mut order);
        Ok(order)
    }

    fn dfs_visit(
        &self,
        node: &str,
        depth: usize,
        max_depth: usize,
        visited: &mut BTreeSet<String>,
        order: &mut Vec<String>,
    ) {
        if !visited.insert(node.to_string()) {
            return;
        }
        order.push(node.to_string());
        if depth == max_depth {
            return;
        }
        for nb in self.sorted_out_neighbors(node) {
            if !visited.contains(&nb) {
                self.dfs_visit(&nb, depth + 1, max_depth, visited, order);
            }
        }
    }

    /// Dijkstra over edge cost `1 - weight + epsilon`; equal-cost ties pick
    /// the lexicographically smallest node-id path. Parallel edges
    /// contribute their cheapest cost.
    pub fn shortest_path(&self, src: &str, dst: &str) -> Result<PathResult, GraphError> {
        self.require_node(src)?;
        self.require_node(dst)?;
        if src == dst {
            return Ok(PathResult::Found {
                path: vec![src.to_string()],
                cost: 0.0,
            });
        }

        #[derive(PartialEq)]
        struct State {
            cost: f64,
            path: Vec<String>,
        }
        impl Eq for State {}
        impl Ord for State {
            fn cmp(&self, other: &Self) -> Ordering {
                // BinaryHeap is a max-heap; invert for min behavior.
                other
                    .cost
                    .partial_cmp(&self.cost)
                    .unwrap_or(Ordering::Equal)
                    .then_with(|| other.path.cmp(&self.path))
            }
        }
        impl PartialOrd for State {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }

        let mut heap = BinaryHeap::new();
        heap.push(State {
            cost: 0.0,
            path: vec![src.to_string()],
        });
        let mut finalized: BTreeSet<String> = BTreeSet::new();
        while let Some(State { cost, path }) = heap.pop() {
            let node = path.last().unwrap().clone();
            if !finalized.insert(node.clone()) {
                continue;
            }
            if node == dst {
                return Ok(PathResult::Found { path, cost });
            }
            // Cheapest parallel edge per neighbor.
            let mut best: BTreeMap<String, f64> = BTreeMap::new();
            for e in self.out_edges(&node) {
                let c = 1.0 - e.weight + EDGE_COST_EPSILON;
                let entry = best.entry(e.dst.clone()).or_insert(f64::INFINITY);
                if c < *entry {
                    *entry = c;
                }
            }
            for (nb, c) in best {
                if !finalized.contains(&nb) {
                    let mut next_path = path.clone();
                    next_path.push(nb);
                    heap.push(State {
                        cost: cost + c,
                        path: next_path,
                    });
                }
            }
        }
        Ok(PathResult::NoPath)
    }

    /// Weighted PageRank by power iteration. Transition probability from a
    /// node is proportional to outgoing edge weight; dangling mass is
    /// spread uniformly. Converges when the L1 delta drops below `tol`.
    pub fn pagerank(
        &self,
        damping: f64,
        tol: f64,
        max_iter: usize,
    ) -> Result<PageRankResult, GraphError> {
        if self.is_empty() {
            return Err(GraphError::EmptyGraph);
        }
        let ids: Vec<&String> = self.nodes.keys().collect();
        let n = ids.len();
        let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();

        // Row-normalized weighted transitions.
        let mut out_weight = vec![0.0f64; n];
        for e in &self.edges {
            out_weight[index[e.src.as_str()]] += e.weight;
        }
        let mut scores = vec![1.0 / n as f64; n];
        let mut iterations = 0;
        let mut converged = false;
        while iterations < max_iter {
            iterations += 1;
            let mut next = vec![(1.0 - damping) / n as f64; n];
            let mut dangling_mass = 0.0;
            for (i, &s) in scores.iter().enumerate() {
                if out_weight[i] == 0.0 {
                    dangling_mass += s;
                }
            }
            for e in &self.edges {
                let i = index[e.src.as_str()];
                let j = index[e.dst.as_str()];
                next[j] += damping * scores[i] * (e.weight / out_weight[i]);
            }
            let dangling_share = damping * dangling_mass / n as f64;
            for v in &mut next {
                *v += dangling_share;
            }
            let delta: f64 = next.iter().zip(&scores).map(|(a, b)| (a - b).abs()).sum();
            scores = next;
            if delta < tol {
                converged = true;
                break;
            }
        }
        Ok(PageRankResult {
            scores: ids
                .into_iter()
                .cloned()
                .zip(scores)
                .collect(),
            converged,
            iterations,
        })
    }

    /// Typed adjacency in ascending-id order.
    pub fn neighbors_by_type(
        &self,
        node: &str,
        types: &BTreeSet<EdgeType>,
        direction: Direction,
    ) -> Result<Vec<String>, GraphError> {
        self.require_node(node)?;
        let mut out: BTreeSet<String> = BTreeSet::new();
        if matches!(direction, Direction::Out | Direction::Both) {
            for e in self.out_edges(node) {
                if types.contains(&e.edge_type) {
                    out.insert(e.dst.clone());
                }
            }
        }
        if matches!(direction, Direction::In | Direction::Both) {
            for e in self.in_edges(node) {
                if types.contains(&e.edge_type) {
                    out.insert(e.src.clone());
                }
            }
        }
        Ok(out.into_iter().collect())
    }

    /// Targets of outgoing MapsTo edges, descending weight, ties by id.
    pub fn map_old_to_new(&self, old_component: &str) -> Result<Vec<String>, GraphError> {
        self.require_node(old_component)?;
        let mut targets: Vec<(&GraphEdge, &str)> = self
            .out_edges(old_component)
            .into_iter()
            .filter(|e| e.edge_type == EdgeType::MapsTo)
            .map(|e| (e, e.dst.as_str()))
            .collect();
        targets.sort_by(|a, b| {
            b.0.weight
                .partial_cmp(&a.0.weight)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.1.cmp(b.1))
        });
        Ok(targets.into_iter().map(|(_, id)| id.to_string()).collect())
    }

    pub fn save(&self, path: &Path) -> Result<(), GraphError> {
        let file = GraphFile {
            nodes: self.nodes.values().cloned().collect(),
            edges: self.edges.clone(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&file).expect("graph serializes"))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<KnowledgeGraph, GraphError> {
        let raw = std::fs::read_to_string(path)?;
        Self::from_json(&raw)
    }

    pub fn from_json(raw: &str) -> Result<KnowledgeGraph, GraphError> {
        let file: GraphFile =
            serde_json::from_str(raw).map_err(|e| GraphError::Malformed(e.to_string()))?;
        let mut g = KnowledgeGraph::new();
        for node in file.nodes {
            g.add_node(node).map_err(|e| GraphError::Malformed(e.to_string()))?;
        }
        for edge in file.edges {
            g.add_weighted_edge(&edge.src, &edge.dst, edge.edge_type, edge.weight)
                .map_err(|e| GraphError::Malformed(e.to_string()))?;
        }
        Ok(g)
    }

    pub fn to_json(&self) -> String {
        let file = GraphFile {
            nodes: self.nodes.values().cloned().collect(),
            edges: self.edges.clone(),
        };
        serde_json::to_string_pretty(&file).expect("graph serializes")
    }

    /// No edge may reference a missing endpoint.
    pub fn check_integrity(&self) -> bool {
        self.edges
            .iter()
            .all(|e| self.nodes.contains_key(&e.src) && self.nodes.contains_key(&e.dst))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    nodes: Vec<GraphNode>,
    edges: Vec<GraphEdge>,
}

pub fn node(id: &str, node_type: NodeType, label: &str) -> GraphNode {
    GraphNode {
        id: id.to_string(),
        node_type,
        label: label.to_string(),
        attrs: BTreeMap::new(),
        chunk_refs: BTreeSet::new(),
    }
}
