//! Bidirectional trace links, traceability matrices, coverage, and
//! change-impact analysis.
//!
//! Trace links live outside the knowledge graph so lifecycle audit records
//! survive edits to domain knowledge. Impact analysis walks forward over
//! `Impacts` edges and backward over `DependsOn`/`Requires` edges, scoring
//! each affected node `product(edge weights) * gamma^hops` with gamma 0.7,
//! then extends reached requirements through their `ReqToCase` links.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::knowledge_graph::{EdgeType, KnowledgeGraph, NodeType};

pub const DEFAULT_IMPACT_GAMMA: f64 = 0.7;
pub const DEFAULT_IMPACT_DEPTH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LinkType {
    ReqToCase,
    CaseToResult,
    LogicToScenario,
    ChangeToImpact,
}

impl LinkType {
    /// Endpoint node types a link of this type may connect.
    fn endpoint_types(self) -> (NodeType, Option<NodeType>) {
        match self {
            LinkType::ReqToCase => (NodeType::Requirement, Some(NodeType::TestCase)),
            LinkType::CaseToResult => (NodeType::TestCase, Some(NodeType::ExecutionResult)),
            LinkType::LogicToScenario => (NodeType::BusinessProcess, Some(NodeType::TestCase)),
            // Impact targets may be of any type.
            LinkType::ChangeToImpact => (NodeType::ChangeRequest, None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLink {
    pub id: String,
    pub src: String,
    pub dst: String,
    pub link_type: LinkType,
    pub created_at: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("link type {link_type:?} cannot connect {src_type:?} -> {dst_type:?}")]
    TypeMismatch {
        link_type: LinkType,
        src_type: NodeType,
        dst_type: NodeType,
    },
    #[error("unknown link id `{0}`")]
    UnknownLink(String),
    #[error("no Requirement nodes in graph")]
    NoRequirements,
    #[error("trace io failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace file malformed: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceStore {
    links: Vec<TraceLink>,
    next_id: u64,
}

impl TraceStore {
    pub fn new() -> TraceStore {
        TraceStore::default()
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn links(&self) -> &[TraceLink] {
        &self.links
    }

    /// Creates a link after validating endpoints against the graph.
    /// A duplicate (src, dst, type) returns the existing link unchanged.
    pub fn link(
        &mut self,
        graph: &KnowledgeGraph,
        src: &str,
        dst: &str,
        link_type: LinkType,
        created_at: u64,
    ) -> Result<TraceLink, TraceError> {
        let src_node = graph
            .node(src)
            .ok_or_else(|| TraceError::UnknownNode(src.to_string()))?;
        let dst_node = graph
            .node(dst)
            .ok_or_else(|| TraceError::UnknownNode(dst.to_string()))?;
        let (want_src, want_dst) = link_type.endpoint_types();
        let dst_ok = want_dst.map_or(true, |t| dst_node.node_type == t);
        if src_node.node_type != want_src || !dst_ok {
            return Err(TraceError::TypeMismatch {
                link_type,
                src_type: src_node.node_type,
                dst_type: dst_node.node_type,
            });
        }
        if let Some(existing) = self
            .links
            .iter()
            .find(|l| l.src == src && l.dst == dst && l.link_type == link_type)
        {
            return Ok(existing.clone());
        }
        let link = TraceLink {
            id: format!("L{:06}", self.next_id),
            src: src.to_string(),
            dst: dst.to_string(),
            link_type,
            created_at,
        };
        self.next_id += 1;
        self.links.push(link.clone());
        Ok(link)
    }

    pub fn unlink(&mut self, id: &str) -> Result<(), TraceError> {
        let before = self.links.len();
        self.links.retain(|l| l.id != id);
        if self.links.len() == before {
            return Err(TraceError::UnknownLink(id.to_string()));
        }
        Ok(())
    }

    /// Links whose source is `node`.
    pub fn get(&self, link_id: &str) -> Option<&TraceLink> {
        self.links.iter().find(|l| l.id == link_id)
    }

    pub fn forward(&self, node: &str) -> Vec<&TraceLink> {
        self.links.iter().filter(|l| l.src == node).collect()
    }

    /// Links whose destination is `node`.
    pub fn reverse(&self, node: &str) -> Vec<&TraceLink> {
        self.links.iter().filter(|l| l.dst == node).collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), TraceError> {
        std::fs::write(path, serde_json::to_string_pretty(self).expect("store serializes"))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<TraceStore, TraceError> {
        let raw = std::fs::read_to_string(path)?;
        serde_json::from_str(&raw).map_err(|e| TraceError::Malformed(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMatrix {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    /// cells[r][c] is true iff a ReqToCase link exists.
    pub cells: Vec<Vec<bool>>,
}

/// Exact reflection of ReqToCase links over all Requirement and TestCase
/// nodes; unlinked requirements appear as empty rows.
pub fn matrix(store: &TraceStore, graph: &KnowledgeGraph) -> TraceMatrix {
    let mut rows: Vec<String> = graph
        .nodes_of_type(NodeType::Requirement)
        .iter()
        .map(|n| n.id.clone())
        .collect();
    rows.sort();
    let mut cols: Vec<String> = graph
        .nodes_of_type(NodeType::TestCase)
        .iter()
        .map(|n| n.id.clone())
        .collect();
    cols.sort();
    let linked: std::collections::HashSet<(&str, &str)> = store
        .links()
        .iter()
        .filter(|l| l.link_type == LinkType::ReqToCase)
        .map(|l| (l.src.as_str(), l.dst.as_str()))
        .collect();
    let cells = rows
        .iter()
        .map(|r| {
            cols.iter()
                .map(|c| linked.contains(&(r.as_str(), c.as_str())))
                .collect()
        })
        .collect();
    TraceMatrix { rows, cols, cells }
}

impl TraceMatrix {
    /// CSV form: header `requirement_id,<case ids...>`, cells `X` or empty,
    /// LF line endings.
    pub fn to_csv(&self) -> String {
        let mut wtr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let mut header = vec!["requirement_id".to_string()];
        header.extend(self.cols.iter().cloned());
        wtr.write_record(&header).expect("csv write");
        for (r, row) in self.rows.iter().zip(&self.cells) {
            let mut record = vec![r.clone()];
            record.extend(row.iter().map(|&b| if b { "X".to_string() } else { String::new() }));
            wtr.write_record(&record).expect("csv write");
        }
        String::from_utf8(wtr.into_inner().expect("csv flush")).expect("csv utf8")
    }

    pub fn from_csv(raw: &str) -> Result<TraceMatrix, TraceError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_reader(raw.as_bytes());
        let headers = rdr
            .headers()
            .map_err(|e| TraceError::Malformed(e.to_string()))?
            .clone();
        if headers.get(0) != Some("requirement_id") {
            return Err(TraceError::Malformed(
                "first header cell must be `requirement_id`".to_string(),
            ));
        }
        let cols: Vec<String> = headers.iter().skip(1).map(String::from).collect();
        let mut rows = Vec::new();
        let mut cells = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| TraceError::Malformed(e.to_string()))?;
            rows.push(record.get(0).unwrap_or_default().to_string());
            let row: Result<Vec<bool>, TraceError> = record
                .iter()
                .skip(1)
                .map(|cell| match cell {
                    "X" => Ok(true),
                    "" => Ok(false),
                    other => Err(TraceError::Malformed(format!("unexpected cell `{other}`"))),
                })
                .collect();
            cells.push(row?);
        }
        Ok(TraceMatrix { rows, cols, cells })
    }
}

/// Fraction of Requirement nodes holding at least one ReqToCase link.
pub fn coverage(store: &TraceStore, graph: &KnowledgeGraph) -> Result<f64, TraceError> {
    let requirements = graph.nodes_of_type(NodeType::Requirement);
    if requirements.is_empty() {
        return Err(TraceError::NoRequirements);
    }
    let linked = requirements
        .iter()
        .filter(|r| {
            store
                .links()
                .iter()
                .any(|l| l.link_type == LinkType::ReqToCase && l.src == r.id)
        })
        .count();
    Ok(linked as f64 / requirements.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffectedNode {
    pub node_id: String,
    pub node_type: NodeType,
    pub path: Vec<String>,
    pub impact_score: f64,
    pub hops: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactReport {
    pub changed: String,
    pub affected: Vec<AffectedNode>,
}

/// Predictive change-impact traversal. Keeps the max-score path per node;
/// affected nodes are sorted by descending score, ties by ascending id.
pub fn impact(
    changed: &str,
    graph: &KnowledgeGraph,
    store: &TraceStore,
    max_depth: usize,
    gamma: f64,
) -> Result<ImpactReport, TraceError> {
    graph
        .node(changed)
        .ok_or_else(|| TraceError::UnknownNode(changed.to_string()))?;

    // Max-score path per reached node. A path keeps expanding when it
    // improves either the score or the hop count, so a high-score long
    // path never hides the reach of a shorter one.
    let mut best: HashMap<String, (f64, Vec<String>, usize)> = HashMap::new();
    let mut min_hops: HashMap<String, usize> = HashMap::new();
    let mut frontier: Vec<(String, f64, Vec<String>, usize)> =
        vec![(changed.to_string(), 1.0, vec![changed.to_string()], 0)];
    while let Some((node, weight_product, path, hops)) = frontier.pop() {
        if hops == max_depth {
            continue;
        }
        let mut neighbors: Vec<(String, f64)> = Vec::new();
        for e in graph.out_edges(&node) {
            if e.edge_type == EdgeType::Impacts {
                neighbors.push((e.dst.clone(), e.weight));
            }
        }
        for e in graph.in_edges(&node) {
            if matches!(e.edge_type, EdgeType::DependsOn | EdgeType::Requires) {
                neighbors.push((e.src.clone(), e.weight));
            }
        }
        for (next, w) in neighbors {
            if next == changed {
                continue;
            }
            let product = weight_product * w;
            let next_hops = hops + 1;
            let score = product * gamma.powi(next_hops as i32);
            let better_score = best
                .get(&next)
                .map_or(true, |(prev, _, _)| score > *prev);
            let fewer_hops = min_hops
                .get(&next)
                .map_or(true, |&prev| next_hops < prev);
            if better_score || fewer_hops {
                let mut next_path = path.clone();
                next_path.push(next.clone());
                if better_score {
                    best.insert(next.clone(), (score, next_path.clone(), next_hops));
                }
                if fewer_hops {
                    min_hops.insert(next.clone(), next_hops);
                }
                frontier.push((next, product, next_path, next_hops));
            }
        }
    }

    // Requirements extend through ReqToCase links at zero extra hops.
    let extensions: Vec<(String, (f64, Vec<String>, usize))> = best
        .iter()
        .filter(|(id, _)| {
            graph
                .node(id)
                .is_some_and(|n| n.node_type == NodeType::Requirement)
        })
        .flat_map(|(req, (score, path, hops))| {
            store
                .forward(req)
                .into_iter()
                .filter(|l| l.link_type == LinkType::ReqToCase)
                .map(|l| {
                    let mut case_path = path.clone();
                    case_path.push(l.dst.clone());
                    (l.dst.clone(), (*score, case_path, *hops))
                })
                .collect::<Vec<_>>()
        })
        .collect();
    for (case, (score, path, hops)) in extensions {
        let better = best.get(&case).map_or(true, |(prev, _, _)| score > *prev);
        if better {
            best.insert(case, (score, path, hops));
        }
    }

    let mut affected: Vec<AffectedNode> = best
        .into_iter()
        .map(|(node_id, (impact_score, path, hops))| AffectedNode {
            node_type: graph.node(&node_id).map(|n| n.node_type).unwrap_or(NodeType::TestCase),
            node_id,
            path,
            impact_score,
            hops,
        })
        .collect();
    affected.sort_by(|a, b| {
        b.impact_score
            .partial_cmp(&a.impact_score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.node_id.cmp(&b.node_id))
    });
    Ok(ImpactReport {
        changed: changed.to_string(),
        affected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge_graph::node;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn graph_with(reqs: usize, cases: usize) -> KnowledgeGraph {
        let mut g = KnowledgeGraph::new();
        for i in 0..reqs {
            g.add_node(node(&format!("r{i}"), NodeType::Requirement, "req")).unwrap();
        }
        for i in 0..cases {
            g.add_node(node(&format!("c{i}"), NodeType::TestCase, "case")).unwrap();
        }
        g
    }

    #[test]
    fn link_queryable_in_both_directions() {
        let g = graph_with(1, 1);
        let mut store = TraceStore::new();
        let link = store.link(&g, "r0", "c0", LinkType::ReqToCase, 10).unwrap();
        assert_eq!(store.forward("r0"), vec![&link]);
        assert_eq!(store.reverse("c0"), vec![&link]);
    }

    #[test]
    fn duplicate_link_returns_existing() {
        let g = graph_with(1, 1);
        let mut store = TraceStore::new();
        let a = store.link(&g, "r0", "c0", LinkType::ReqToCase, 10).unwrap();
        let b = store.link(&g, "r0", "c0", LinkType::ReqToCase, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn type_mismatch_rejected() {
        let g = graph_with(2, 0);
        let mut store = TraceStore::new();
        assert!(matches!(
            store.link(&g, "r0", "r1", LinkType::ReqToCase, 0).unwrap_err(),
            TraceError::TypeMismatch { .. }
        ));
    }

    #[test]
    fn unlink_removes() {
        let g = graph_with(1, 1);
        let mut store = TraceStore::new();
        let link = store.link(&g, "r0", "c0", LinkType::ReqToCase, 0).unwrap();
        store.unlink(&link.id).unwrap();
        assert!(store.is_empty());
        assert!(matches!(store.unlink(&link.id).unwrap_err(), TraceError::UnknownLink(_)));
    }

    #[test]
    fn matrix_reflects_links_with_empty_rows() {
        let g = graph_with(2, 2);
        let mut store = TraceStore::new();
        store.link(&g, "r0", "c0", LinkType::ReqToCase, 0).unwrap();
        store.link(&g, "r0", "c1", LinkType::ReqToCase, 0).unwrap();
        let m = matrix(&store, &g);
        assert_eq!(m.rows, vec!["r0", "r1"]);
        assert_eq!(m.cols, vec!["c0", "c1"]);
        assert_eq!(m.cells, vec![vec![true, true], vec![false, false]]);
    }

    #[test]
    fn empty_store_matrix_is_all_empty() {
        let g = graph_with(2, 1);
        let m = matrix(&TraceStore::new(), &g);
        assert!(m.cells.iter().flatten().all(|&b| !b));
    }

    #[test]
    fn matrix_csv_round_trip() {
        let g = graph_with(3, 2);
        let mut store = TraceStore::new();
        store.link(&g, "r1", "c0", LinkType::ReqToCase, 0).unwrap();
        let m = matrix(&store, &g);
        let csv = m.to_csv();
        assert!(csv.starts_with("requirement_id,c0,c1\n"));
        assert!(!csv.contains('\r'));
        assert_eq!(TraceMatrix::from_csv(&csv).unwrap(), m);
    }

    #[test]
    fn coverage_fractions() {
        let g = graph_with(4, 4);
        let mut store = TraceStore::new();
        assert_eq!(coverage(&store, &g).unwrap(), 0.0);
        for i in 0..3 {
            store
                .link(&g, &format!("r{i}"), &format!("c{i}"), LinkType::ReqToCase, 0)
                .unwrap();
        }
        assert!((coverage(&store, &g).unwrap() - 0.75).abs() < 1e-12);
        store.link(&g, "r3", "c3", LinkType::ReqToCase, 0).unwrap();
        assert_eq!(coverage(&store, &g).unwrap(), 1.0);
        assert!(matches!(
            coverage(&store, &KnowledgeGraph::new()).unwrap_err(),
            TraceError::NoRequirements
        ));
    }

    #[test]
    fn impact_isolated_node_is_empty() {
        let g = graph_with(1, 0);
        let report = impact("r0", &g, &TraceStore::new(), 4, 0.7).unwrap();
        assert!(report.affected.is_empty());
    }

    #[test]
    fn impact_chain_with_link_extension() {
        // component --Impacts(0.8)--> requirement --ReqToCase--> case
        let mut g = graph_with(1, 1);
        g.add_node(node("comp", NodeType::Component, "comp")).unwrap();
        g.add_weighted_edge("comp", "r0", EdgeType::Impacts, 0.8).unwrap();
        let mut store = TraceStore::new();
        store.link(&g, "r0", "c0", LinkType::ReqToCase, 0).unwrap();
        let report = impact("comp", &g, &store, 4, 0.7).unwrap();
        let req = report.affected.iter().find(|a| a.node_id == "r0").unwrap();
        assert!((req.impact_score - 0.8 * 0.7).abs() < 1e-12);
        let case = report.affected.iter().find(|a| a.node_id == "c0").unwrap();
        // Link extension adds no hop: same 0.56 score.
        assert!((case.impact_score - 0.56).abs() < 1e-12);
        assert_eq!(case.path, vec!["comp", "r0", "c0"]);
        assert!(report.affected.iter().all(|a| a.path[0] == "comp"));
    }

    /// Brute-force closure over the impact edge relation, depth-limited.
    fn closure_oracle(g: &KnowledgeGraph, start: &str, depth: usize) -> std::collections::BTreeSet<String> {
        let mut reached: std::collections::BTreeSet<String> = [start.to_string()].into();
        for _ in 0..depth {
            let mut next = reached.clone();
            for e in g.edges() {
                if e.edge_type == EdgeType::Impacts && reached.contains(&e.src) {
                    next.insert(e.dst.clone());
                }
                if matches!(e.edge_type, EdgeType::DependsOn | EdgeType::Requires)
                    && reached.contains(&e.dst)
                {
                    next.insert(e.src.clone());
                }
            }
            reached = next;
        }
        reached.remove(start);
        reached
    }

    #[test]
    fn impact_set_matches_closure_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let mut g = KnowledgeGraph::new();
            let n = rng.gen_range(8..20);
            for i in 0..n {
                g.add_node(node(&format!("n{i:02}"), NodeType::Component, "c")).unwrap();
            }
            for _ in 0..(n * 2) {
                let a = format!("n{:02}", rng.gen_range(0..n));
                let b = format!("n{:02}", rng.gen_range(0..n));
                if a != b {
                    let t = [EdgeType::Impacts, EdgeType::DependsOn, EdgeType::Requires, EdgeType::Covers]
                        [rng.gen_range(0..4)];
                    let _ = g.add_weighted_edge(&a, &b, t, rng.gen_range(0.1..1.0));
                }
            }
            let report = impact("n00", &g, &TraceStore::new(), 4, 0.7).unwrap();
            let got: std::collections::BTreeSet<String> =
                report.affected.iter().map(|a| a.node_id.clone()).collect();
            assert_eq!(got, closure_oracle(&g, "n00", 4));
        }
    }

    #[test]
    fn impact_monotone_in_depth() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut g = KnowledgeGraph::new();
        for i in 0..15 {
            g.add_node(node(&format!("n{i:02}"), NodeType::Component, "c")).unwrap();
        }
        for _ in 0..40 {
            let a = format!("n{:02}", rng.gen_range(0..15));
            let b = format!("n{:02}", rng.gen_range(0..15));
            if a != b {
                let _ = g.add_weighted_edge(&a, &b, EdgeType::Impacts, rng.gen_range(0.1..1.0));
            }
        }
        let mut prev: std::collections::BTreeSet<String> = Default::default();
        for depth in 0..6 {
            let report = impact("n00", &g, &TraceStore::new(), depth, 0.7).unwrap();
            let now: std::collections::BTreeSet<String> =
                report.affected.iter().map(|a| a.node_id.clone()).collect();
            assert!(prev.is_subset(&now), "depth {depth} removed nodes");
            prev = now;
        }
    }

    #[test]
    fn bidirectional_equivalence_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let g = graph_with(50, 50);
        let mut store = TraceStore::new();
        for _ in 0..500 {
            let r = format!("r{}", rng.gen_range(0..50));
            let c = format!("c{}", rng.gen_range(0..50));
            store.link(&g, &r, &c, LinkType::ReqToCase, 0).unwrap();
        }
        for link in store.links() {
            assert!(store.forward(&link.src).contains(&link));
            assert!(store.reverse(&link.dst).contains(&link));
        }
    }

    #[test]
    fn store_round_trip() {
        let g = graph_with(2, 2);
        let mut store = TraceStore::new();
        store.link(&g, "r0", "c1", LinkType::ReqToCase, 7).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.json");
        store.save(&path).unwrap();
        assert_eq!(TraceStore::load(&path).unwrap(), store);
    }
}
