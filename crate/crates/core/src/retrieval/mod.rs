//! Four-stage retrieval and context assembly.
//!
//! BasicRag scores chunks by token Jaccard overlap, VectorSearch delegates
//! to the vector index, and HybridRag fuses vector hits with typed graph
//! expansion: a direct hit scores `(1-alpha)*similarity`, a chunk reached
//! over the graph scores `alpha * seed * gamma^hops * product(weights)`.
//! Assembly sorts, budget-truncates, and is invariant in the worker count.

mod conflict;

pub use conflict::{
    resolve_conflicts, ConflictRecord, EscalationRecord, STRATEGY_COUNT, STRATEGY_NAMES,
};

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::corpus::Corpus;
use crate::knowledge_graph::{EdgeType, KnowledgeGraph};
use crate::vector_index::{IndexError, VectorIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StageMode {
    BasicRag,
    VectorSearch,
    HybridRag,
    Agentic,
}

impl StageMode {
    pub const ALL: [StageMode; 4] = [
        StageMode::BasicRag,
        StageMode::VectorSearch,
        StageMode::HybridRag,
        StageMode::Agentic,
    ];

    pub fn parse(s: &str) -> Option<StageMode> {
        match s.to_ascii_lowercase().as_str() {
            "basic" | "basicrag" => Some(StageMode::BasicRag),
            "vector" | "vectorsearch" => Some(StageMode::VectorSearch),
            "hybrid" | "hybridrag" => Some(StageMode::HybridRag),
            "agentic" => Some(StageMode::Agentic),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ItemOrigin {
    VectorHit,
    GraphExpansion {
        seed_chunk_id: String,
        path_edge_types: Vec<EdgeType>,
        hops: usize,
    },
    Keyword,
}

impl ItemOrigin {
    pub fn hops(&self) -> usize {
        match self {
            ItemOrigin::GraphExpansion { hops, .. } => *hops,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub timestamp: u64,
    pub credibility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextItem {
    pub chunk_id: String,
    pub score: f64,
    pub origin: ItemOrigin,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextBundle {
    pub query: String,
    pub mode: StageMode,
    pub items: Vec<ContextItem>,
    pub conflicts_resolved: Vec<ConflictRecord>,
    pub escalations: Vec<EscalationRecord>,
    pub token_budget: usize,
}

#[derive(Debug, Clone)]
pub struct RetrievalParams {
    pub k: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub depth: usize,
    pub token_budget: usize,
    pub workers: usize,
    pub authoritative_sources: Vec<String>,
}

impl RetrievalParams {
    pub fn from_config(config: &Config, k: usize) -> RetrievalParams {
        RetrievalParams {
            k,
            alpha: config.retrieval_alpha,
            gamma: config.retrieval_gamma,
            depth: config.retrieval_depth,
            token_budget: config.retrieval_token_budget,
            workers: config.retrieval_workers,
            authoritative_sources: config.conflict_authoritative_sources.clone(),
        }
    }
}

impl Default for RetrievalParams {
    fn default() -> Self {
        RetrievalParams::from_config(&Config::default(), 5)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("vector index missing or unusable: {0}")]
    IndexMissing(String),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("workers must be in 1..=8, got {0}")]
    BadWorkers(usize),
}

/// Jaccard overlap of lowercased token sets, in [0,1].
pub fn keyword_score(query: &str, chunk_text: &str) -> f64 {
    let q: std::collections::BTreeSet<String> =
        query.split_whitespace().map(|t| t.to_lowercase()).collect();
    let c: std::collections::BTreeSet<String> = chunk_text
        .split_whitespace()
        .map(|t| t.to_lowercase())
        .collect();
    if q.is_empty() || c.is_empty() {
        return 0.0;
    }
    let inter = q.intersection(&c).count();
    let union = q.union(&c).count();
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Score of a chunk reached by graph expansion from a vector seed.
pub fn hybrid_score(seed_score: f64, hops: usize, edge_weights: &[f64], alpha: f64, gamma: f64) -> f64 {
    let product: f64 = edge_weights.iter().product();
    alpha * seed_score * gamma.powi(hops as i32) * product
}

fn provenance_of(corpus: &Corpus, chunk_id: &str) -> Provenance {
    corpus
        .get(chunk_id)
        .map(|c| Provenance {
            source: c.source.clone(),
            timestamp: c.timestamp,
            credibility: c.credibility,
        })
        .unwrap_or(Provenance {
            source: String::new(),
            timestamp: 0,
            credibility: 0.0,
        })
}

fn basic_items(query: &str, corpus: &Corpus, k: usize) -> Vec<ContextItem> {
    let mut items: Vec<ContextItem> = corpus
        .chunks
        .iter()
        .filter_map(|chunk| {
            let score = keyword_score(query, &chunk.text);
            (score > 0.0).then(|| ContextItem {
                chunk_id: chunk.id.clone(),
                score,
                origin: ItemOrigin::Keyword,
                provenance: provenance_of(corpus, &chunk.id),
            })
        })
        .collect();
    sort_items(&mut items);
    items.truncate(k);
    items
}

fn vector_items(
    query: &str,
    corpus: &Corpus,
    index: &VectorIndex,
    k: usize,
) -> Result<Vec<ContextItem>, RetrievalError> {
    let hits = index.search(query, k)?;
    Ok(hits
        .into_iter()
        .map(|h| ContextItem {
            provenance: provenance_of(corpus, &h.chunk_id),
            chunk_id: h.chunk_id,
            score: h.score,
            origin: ItemOrigin::VectorHit,
        })
        .collect())
}

/// Best-scoring expansion path to each graph node reachable from the seed
/// nodes within `depth` hops, following edges in both directions.
struct Expansion {
    hops: usize,
    edge_types: Vec<EdgeType>,
    weight_product: f64,
}

fn expand_from_node(
    graph: &KnowledgeGraph,
    start: &str,
    depth: usize,
) -> BTreeMap<String, Expansion> {
    let mut best: BTreeMap<String, Expansion> = BTreeMap::new();
    let mut min_hops: BTreeMap<String, usize> = BTreeMap::new();
    let mut frontier: Vec<(String, usize, Vec<EdgeType>, f64)> =
        vec![(start.to_string(), 0, Vec::new(), 1.0)];
    while let Some((node, hops, path, product)) = frontier.pop() {
        if hops == depth {
            continue;
        }
        let mut step = |other: &str, edge_type: EdgeType, weight: f64| {
            if other == start {
                return None;
            }
            let next_product = product * weight;
            let next_hops = hops + 1;
            let mut next_path = path.clone();
            next_path.push(edge_type);
            let better = match best.get(other) {
                None => true,
                Some(prev) => next_product * 0.5f64.powi(next_hops as i32)
                    > prev.weight_product * 0.5f64.powi(prev.hops as i32),
            };
            let fewer = min_hops.get(other).map_or(true, |&prev| next_hops < prev);
            if better {
                best.insert(
                    other.to_string(),
                    Expansion {
                        hops: next_hops,
                        edge_types: next_path.clone(),
                        weight_product: next_product,
                    },
                );
            }
            if fewer {
                min_hops.insert(other.to_string(), next_hops);
            }
            (better || fewer).then(|| (other.to_string(), next_hops, next_path, next_product))
        };
        let mut pushes = Vec::new();
        for e in graph.out_edges(&node) {
            if let Some(p) = step(&e.dst, e.edge_type, e.weight) {
                pushes.push(p);
            }
        }
        for e in graph.in_edges(&node) {
            if let Some(p) = step(&e.src, e.edge_type, e.weight) {
                pushes.push(p);
            }
        }
        frontier.extend(pushes);
    }
    best
}

fn hybrid_items(
    query: &str,
    corpus: &Corpus,
    index: &VectorIndex,
    graph: &KnowledgeGraph,
    params: &RetrievalParams,
) -> Result<Vec<ContextItem>, RetrievalError> {
    // Seeds ranked without the top-k cutoff so expansion sees every
    // above-threshold hit.
    let seeds = index.search(query, usize::MAX)?;
    let mut best: HashMap<String, ContextItem> = HashMap::new();
    let mut consider = |item: ContextItem| match best.get(&item.chunk_id) {
        Some(prev) if prev.score >= item.score => {}
        _ => {
            best.insert(item.chunk_id.clone(), item);
        }
    };

    // chunk -> nodes referencing it
    let mut owners: HashMap<&str, Vec<&str>> = HashMap::new();
    for node in graph.nodes() {
        for chunk_ref in &node.chunk_refs {
            owners.entry(chunk_ref.as_str()).or_default().push(&node.id);
        }
    }

    for seed in &seeds {
        consider(ContextItem {
            chunk_id: seed.chunk_id.clone(),
            score: (1.0 - params.alpha) * seed.score,
            origin: ItemOrigin::VectorHit,
            provenance: provenance_of(corpus, &seed.chunk_id),
        });
        let Some(seed_nodes) = owners.get(seed.chunk_id.as_str()) else {
            continue;
        };
        for &seed_node in seed_nodes {
            for (reached, exp) in expand_from_node(graph, seed_node, params.depth) {
                let score = hybrid_score(
                    seed.score,
                    exp.hops,
                    &[exp.weight_product],
                    params.alpha,
                    params.gamma,
                );
                if score <= 0.0 {
                    continue;
                }
                let Some(reached_node) = graph.node(&reached) else {
                    continue;
                };
                for chunk_id in &reached_node.chunk_refs {
                    if corpus.get(chunk_id).is_none() {
                        continue;
                    }
                    consider(ContextItem {
                        chunk_id: chunk_id.clone(),
                        score,
                        origin: ItemOrigin::GraphExpansion {
                            seed_chunk_id: seed.chunk_id.clone(),
                            path_edge_types: exp.edge_types.clone(),
                            hops: exp.hops,
                        },
                        provenance: provenance_of(corpus, chunk_id),
                    });
                }
            }
        }
    }
    let mut items: Vec<ContextItem> = best.into_values().collect();
    sort_items(&mut items);
    items.truncate(params.k);
    Ok(items)
}

fn sort_items(items: &mut [ContextItem]) {
    items.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.chunk_id.cmp(&b.chunk_id))
    });
}

/// Runs the retrieval stage for `mode`, resolves conflicts, and assembles
/// the budgeted bundle. Deterministic for fixed inputs and params.
pub fn retrieve(
    query: &str,
    mode: StageMode,
    corpus: &Corpus,
    index: Option<&VectorIndex>,
    graph: &KnowledgeGraph,
    params: &RetrievalParams,
) -> Result<ContextBundle, RetrievalError> {
    let need_index = || {
        index.ok_or_else(|| RetrievalError::IndexMissing("no vector index supplied".to_string()))
    };
    let items = match mode {
        StageMode::BasicRag => basic_items(query, corpus, params.k),
        StageMode::VectorSearch => vector_items(query, corpus, need_index()?, params.k)?,
        StageMode::HybridRag | StageMode::Agentic => {
            hybrid_items(query, corpus, need_index()?, graph, params)?
        }
    };
    let (items, conflicts, escalations) =
        resolve_conflicts(items, corpus, graph, &params.authoritative_sources);
    let mut bundle = assemble_context(items, params.token_budget, params.workers, corpus)?;
    bundle.query = query.to_string();
    bundle.mode = mode;
    bundle.conflicts_resolved = conflicts;
    bundle.escalations = escalations;
    Ok(bundle)
}

fn chunk_tokens(corpus: &Corpus, chunk_id: &str) -> usize {
    corpus
        .get(chunk_id)
        .map(|c| c.text.split_whitespace().count())
        .unwrap_or(0)
}

/// Sorts items and keeps the prefix that fits the token budget in whole
/// chunks. Token counting fans out across `workers` threads; the merge is
/// an ordered reduce, so the output is identical for any worker count.
pub fn assemble_context(
    items: Vec<ContextItem>,
    token_budget: usize,
    workers: usize,
    corpus: &Corpus,
) -> Result<ContextBundle, RetrievalError> {
    if !(1..=8).contains(&workers) {
        return Err(RetrievalError::BadWorkers(workers));
    }
    let mut items = items;
    sort_items(&mut items);

    let counts: Vec<usize> = if items.is_empty() {
        Vec::new()
    } else {
        let slice_len = items.len().div_ceil(workers);
        std::thread::scope(|scope| {
            let handles: Vec<_> = items
                .chunks(slice_len)
                .map(|slice| {
                    scope.spawn(move || {
                        slice
                            .iter()
                            .map(|item| chunk_tokens(corpus, &item.chunk_id))
                            .collect::<Vec<usize>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("token counting worker panicked"))
                .collect()
        })
    };

    let mut kept = Vec::new();
    let mut used = 0usize;
    for (item, tokens) in items.into_iter().zip(counts) {
        if used + tokens > token_budget {
            break;
        }
        used += tokens;
        kept.push(item);
    }
    Ok(ContextBundle {
        query: String::new(),
        mode: StageMode::BasicRag,
        items: kept,
        conflicts_resolved: Vec::new(),
        escalations: Vec::new(),
        token_budget,
    })
}
