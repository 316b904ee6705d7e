//! Ordered 15-strategy conflict resolution over retrieved context.
//!
//! A conflict exists when two retrieved chunks assert different values for
//! the same `(entity, attribute)` key. Facts are declared in chunk text as
//! lines of the form `entity.attribute = value`. Strategies are tried in a
//! fixed order; the first applicable one picks the winner and the losing
//! chunks are dropped from the bundle. When strategies 1-14 all fail to
//! discriminate, the conflict escalates and every candidate is retained.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, DocumentChunk, SourceKind};
use crate::knowledge_graph::{EdgeType, KnowledgeGraph};
use crate::retrieval::ContextItem;

pub const STRATEGY_COUNT: usize = 15;
/// Credibility difference below which two sources are considered peers.
pub const CREDIBILITY_BAND: f64 = 0.1;
/// Marker a domain expert places in a chunk to vouch for its facts.
pub const EXPERT_MARKER: &str = "[EXPERT-VALIDATED]";

pub const STRATEGY_NAMES: [&str; STRATEGY_COUNT] = [
    "exact-duplicate dedupe",
    "supersedes edge",
    "credibility weighting",
    "temporal recency",
    "kind priority",
    "specificity",
    "graph proximity",
    "source majority",
    "numeric-range intersection",
    "version-tag comparison",
    "authoritative source",
    "fewer redactions",
    "expert validation",
    "complementary merge",
    "escalation",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictRecord {
    pub key: String,
    pub candidates: Vec<String>,
    pub winner: String,
    pub strategy_index: usize,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscalationRecord {
    pub key: String,
    pub candidates: Vec<String>,
    pub reason: String,
}

#[derive(Debug, Clone)]
struct Candidate<'a> {
    chunk: &'a DocumentChunk,
    value: String,
    hops: usize,
}

fn fact_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?m)^\s*([A-Za-z0-9_\-]+)\.([A-Za-z0-9_\-]+)\s*=\s*(.+?)\s*$").unwrap()
    })
}

/// `(entity, attribute) -> value` assertions found in a chunk's text.
pub fn extract_facts(text: &str) -> Vec<(String, String, String)> {
    fact_re()
        .captures_iter(text)
        .map(|c| (c[1].to_string(), c[2].to_string(), c[3].to_string()))
        .collect()
}

/// Applies the ordered strategy table to every conflicting key. Returns
/// the surviving items, one record per resolved conflict, and one
/// escalation per unresolvable conflict.
pub fn resolve_conflicts(
    items: Vec<ContextItem>,
    corpus: &Corpus,
    graph: &KnowledgeGraph,
    authoritative_sources: &[String],
) -> (Vec<ContextItem>, Vec<ConflictRecord>, Vec<EscalationRecord>) {
    // key -> chunk -> (value, hops); first asserted value per chunk wins.
    let mut by_key: BTreeMap<(String, String), BTreeMap<String, (String, usize)>> = BTreeMap::new();
    for item in &items {
        let Some(chunk) = corpus.get(&item.chunk_id) else {
            continue;
        };
        for (entity, attr, value) in extract_facts(&chunk.text) {
            by_key
                .entry((entity, attr))
                .or_default()
                .entry(item.chunk_id.clone())
                .or_insert((value, item.origin.hops()));
        }
    }

    let mut records = Vec::new();
    let mut escalations = Vec::new();
    let mut dropped: BTreeSet<String> = BTreeSet::new();

    for ((entity, attr), assertions) in &by_key {
        if assertions.len() < 2 {
            continue;
        }
        let distinct: BTreeSet<&str> = assertions.values().map(|(v, _)| v.as_str()).collect();
        let key = format!("{entity}.{attr}");
        let candidates: Vec<Candidate> = assertions
            .iter()
            .filter_map(|(chunk_id, (value, hops))| {
                corpus.get(chunk_id).map(|chunk| Candidate {
                    chunk,
                    value: value.clone(),
                    hops: *hops,
                })
            })
            .collect();
        let candidate_ids: Vec<String> =
            candidates.iter().map(|c| c.chunk.id.clone()).collect();

        if distinct.len() == 1 {
            // Strategy 1: identical assertions are duplicates, keep the
            // lowest chunk id.
            records.push(ConflictRecord {
                key,
                candidates: candidate_ids.clone(),
                winner: candidate_ids[0].clone(),
                strategy_index: 1,
                rationale: format!("all candidates assert `{}`", candidates[0].value),
            });
            continue;
        }

        match pick_winner(&candidates, &attr_name(attr), graph, authoritative_sources) {
            Some((winner_idx, strategy_index, rationale)) => {
                let winner = candidates[winner_idx].chunk.id.clone();
                for id in &candidate_ids {
                    if *id != winner {
                        dropped.insert(id.clone());
                    }
                }
                records.push(ConflictRecord {
                    key,
                    candidates: candidate_ids,
                    winner,
                    strategy_index,
                    rationale,
                });
            }
            None => {
                escalations.push(EscalationRecord {
                    key,
                    candidates: candidate_ids,
                    reason: "strategies 1-14 inapplicable; conflicting values retained".to_string(),
                });
            }
        }
    }

    // A chunk that won one conflict but lost another stays dropped: keeping
    // it would reintroduce the contradiction it lost.
    let kept = items
        .into_iter()
        .filter(|i| !dropped.contains(&i.chunk_id))
        .collect();
    (kept, records, escalations)
}

fn attr_name(attr: &str) -> String {
    attr.to_lowercase()
}

/// Strategies 2-14 in order. Returns (candidate index, strategy index,
/// rationale) or None when every strategy is inapplicable.
fn pick_winner(
    candidates: &[Candidate],
    attr: &str,
    graph: &KnowledgeGraph,
    authoritative_sources: &[String],
) -> Option<(usize, usize, String)> {
    if let Some((i, r)) = supersedes_winner(candidates, graph) {
        return Some((i, 2, r));
    }
    if let Some((i, r)) = credibility_winner(candidates) {
        return Some((i, 3, r));
    }
    if let Some((i, r)) = temporal_winner(candidates) {
        return Some((i, 4, r));
    }
    if let Some((i, r)) = kind_priority_winner(candidates, attr) {
        return Some((i, 5, r));
    }
    if let Some((i, r)) = specificity_winner(candidates) {
        return Some((i, 6, r));
    }
    if let Some((i, r)) = proximity_winner(candidates) {
        return Some((i, 7, r));
    }
    if let Some((i, r)) = majority_winner(candidates) {
        return Some((i, 8, r));
    }
    if let Some((i, r)) = numeric_range_winner(candidates) {
        return Some((i, 9, r));
    }
    if let Some((i, r)) = version_winner(candidates) {
        return Some((i, 10, r));
    }
    if let Some((i, r)) = allowlist_winner(candidates, authoritative_sources) {
        return Some((i, 11, r));
    }
    if let Some((i, r)) = redaction_winner(candidates) {
        return Some((i, 12, r));
    }
    if let Some((i, r)) = expert_winner(candidates) {
        return Some((i, 13, r));
    }
    if let Some((i, r)) = merge_winner(candidates) {
        return Some((i, 14, r));
    }
    None
}

/// Strategy 2: a candidate whose owning graph node supersedes another
/// candidate's node, and is superseded by none, wins.
fn supersedes_winner(candidates: &[Candidate], graph: &KnowledgeGraph) -> Option<(usize, String)> {
    let owners: Vec<Vec<&str>> = candidates
        .iter()
        .map(|c| {
            graph
                .nodes()
                .filter(|n| n.chunk_refs.contains(&c.chunk.id))
                .map(|n| n.id.as_str())
                .collect()
        })
        .collect();
    let supersedes = |a: usize, b: usize| -> bool {
        owners[a].iter().any(|&src| {
            graph
                .out_edges(src)
                .iter()
                .any(|e| e.edge_type == EdgeType::Supersedes && owners[b].contains(&e.dst.as_str()))
        })
    };
    let mut winners = Vec::new();
    for i in 0..candidates.len() {
        let beats_some = (0..candidates.len()).any(|j| i != j && supersedes(i, j));
        let beaten = (0..candidates.len()).any(|j| i != j && supersedes(j, i));
        if beats_some && !beaten {
            winners.push(i);
        }
    }
    match winners.as_slice() {
        [only] => Some((*only, "owning node supersedes a conflicting source".to_string())),
        _ => None,
    }
}

/// Strategy 3: unique credibility leader by more than the peer band.
fn credibility_winner(candidates: &[Candidate]) -> Option<(usize, String)> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        candidates[b]
            .chunk
            .credibility
            .partial_cmp(&candidates[a].chunk.credibility)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let best = order[0];
    let second = order[1];
    let margin = candidates[best].chunk.credibility - candidates[second].chunk.credibility;
    (margin > CREDIBILITY_BAND).then(|| {
        (
            best,
            format!(
                "credibility {:.2} leads runner-up {:.2} by more than {CREDIBILITY_BAND}",
                candidates[best].chunk.credibility, candidates[second].chunk.credibility
            ),
        )
    })
}

/// Strategy 4: credibility peers, unique newest timestamp wins.
fn temporal_winner(candidates: &[Candidate]) -> Option<(usize, String)> {
    let max_cred = candidates
        .iter()
        .map(|c| c.chunk.credibility)
        .fold(f64::MIN, f64::max);
    let min_cred = candidates
        .iter()
        .map(|c| c.chunk.credibility)
        .fold(f64::MAX, f64::min);
    if max_cred - min_cred > CREDIBILITY_BAND {
        return None;
    }
    let newest = candidates.iter().map(|c| c.chunk.timestamp).max()?;
    let leaders: Vec<usize> = (0..candidates.len())
        .filter(|&i| candidates[i].chunk.timestamp == newest)
        .collect();
    match leaders.as_slice() {
        [only] => Some((
            *only,
            format!("most recent assertion at timestamp {newest} among credibility peers"),
        )),
        _ => None,
    }
}

/// Strategy 5: for configuration attributes, trusted kinds outrank the rest.
fn kind_priority_winner(candidates: &[Candidate], attr: &str) -> Option<(usize, String)> {
    if !attr.contains("config") {
        return None;
    }
    let rank = |kind: SourceKind| -> Option<usize> {
        match kind {
            SourceKind::ConfigGuide => Some(0),
            SourceKind::SapDoc => Some(1),
            SourceKind::BusinessProcessMap => Some(2),
            SourceKind::LegacyTest => Some(3),
            _ => None,
        }
    };
    let ranked: Vec<(usize, usize)> = candidates
        .iter()
        .enumerate()
        .filter_map(|(i, c)| rank(c.chunk.kind).map(|r| (i, r)))
        .collect();
    let best = ranked.iter().map(|&(_, r)| r).min()?;
    let leaders: Vec<usize> = ranked
        .iter()
        .filter(|&&(_, r)| r == best)
        .map(|&(i, _)| i)
        .collect();
    match leaders.as_slice() {
        [only] => Some((
            *only,
            format!("kind {} outranks peers for configuration keys", candidates[*only].chunk.kind),
        )),
        _ => None,
    }
}

/// Strategy 6: unique longest asserted value is the most specific.
fn specificity_winner(candidates: &[Candidate]) -> Option<(usize, String)> {
    let longest = candidates.iter().map(|c| c.value.len()).max()?;
    let leaders: Vec<usize> = (0..candidates.len())
        .filter(|&i| candidates[i].value.len() == longest)
        .collect();
    match leaders.as_slice() {
        [only] => Some((*only, "longest matching span is most specific".to_string())),
        _ => None,
    }
}

/// Strategy 7: unique minimum graph distance from the query seeds.
fn proximity_winner(candidates: &[Candidate]) -> Option<(usize, String)> {
    let closest = candidates.iter().map(|c| c.hops).min()?;
    let farthest = candidates.iter().map(|c| c.hops).max()?;
    if closest == farthest {
        return None;
    }
    let leaders: Vec<usize> = (0..candidates.len())
        .filter(|&i| candidates[i].hops == closest)
        .collect();
    match leaders.as_slice() {
        [only] => Some((
            *only,
            format!("closest to query seeds at {closest} hops"),
        )),
        _ => None,
    }
}

/// Strategy 8: a strict majority of sources agreeing on one value wins;
/// the highest-credibility chunk asserting it represents the value.
fn majority_winner(candidates: &[Candidate]) -> Option<(usize, String)> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for c in candidates {
        *counts.entry(c.value.as_str()).or_default() += 1;
    }
    let (value, count) = counts.iter().max_by_key(|(_, &c)| c)?;
    if *count * 2 <= candidates.len() {
        return None;
    }
    let mut holders: Vec<usize> = (0..candidates.len())
        .filter(|&i| candidates[i].value == *value)
        .collect();
    holders.sort_by(|&a, &b| {
        candidates[b]
            .chunk
            .credibility
            .partial_cmp(&candidates[a].chunk.credibility)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| candidates[a].chunk.id.cmp(&candidates[b].chunk.id))
    });
    Some((
        holders[0],
        format!("value `{value}` asserted by {count} of {} sources", candidates.len()),
    ))
}

fn parse_range(value: &str) -> Option<(f64, f64)> {
    if let Ok(n) = value.trim().parse::<f64>() {
        return Some((n, n));
    }
    let (lo, hi) = value.trim().split_once("..")?;
    let lo: f64 = lo.trim().parse().ok()?;
    let hi: f64 = hi.trim().parse().ok()?;
    (lo <= hi).then_some((lo, hi))
}

/// Strategy 9: all values are numbers or `lo..hi` ranges with a common
/// intersection; the uniquely narrowest range wins.
fn numeric_range_winner(candidates: &[Candidate]) -> Option<(usize, String)> {
    let ranges: Vec<(f64, f64)> = candidates
        .iter()
        .map(|c| parse_range(&c.value))
        .collect::<Option<Vec<_>>>()?;
    let lo = ranges.iter().map(|r| r.0).fold(f64::MIN, f64::max);
    let hi = ranges.iter().map(|r| r.1).fold(f64::MAX, f64::min);
    if lo > hi {
        return None;
    }
    let narrowest = ranges
        .iter()
        .map(|r| r.1 - r.0)
        .fold(f64::MAX, f64::min);
    let leaders: Vec<usize> = (0..ranges.len())
        .filter(|&i| ranges[i].1 - ranges[i].0 == narrowest)
        .collect();
    match leaders.as_slice() {
        [only] => Some((
            *only,
            "ranges intersect; narrowest bound is most precise".to_string(),
        )),
        _ => None,
    }
}

fn parse_version(value: &str) -> Option<Vec<u64>> {
    let v = value.trim().strip_prefix('v').unwrap_or(value.trim());
    let parts: Vec<u64> = v
        .split('.')
        .map(|p| p.parse::<u64>().ok())
        .collect::<Option<Vec<_>>>()?;
    (!parts.is_empty()).then_some(parts)
}

/// Strategy 10: all values are version tags; the unique highest wins.
fn version_winner(candidates: &[Candidate]) -> Option<(usize, String)> {
    let versions: Vec<Vec<u64>> = candidates
        .iter()
        .map(|c| parse_version(&c.value))
        .collect::<Option<Vec<_>>>()?;
    let best = versions.iter().max()?;
    let leaders: Vec<usize> = (0..versions.len())
        .filter(|&i| &versions[i] == best)
        .collect();
    match leaders.as_slice() {
        [only] => Some((*only, format!("highest version tag `{}`", candidates[*only].value))),
        _ => None,
    }
}

/// Strategy 11: exactly one candidate comes from an allowlisted source.
fn allowlist_winner(candidates: &[Candidate], allowlist: &[String]) -> Option<(usize, String)> {
    let trusted: Vec<usize> = (0..candidates.len())
        .filter(|&i| allowlist.iter().any(|s| *s == candidates[i].chunk.source))
        .collect();
    match trusted.as_slice() {
        [only] => Some((
            *only,
            format!("source `{}` is on the authoritative allowlist", candidates[*only].chunk.source),
        )),
        _ => None,
    }
}

/// Strategy 12: the chunk with uniquely fewest redactions lost the least
/// information.
fn redaction_winner(candidates: &[Candidate]) -> Option<(usize, String)> {
    let fewest = candidates.iter().map(|c| c.chunk.redaction_count).min()?;
    let most = candidates.iter().map(|c| c.chunk.redaction_count).max()?;
    if fewest == most {
        return None;
    }
    let leaders: Vec<usize> = (0..candidates.len())
        .filter(|&i| candidates[i].chunk.redaction_count == fewest)
        .collect();
    match leaders.as_slice() {
        [only] => Some((*only, format!("fewest redactions ({fewest})"))),
        _ => None,
    }
}

/// Strategy 13: exactly one candidate carries the expert-validated marker.
fn expert_winner(candidates: &[Candidate]) -> Option<(usize, String)> {
    let marked: Vec<usize> = (0..candidates.len())
        .filter(|&i| candidates[i].chunk.text.contains(EXPERT_MARKER))
        .collect();
    match marked.as_slice() {
        [only] => Some((*only, "carries the expert-validated marker".to_string())),
        _ => None,
    }
}

/// Strategy 14: list-valued assertions with pairwise-disjoint elements are
/// complementary, not contradictory; the lowest chunk id represents the
/// merged value.
fn merge_winner(candidates: &[Candidate]) -> Option<(usize, String)> {
    let sets: Vec<BTreeSet<&str>> = candidates
        .iter()
        .map(|c| {
            c.value
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .collect::<BTreeSet<&str>>()
        })
        .collect();
    if candidates.iter().any(|c| !c.value.contains(',')) {
        return None;
    }
    for i in 0..sets.len() {
        for j in (i + 1)..sets.len() {
            if sets[i].intersection(&sets[j]).next().is_some() {
                return None;
            }
        }
    }
    let merged: Vec<&str> = sets.iter().flatten().copied().collect();
    Some((0, format!("complementary lists merged: {}", merged.join(", "))))
}
