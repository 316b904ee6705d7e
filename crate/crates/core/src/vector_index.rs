//! Exact top-k similarity search over chunk embeddings.
//!
//! All three metrics are folded onto a "higher is better" scale: Euclidean
//! distance d becomes 1/(1+d). Hits below the similarity threshold
//! (default 0.82) are dropped before ranking.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::embedding::{build_embedder, EmbedError, EmbedderSpec, Embedding};

pub const DEFAULT_THRESHOLD: f64 = 0.82;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    Cosine,
    Euclidean,
    DotProduct,
}

impl Metric {
    pub fn parse(s: &str) -> Option<Metric> {
        match s.to_ascii_lowercase().as_str() {
            "cosine" => Some(Metric::Cosine),
            "euclidean" => Some(Metric::Euclidean),
            "dot" | "dotproduct" | "dot_product" => Some(Metric::DotProduct),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredHit {
    pub chunk_id: String,
    pub score: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorIndex {
    pub dim: usize,
    pub metric: Metric,
    pub spec: EmbedderSpec,
    pub threshold: f64,
    pub entries: BTreeMap<String, Embedding>,
}

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("index io failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("index snapshot malformed: {0}")]
    Snapshot(String),
}

/// Similarity under the given metric; Euclidean is converted so that
/// higher always means closer.
pub fn similarity(a: &Embedding, b: &Embedding, metric: Metric) -> Result<f64, IndexError> {
    if a.dim != b.dim {
        return Err(IndexError::DimMismatch(a.dim, b.dim));
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok(match metric {
        Metric::DotProduct => dot,
        Metric::Cosine => {
            let na = a.l2_norm();
            let nb = b.l2_norm();
            if na == 0.0 || nb == 0.0 {
                0.0
            } else {
                dot / (na * nb)
            }
        }
        Metric::Euclidean => {
            let d2: f64 = a
                .values
                .iter()
                .zip(&b.values)
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            1.0 / (1.0 + d2.sqrt())
        }
    })
}

impl VectorIndex {
    /// Embeds every chunk in the corpus. Deterministic for a fixed corpus.
    pub fn build(
        corpus: &Corpus,
        spec: &EmbedderSpec,
        metric: Metric,
        threshold: f64,
    ) -> Result<VectorIndex, IndexError> {
        if corpus.is_empty() {
            return Err(IndexError::EmptyCorpus);
        }
        let embedder = build_embedder(spec)?;
        let mut entries = BTreeMap::new();
        for chunk in &corpus.chunks {
            entries.insert(chunk.id.clone(), embedder.embed(&chunk.text)?);
        }
        Ok(VectorIndex {
            dim: spec.dim,
            metric,
            spec: spec.clone(),
            threshold,
            entries,
        })
    }

    pub fn from_entries(
        entries: BTreeMap<String, Embedding>,
        spec: EmbedderSpec,
        metric: Metric,
        threshold: f64,
    ) -> VectorIndex {
        VectorIndex {
            dim: spec.dim,
            metric,
            spec,
            threshold,
            entries,
        }
    }

    /// Top-k hits for a query embedding: linear scan, threshold filter,
    /// descending score with ties broken by ascending chunk id.
    pub fn search_embedding(&self, query: &Embedding, k: usize) -> Result<Vec<ScoredHit>, IndexError> {
        let mut scored: Vec<(String, f64)> = Vec::new();
        for (id, emb) in &self.entries {
            let score = similarity(query, emb, self.metric)?;
            if score >= self.threshold {
                scored.push((id.clone(), score));
            }
        }
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.0.cmp(&b.0))
        });
        scored.truncate(k);
        Ok(scored
            .into_iter()
            .enumerate()
            .map(|(i, (chunk_id, score))| ScoredHit {
                chunk_id,
                score,
                rank: i + 1,
            })
            .collect())
    }

    pub fn search(&self, query_text: &str, k: usize) -> Result<Vec<ScoredHit>, IndexError> {
        let embedder = build_embedder(&self.spec)?;
        let query = embedder.embed(query_text)?;
        self.search_embedding(&query, k)
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        let snapshot = Snapshot {
            format_version: SNAPSHOT_VERSION,
            index: self.clone(),
        };
        let json = serde_json::to_string(&snapshot).expect("index serializes");
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<VectorIndex, IndexError> {
        let raw = std::fs::read_to_string(path)?;
        let snapshot: Snapshot =
            serde_json::from_str(&raw).map_err(|e| IndexError::Snapshot(e.to_string()))?;
        if snapshot.format_version != SNAPSHOT_VERSION {
            return Err(IndexError::Snapshot(format!(
                "unsupported snapshot version {}",
                snapshot.format_version
            )));
        }
        Ok(snapshot.index)
    }
}

const SNAPSHOT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Snapshot {
    format_version: u32,
    index: VectorIndex,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ingest, RawRecord};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn rec(doc_id: &str, text: &str) -> RawRecord {
        RawRecord {
            doc_id: doc_id.into(),
            kind: "SapDoc".into(),
            title: doc_id.into(),
            text: text.into(),
            source: "unit".into(),
            timestamp: 0,
            credibility: None,
        }
    }

    fn small_corpus() -> Corpus {
        ingest(&[
            rec("a", "create purchase order for vendor"),
            rec("b", "post goods receipt against order"),
            rec("c", "run three way invoice match"),
        ])
        .unwrap()
    }

    #[test]
    fn build_has_one_entry_per_chunk() {
        let corpus = small_corpus();
        let idx = VectorIndex::build(&corpus, &EmbedderSpec::default(), Metric::Cosine, 0.82).unwrap();
        assert_eq!(idx.entries.len(), corpus.len());
    }

    #[test]
    fn rebuild_is_identical() {
        let corpus = small_corpus();
        let spec = EmbedderSpec::default();
        let a = VectorIndex::build(&corpus, &spec, Metric::Cosine, 0.82).unwrap();
        let b = VectorIndex::build(&corpus, &spec, Metric::Cosine, 0.82).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_corpus_rejected() {
        let err =
            VectorIndex::build(&Corpus::default(), &EmbedderSpec::default(), Metric::Cosine, 0.82)
                .unwrap_err();
        assert!(matches!(err, IndexError::EmptyCorpus));
    }

    #[test]
    fn self_query_ranks_first_with_unit_score() {
        let corpus = small_corpus();
        let idx = VectorIndex::build(&corpus, &EmbedderSpec::default(), Metric::Cosine, 0.82).unwrap();
        let hits = idx.search("create purchase order for vendor", 3).unwrap();
        assert_eq!(hits[0].chunk_id, "a#000");
        assert_eq!(hits[0].rank, 1);
        assert!((hits[0].score - 1.0).abs() < 1e-9);
    }

    #[test]
    fn below_threshold_returns_empty() {
        let corpus = small_corpus();
        let idx = VectorIndex::build(&corpus, &EmbedderSpec::default(), Metric::Cosine, 0.82).unwrap();
        let hits = idx.search("entirely unrelated astronomy telescope narrative", 5).unwrap();
        assert!(hits.is_empty());
    }

    #[test]
    fn cosine_identities() {
        let v = Embedding { dim: 384, values: { let mut v = vec![0.0; 384]; v[0] = 1.0; v } };
        let w = Embedding { dim: 384, values: { let mut v = vec![0.0; 384]; v[1] = 1.0; v } };
        assert!((similarity(&v, &v, Metric::Cosine).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(similarity(&v, &w, Metric::Cosine).unwrap(), 0.0);
    }

    #[test]
    fn euclidean_conversion_of_orthogonal_units() {
        let v = Embedding { dim: 384, values: { let mut v = vec![0.0; 384]; v[0] = 1.0; v } };
        let w = Embedding { dim: 384, values: { let mut v = vec![0.0; 384]; v[1] = 1.0; v } };
        // Unit vectors at distance sqrt(2): 1/(1+sqrt(2)).
        let s = similarity(&v, &w, Metric::Euclidean).unwrap();
        assert!((s - 1.0 / (1.0 + 2f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn dim_mismatch_rejected() {
        let v = Embedding { dim: 384, values: vec![0.0; 384] };
        let w = Embedding { dim: 768, values: vec![0.0; 768] };
        assert!(matches!(
            similarity(&v, &w, Metric::Cosine).unwrap_err(),
            IndexError::DimMismatch(384, 768)
        ));
    }

    fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Embedding {
        let mut values: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in &mut values {
            *v /= norm;
        }
        Embedding { dim, values }
    }

    /// Independent oracle: score everything, full sort, threshold, prefix.
    fn brute_force_top_k(
        entries: &BTreeMap<String, Embedding>,
        query: &Embedding,
        metric: Metric,
        threshold: f64,
        k: usize,
    ) -> Vec<(String, f64)> {
        let mut all: Vec<(String, f64)> = entries
            .iter()
            .map(|(id, e)| (id.clone(), similarity(query, e, metric).unwrap()))
            .filter(|(_, s)| *s >= threshold)
            .collect();
        all.sort_by(|a, b| {
            b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0))
        });
        all.truncate(k);
        all
    }

    #[test]
    fn search_matches_brute_force_all_metrics() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut entries = BTreeMap::new();
        for i in 0..100 {
            entries.insert(format!("c{i:03}"), random_unit(&mut rng, 384));
        }
        for metric in [Metric::Cosine, Metric::Euclidean, Metric::DotProduct] {
            let idx = VectorIndex::from_entries(
                entries.clone(),
                EmbedderSpec::default(),
                metric,
                0.0,
            );
            let query = random_unit(&mut rng, 384);
            let hits = idx.search_embedding(&query, 10).unwrap();
            let oracle = brute_force_top_k(&entries, &query, metric, 0.0, 10);
            assert_eq!(hits.len(), oracle.len());
            for (hit, (oid, oscore)) in hits.iter().zip(&oracle) {
                assert_eq!(&hit.chunk_id, oid);
                assert!((hit.score - oscore).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lowering_threshold_never_removes_hits() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut entries = BTreeMap::new();
        for i in 0..50 {
            entries.insert(format!("c{i:03}"), random_unit(&mut rng, 384));
        }
        let query = random_unit(&mut rng, 384);
        let hi = VectorIndex::from_entries(entries.clone(), EmbedderSpec::default(), Metric::Cosine, 0.3);
        let lo = VectorIndex::from_entries(entries, EmbedderSpec::default(), Metric::Cosine, 0.1);
        let hi_hits = hi.search_embedding(&query, 50).unwrap();
        let lo_hits = lo.search_embedding(&query, 50).unwrap();
        let lo_ids: Vec<&str> = lo_hits.iter().map(|h| h.chunk_id.as_str()).collect();
        for h in &hi_hits {
            assert!(lo_ids.contains(&h.chunk_id.as_str()));
        }
    }

    #[test]
    fn snapshot_round_trip() {
        let corpus = small_corpus();
        let idx = VectorIndex::build(&corpus, &EmbedderSpec::default(), Metric::Cosine, 0.82).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.json");
        idx.save(&path).unwrap();
        assert_eq!(VectorIndex::load(&path).unwrap(), idx);
    }
}
