//! Text-to-vector conversion behind a pluggable [`Embedder`] trait.
//!
//! The bundled [`HashingEmbedder`] is fully deterministic and offline: each
//! lowercased token (unigram) and each run of three consecutive tokens
//! (token 3-gram) is hashed into one of `dim` signed buckets, accumulated,
//! and L2-normalized. Supported dimensions are 384, 768, and 1024.

use serde::{Deserialize, Serialize};

pub const SUPPORTED_DIMS: [usize; 3] = [384, 768, 1024];
pub const DEFAULT_DIM: usize = 384;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub dim: usize,
    pub values: Vec<f64>,
}

impl Embedding {
    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderSpec {
    pub name: String,
    pub dim: usize,
    pub deterministic: bool,
}

impl EmbedderSpec {
    pub fn hashing(dim: usize) -> EmbedderSpec {
        EmbedderSpec {
            name: "hashing".to_string(),
            dim,
            deterministic: true,
        }
    }
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        EmbedderSpec::hashing(DEFAULT_DIM)
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum EmbedError {
    #[error("text is empty")]
    EmptyText,
    #[error("unsupported dimension {0}; supported: 384, 768, 1024")]
    UnsupportedDim(usize),
    #[error("batch item {index} failed: {source}")]
    BatchItem {
        index: usize,
        source: Box<EmbedError>,
    },
}

pub trait Embedder: Send + Sync {
    fn spec(&self) -> &EmbedderSpec;

    fn embed(&self, text: &str) -> Result<Embedding, EmbedError>;

    /// Elementwise equal to [`Embedder::embed`]; order preserved.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbedError> {
        texts
            .iter()
            .enumerate()
            .map(|(index, t)| {
                self.embed(t).map_err(|e| EmbedError::BatchItem {
                    index,
                    source: Box::new(e),
                })
            })
            .collect()
    }
}

/// Deterministic signed feature-hashing embedder.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    spec: EmbedderSpec,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Result<HashingEmbedder, EmbedError> {
        if !SUPPORTED_DIMS.contains(&dim) {
            return Err(EmbedError::UnsupportedDim(dim));
        }
        Ok(HashingEmbedder {
            spec: EmbedderSpec::hashing(dim),
        })
    }

    pub fn from_spec(spec: &EmbedderSpec) -> Result<HashingEmbedder, EmbedError> {
        Self::new(spec.dim)
    }
}

// FNV-1a, fixed here so vectors are stable across platforms and releases.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl Embedder for HashingEmbedder {
    fn spec(&self) -> &EmbedderSpec {
        &self.spec
    }

    fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        let tokens: Vec<String> = text
            .split_whitespace()
            .map(|t| t.to_lowercase())
            .collect();
        if tokens.is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let dim = self.spec.dim;
        let mut values = vec![0.0f64; dim];
        let mut bump = |feature: &str| {
            let h = fnv1a(feature.as_bytes());
            let bucket = (h % dim as u64) as usize;
            let sign = if (h >> 63) & 1 == 0 { 1.0 } else { -1.0 };
            values[bucket] += sign;
        };
        for t in &tokens {
            bump(&format!("u:{t}"));
        }
        for w in tokens.windows(3) {
            bump(&format!("g:{} {} {}", w[0], w[1], w[2]));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            // Signed collisions cancelled everything; fall back to a single
            // deterministic bucket so the unit-norm contract holds.
            let h = fnv1a(text.as_bytes());
            values[(h % dim as u64) as usize] = 1.0;
            return Ok(Embedding { dim, values });
        }
        for v in &mut values {
            *v /= norm;
        }
        Ok(Embedding { dim, values })
    }
}

/// Builds the embedder named by a spec. Only `hashing` ships.
pub fn build_embedder(spec: &EmbedderSpec) -> Result<Box<dyn Embedder>, EmbedError> {
    Ok(Box::new(HashingEmbedder::from_spec(spec)?))
}
