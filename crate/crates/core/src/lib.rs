//! Embedded engine for quality-engineering artifact generation.
//!
//! The pipeline runs entirely offline: a corpus is ingested and redacted,
//! indexed into a vector store and a typed knowledge graph, queried through
//! four retrieval stages (keyword, vector, hybrid, agentic), and fed to a
//! multi-agent orchestrator that produces test plans and test cases with
//! full bidirectional traceability and seven-layer validation.

pub mod config;
pub mod corpus;
pub mod embedding;
pub mod eval;
pub mod knowledge_graph;
pub mod orchestration;
pub mod retrieval;
pub mod traceability;
pub mod validation;
pub mod vector_index;

pub use config::Config;
pub use corpus::{Corpus, DocumentChunk, SourceKind};
pub use embedding::{Embedder, EmbedderSpec, Embedding, HashingEmbedder};
pub use knowledge_graph::{EdgeType, GraphEdge, GraphNode, KnowledgeGraph, NodeType};
pub use orchestration::{Generator, StubGenerator, TestCase, TestPlan};
pub use retrieval::{ContextBundle, ContextItem, ItemOrigin, StageMode};
pub use traceability::{ImpactReport, LinkType, TraceLink, TraceMatrix, TraceStore};
pub use validation::{ValidationLayer, ValidationReport};
pub use vector_index::{Metric, ScoredHit, VectorIndex};
