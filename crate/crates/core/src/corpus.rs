//! Corpus ingestion: chunking, PII redaction, and JSONL persistence.
//!
//! Raw records are split into 200-token windows with a 50-token overlap
//! (token = whitespace-separated word). Emails, phone-like digit runs and
//! national-id patterns are replaced with `[REDACTED]` before chunking, so
//! no persisted text ever carries PII.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

pub const CHUNK_TOKENS: usize = 200;
pub const CHUNK_OVERLAP: usize = 50;

/// The document kinds the ingestion pipeline understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SourceKind {
    LegacyTest,
    SapDoc,
    BusinessProcessMap,
    ConfigGuide,
    Requirement,
    ChangeRequest,
    ExecutionResult,
}

impl SourceKind {
    pub const ALL: [SourceKind; 7] = [
        SourceKind::LegacyTest,
        SourceKind::SapDoc,
        SourceKind::BusinessProcessMap,
        SourceKind::ConfigGuide,
        SourceKind::Requirement,
        SourceKind::ChangeRequest,
        SourceKind::ExecutionResult,
    ];

    pub fn parse(tag: &str) -> Option<SourceKind> {
        match tag {
            "LegacyTest" => Some(SourceKind::LegacyTest),
            "SapDoc" => Some(SourceKind::SapDoc),
            "BusinessProcessMap" => Some(SourceKind::BusinessProcessMap),
            "ConfigGuide" => Some(SourceKind::ConfigGuide),
            "Requirement" => Some(SourceKind::Requirement),
            "ChangeRequest" => Some(SourceKind::ChangeRequest),
            "ExecutionResult" => Some(SourceKind::ExecutionResult),
            _ => None,
        }
    }

    /// Prior credibility for a source kind, used when a record does not
    /// override it.
    pub fn default_credibility(self) -> f64 {
        match self {
            SourceKind::ConfigGuide => 0.9,
            SourceKind::SapDoc => 0.85,
            SourceKind::BusinessProcessMap => 0.8,
            SourceKind::Requirement => 0.8,
            SourceKind::LegacyTest => 0.6,
            SourceKind::ChangeRequest | SourceKind::ExecutionResult => 0.7,
        }
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SourceKind::LegacyTest => "LegacyTest",
            SourceKind::SapDoc => "SapDoc",
            SourceKind::BusinessProcessMap => "BusinessProcessMap",
            SourceKind::ConfigGuide => "ConfigGuide",
            SourceKind::Requirement => "Requirement",
            SourceKind::ChangeRequest => "ChangeRequest",
            SourceKind::ExecutionResult => "ExecutionResult",
        };
        f.write_str(s)
    }
}

/// One redacted, typed unit of corpus text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocumentChunk {
    pub id: String,
    pub doc_id: String,
    pub kind: SourceKind,
    pub title: String,
    pub text: String,
    pub source: String,
    pub timestamp: u64,
    pub credibility: f64,
    pub redaction_count: u64,
}

/// An unprocessed input record handed to [`ingest`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawRecord {
    pub doc_id: String,
    pub kind: String,
    pub title: String,
    pub text: String,
    pub source: String,
    #[serde(default)]
    pub timestamp: u64,
    /// Overrides the kind prior when present.
    #[serde(default)]
    pub credibility: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub chunks: Vec<DocumentChunk>,
    pub version: u64,
}

impl Corpus {
    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn get(&self, chunk_id: &str) -> Option<&DocumentChunk> {
        self.chunks.iter().find(|c| c.id == chunk_id)
    }

    pub fn push(&mut self, chunk: DocumentChunk) -> Result<(), CorpusError> {
        if self.chunks.iter().any(|c| c.id == chunk.id) {
            return Err(CorpusError::DuplicateId(chunk.id));
        }
        self.chunks.push(chunk);
        self.version += 1;
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("unknown source kind tag `{0}`")]
    UnknownKind(String),
    #[error("record `{0}` has empty text after redaction")]
    EmptyText(String),
    #[error("duplicate chunk id `{0}`")]
    DuplicateId(String),
    #[error("corpus io failure: {0}")]
    IoFailure(#[from] std::io::Error),
    #[error("corpus format violation at line {line}: {reason}")]
    FormatViolation { line: usize, reason: String },
}

fn email_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}").unwrap())
}

fn national_id_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b\d{3}-\d{2}-\d{4}\b").unwrap())
}

/// Replaces emails, national-id patterns, and phone-like digit runs
/// (7+ digits, optionally separated by `-`, `.`, `(`, `)`) with
/// `[REDACTED]`. Returns the cleaned text and the replacement count.
/// Idempotent: the marker contains no digits or `@`.
pub fn redact(text: &str) -> (String, u64) {
    let mut count = 0u64;
    let after_email = email_re().replace_all(text, |_: &regex::Captures| {
        count += 1;
        "[REDACTED]"
    });
    let after_id = national_id_re().replace_all(&after_email, |_: &regex::Captures| {
        count += 1;
        "[REDACTED]"
    });
    let redacted = redact_digit_runs(&after_id, &mut count);
    (redacted, count)
}

/// Maximal runs over digits and phone separators that start and end with a
/// digit and contain at least 7 digits are treated as phone-like.
fn redact_digit_runs(text: &str, count: &mut u64) -> String {
    let bytes = text.as_bytes();
    let is_sep = |b: u8| matches!(b, b'-' | b'.' | b'(' | b')');
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_digit() || (bytes[i] == b'(' && i + 1 < bytes.len() && bytes[i + 1].is_ascii_digit()) {
            let start = i;
            let mut end = i;
            let mut digits = 0usize;
            let mut j = i;
            while j < bytes.len() && (bytes[j].is_ascii_digit() || is_sep(bytes[j])) {
                if bytes[j].is_ascii_digit() {
                    digits += 1;
                    end = j + 1;
                }
                j += 1;
            }
            if digits >= 7 {
                out.push_str("[REDACTED]");
                *count += 1;
            } else {
                out.push_str(&text[start..end]);
            }
            i = end.max(start + 1);
        } else {
            let ch_len = text[i..].chars().next().map(char::len_utf8).unwrap_or(1);
            out.push_str(&text[i..i + ch_len]);
            i += ch_len;
        }
    }
    out
}

fn tokens(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Splits redacted text into overlapping token windows.
fn chunk_text(text: &str) -> Vec<String> {
    let toks = tokens(text);
    if toks.is_empty() {
        return Vec::new();
    }
    let stride = CHUNK_TOKENS - CHUNK_OVERLAP;
    let mut chunks = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + CHUNK_TOKENS).min(toks.len());
        chunks.push(toks[start..end].join(" "));
        if end == toks.len() {
            break;
        }
        start += stride;
    }
    chunks
}

/// Builds a corpus from raw records: redact, chunk, assign ids.
/// Deterministic in the input order.
pub fn ingest(raw_records: &[RawRecord]) -> Result<Corpus, CorpusError> {
    let mut corpus = Corpus::default();
    // Chunk counters continue across records sharing a doc_id so ids stay unique.
    let mut per_doc: HashMap<String, usize> = HashMap::new();
    for record in raw_records {
        let kind = SourceKind::parse(&record.kind)
            .ok_or_else(|| CorpusError::UnknownKind(record.kind.clone()))?;
        let (redacted, redaction_count) = redact(&record.text);
        // Text made of nothing but redaction markers carries no content.
        let residue = redacted.replace("[REDACTED]", " ");
        if residue.split_whitespace().next().is_none() {
            return Err(CorpusError::EmptyText(record.doc_id.clone()));
        }
        let pieces = chunk_text(&redacted);
        let credibility = record
            .credibility
            .unwrap_or_else(|| kind.default_credibility())
            .clamp(0.0, 1.0);
        let counter = per_doc.entry(record.doc_id.clone()).or_insert(0);
        for piece in pieces {
            let chunk = DocumentChunk {
                id: format!("{}#{:03}", record.doc_id, *counter),
                doc_id: record.doc_id.clone(),
                kind,
                title: record.title.clone(),
                text: piece,
                source: record.source.clone(),
                timestamp: record.timestamp,
                credibility,
                redaction_count,
            };
            *counter += 1;
            corpus.push(chunk)?;
        }
    }
    corpus.version = 1;
    Ok(corpus)
}

/// Writes the corpus as UTF-8 JSON lines, one chunk per line.
pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    for chunk in &corpus.chunks {
        let line = serde_json::to_string(chunk).expect("chunk serializes");
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a JSONL corpus; rejects malformed lines, unknown fields, and
/// duplicate ids. An empty file yields an empty corpus at version 0.
pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut corpus = Corpus::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let chunk: DocumentChunk =
            serde_json::from_str(&line).map_err(|e| CorpusError::FormatViolation {
                line: idx + 1,
                reason: e.to_string(),
            })?;
        if !(0.0..=1.0).contains(&chunk.credibility) {
            return Err(CorpusError::FormatViolation {
                line: idx + 1,
                reason: format!("credibility {} outside [0,1]", chunk.credibility),
            });
        }
        corpus.push(chunk).map_err(|e| match e {
            CorpusError::DuplicateId(id) => CorpusError::FormatViolation {
                line: idx + 1,
                reason: format!("duplicate id `{id}`"),
            },
            other => other,
        })?;
    }
    corpus.version = if corpus.is_empty() { 0 } else { 1 };
    Ok(corpus)
}
