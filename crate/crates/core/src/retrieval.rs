//! Embedding vectors, cosine similarity and top-k chunk ranking.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Chunk, WhitespaceTokenizer};
use crate::extraction::DataEntry;
use crate::fnv1a64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RetrievalError {
    #[error("query text must not be empty{}", index_suffix(*.0))]
    EmptyText(Option<usize>),
    #[error("dimension mismatch: expected {expected}, got {actual}{}", index_suffix(*.chunk))]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        chunk: Option<usize>,
    },
    #[error("zero-norm vector{}", index_suffix(*.0))]
    DegenerateVector(Option<usize>),
    #[error("non-finite embedding value")]
    NonFinite,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("embedding provider error: {0}")]
    Provider(String),
}

fn index_suffix(i: Option<usize>) -> String {
    match i {
        Some(i) => alloc::format!(" (chunk {i})"),
        None => String::new(),
    }
}

/// A dense embedding with finite components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, RetrievalError> {
        if values.is_empty() {
            return Err(RetrievalError::DimensionMismatch {
                expected: 1,
                actual: 0,
                chunk: None,
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RetrievalError::NonFinite);
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn squared_norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.squared_norm())
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = RetrievalError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

/// Static description of an embedding backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingProviderSpec {
    pub name: String,
    pub dim: usize,
    pub max_input_tokens: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
}

/// Anything that maps texts to vectors deterministically.
///
/// Implementations truncate every input to its first
/// `spec().max_input_tokens` tokens before encoding.
pub trait EmbeddingProvider {
    fn spec(&self) -> &EmbeddingProviderSpec;
    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, RetrievalError>;
}

/// The prefix of `text` that ends with its `max_tokens`-th whitespace token.
pub fn truncate_to_tokens(text: &str, max_tokens: usize) -> &str {
    match WhitespaceTokenizer::spans(text).take(max_tokens).last() {
        Some((_, end)) => &text[..end],
        None => "",
    }
}

/// Offline embedder: lowercased whitespace tokens hashed (FNV-1a 64) into
/// buckets, counted, then L2-normalized.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    spec: EmbeddingProviderSpec,
}

impl HashEmbedder {
    pub const NAME: &'static str = "hash";
    pub const DIM: usize = 256;

    pub fn new(max_input_tokens: usize) -> Self {
        Self::with_dim(Self::DIM, max_input_tokens)
    }

    pub fn with_dim(dim: usize, max_input_tokens: usize) -> Self {
        assert!(dim > 0 && max_input_tokens > 0);
        Self {
            spec: EmbeddingProviderSpec {
                name: String::from(Self::NAME),
                dim,
                max_input_tokens,
                endpoint: None,
            },
        }
    }

    fn embed_one(&self, text: &str) -> Result<EmbeddingVector, RetrievalError> {
        let dim = self.spec.dim;
        let mut counts = vec![0.0f64; dim];
        for (s, e) in WhitespaceTokenizer::spans(text).take(self.spec.max_input_tokens) {
            let word = text[s..e].to_lowercase();
            counts[(fnv1a64(word.as_bytes()) % dim as u64) as usize] += 1.0;
        }
        let norm = libm::sqrt(counts.iter().map(|c| c * c).sum::<f64>());
        if norm == 0.0 {
            return Err(RetrievalError::EmptyText(None));
        }
        counts.iter_mut().for_each(|c| *c /= norm);
        EmbeddingVector::new(counts)
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(512)
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn spec(&self) -> &EmbeddingProviderSpec {
        &self.spec
    }

    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, RetrievalError> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| {
                if t.trim().is_empty() {
                    return Err(RetrievalError::EmptyText(Some(i)));
                }
                self.embed_one(t)
            })
            .collect()
    }
}

/// The text embedded to retrieve context for one data entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalQuery {
    pub entry_id: String,
    pub query_text: String,
}

impl RetrievalQuery {
    /// Question followed by one option label per line.
    pub fn for_entry(entry: &DataEntry) -> Self {
        let mut query_text = entry.question.clone();
        for opt in &entry.options {
            query_text.push('\n');
            query_text.push_str(&opt.label);
        }
        Self {
            entry_id: entry.entry_id.clone(),
            query_text,
        }
    }
}

/// Cosine of the angle between two vectors, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, RetrievalError> {
    if a.dim() != b.dim() {
        return Err(RetrievalError::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
            chunk: None,
        });
    }
    let (sa, sb) = (a.squared_norm(), b.squared_norm());
    if sa == 0.0 || sb == 0.0 {
        return Err(RetrievalError::DegenerateVector(None));
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    // sqrt(x * x) == x in IEEE arithmetic, so parallel vectors give exactly 1.
    Ok((dot / libm::sqrt(sa * sb)).clamp(-1.0, 1.0))
}

/// A chunk with its similarity to the query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredChunk {
    pub chunk: Chunk,
    pub score: f64,
}

/// The `k` most similar chunks, by score descending then chunk index
/// ascending.
pub fn rank_chunks<'a, I>(
    query: &EmbeddingVector,
    chunks: I,
    k: usize,
) -> Result<Vec<ScoredChunk>, RetrievalError>
where
    I: IntoIterator<Item = (&'a Chunk, &'a EmbeddingVector)>,
{
    if k == 0 {
        return Err(RetrievalError::InvalidK);
    }
    if query.squared_norm() == 0.0 {
        return Err(RetrievalError::DegenerateVector(None));
    }
    let mut scored = Vec::new();
    for (chunk, vector) in chunks {
        let score = cosine_similarity(query, vector).map_err(|e| match e {
            RetrievalError::DimensionMismatch {
                expected, actual, ..
            } => RetrievalError::DimensionMismatch {
                expected,
                actual,
                chunk: Some(chunk.chunk_index),
            },
            RetrievalError::DegenerateVector(_) => {
                RetrievalError::DegenerateVector(Some(chunk.chunk_index))
            }
            other => other,
        })?;
        scored.push((score, chunk));
    }
    scored.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| a.1.chunk_index.cmp(&b.1.chunk_index))
    });
    scored.truncate(k);
    Ok(scored
        .into_iter()
        .map(|(score, chunk)| ScoredChunk {
            chunk: chunk.clone(),
            score,
        })
        .collect())
}
