//! Documents, tokens and overlapping fixed-size token windows.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fnv1a64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorpusError {
    #[error("document id must not be empty")]
    EmptyId,
    #[error("document {0:?} has no text")]
    EmptyDocument(String),
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("invalid chunking parameters: chunk_size={chunk_size}, overlap={overlap}")]
    InvalidParams { chunk_size: usize, overlap: usize },
    #[error("tokenizer failed: {0}")]
    Tokenizer(String),
}

/// An ingested article.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Result<Self, CorpusError> {
        let doc_id = doc_id.into();
        let text = text.into();
        if doc_id.is_empty() {
            return Err(CorpusError::EmptyId);
        }
        if text.trim().is_empty() {
            return Err(CorpusError::EmptyDocument(doc_id));
        }
        Ok(Self { doc_id, text })
    }
}

/// A token and its half-open byte span in the source text.
///
/// Spans always fall on `char` boundaries, so `&text[char_start..char_end]`
/// is valid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub token_id: u64,
    pub char_start: usize,
    pub char_end: usize,
}

/// Deterministic text-to-token mapping.
///
/// Implementations must return tokens with non-empty, ordered,
/// non-overlapping spans, and the same output for the same input.
pub trait Tokenizer {
    fn tokenize(&self, text: &str) -> Result<Vec<Token>, CorpusError>;
}

impl<T: Tokenizer + ?Sized> Tokenizer for &T {
    fn tokenize(&self, text: &str) -> Result<Vec<Token>, CorpusError> {
        (**self).tokenize(text)
    }
}

/// Splits on Unicode whitespace. Token ids are the FNV-1a hash of the token
/// bytes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WhitespaceTokenizer;

impl WhitespaceTokenizer {
    /// Byte spans of the whitespace-separated words of `text`.
    pub fn spans(text: &str) -> impl Iterator<Item = (usize, usize)> + '_ {
        let mut start: Option<usize> = None;
        let mut iter = text
            .char_indices()
            .chain(core::iter::once((text.len(), ' ')));
        core::iter::from_fn(move || {
            for (i, c) in iter.by_ref() {
                match (start, c.is_whitespace()) {
                    (None, false) => start = Some(i),
                    (Some(s), true) => {
                        start = None;
                        return Some((s, i));
                    }
                    _ => {}
                }
            }
            None
        })
    }
}

impl Tokenizer for WhitespaceTokenizer {
    fn tokenize(&self, text: &str) -> Result<Vec<Token>, CorpusError> {
        Ok(Self::spans(text)
            .map(|(s, e)| Token {
                token_id: fnv1a64(&text.as_bytes()[s..e]),
                char_start: s,
                char_end: e,
            })
            .collect())
    }
}

/// Window size and overlap, both in tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChunkingParams {
    pub chunk_size: usize,
    pub overlap: usize,
}

impl Default for ChunkingParams {
    fn default() -> Self {
        Self {
            chunk_size: 1000,
            overlap: 500,
        }
    }
}

impl ChunkingParams {
    pub fn new(chunk_size: usize, overlap: usize) -> Result<Self, CorpusError> {
        let params = Self {
            chunk_size,
            overlap,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.chunk_size == 0 || self.overlap >= self.chunk_size {
            return Err(CorpusError::InvalidParams {
                chunk_size: self.chunk_size,
                overlap: self.overlap,
            });
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.chunk_size - self.overlap
    }
}

/// A contiguous token window of a document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub chunk_index: usize,
    pub token_start: usize,
    pub token_end: usize,
    /// Byte offset of the first token's start in the document text.
    pub char_start: usize,
    /// Byte offset of the last token's end in the document text.
    pub char_end: usize,
    pub text: String,
}

/// Number of windows produced for `total_tokens` tokens.
pub fn expected_chunk_count(total_tokens: usize, params: &ChunkingParams) -> usize {
    if total_tokens == 0 {
        0
    } else if total_tokens <= params.chunk_size {
        1
    } else {
        (total_tokens - params.chunk_size).div_ceil(params.stride()) + 1
    }
}

/// Token ranges `[start, end)` of every window over `total_tokens` tokens.
///
/// Window `i` starts at `i * stride`; emission stops at the first window
/// whose end reaches `total_tokens`.
pub fn window_ranges(total_tokens: usize, params: &ChunkingParams) -> Vec<(usize, usize)> {
    let stride = params.stride();
    let mut out = Vec::with_capacity(expected_chunk_count(total_tokens, params));
    if total_tokens == 0 {
        return out;
    }
    let mut start = 0;
    loop {
        let end = usize::min(start + params.chunk_size, total_tokens);
        out.push((start, end));
        if end == total_tokens {
            break;
        }
        start += stride;
    }
    out
}

/// Split a document into overlapping token windows.
///
/// Chunk text is sliced from the document by byte offsets, so it is always
/// verbatim source text.
pub fn chunk_document<T: Tokenizer + ?Sized>(
    doc: &Document,
    params: &ChunkingParams,
    tokenizer: &T,
) -> Result<Vec<Chunk>, CorpusError> {
    params.validate()?;
    let tokens = tokenizer.tokenize(&doc.text)?;
    check_tokens(&tokens, &doc.text)?;
    if tokens.is_empty() {
        return Err(CorpusError::EmptyDocument(doc.doc_id.clone()));
    }
    Ok(window_ranges(tokens.len(), params)
        .into_iter()
        .enumerate()
        .map(|(chunk_index, (token_start, token_end))| {
            let char_start = tokens[token_start].char_start;
            let char_end = tokens[token_end - 1].char_end;
            Chunk {
                doc_id: doc.doc_id.clone(),
                chunk_index,
                token_start,
                token_end,
                char_start,
                char_end,
                text: doc.text[char_start..char_end].to_string(),
            }
        })
        .collect())
}

fn check_tokens(tokens: &[Token], text: &str) -> Result<(), CorpusError> {
    let mut prev_end = 0;
    for (i, t) in tokens.iter().enumerate() {
        if t.char_start >= t.char_end
            || t.char_end > text.len()
            || t.char_start < prev_end
            || !text.is_char_boundary(t.char_start)
            || !text.is_char_boundary(t.char_end)
        {
            return Err(CorpusError::Tokenizer(alloc::format!(
                "token {i} has invalid span [{}, {})",
                t.char_start,
                t.char_end
            )));
        }
        prev_end = t.char_end;
    }
    Ok(())
}
