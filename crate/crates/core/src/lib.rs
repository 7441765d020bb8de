//! Allocation-only building blocks for retrieval-augmented data extraction
//! from research articles.
//!
//! The crate is `no_std` and needs only `alloc`. It covers the pure parts of
//! the pipeline:
//!
//! * [`corpus`]: documents, tokenization with byte offsets and sliding-window
//!   chunking.
//! * [`retrieval`]: embedding vectors, cosine similarity, top-k ranking and a
//!   deterministic hashing embedder for offline use.
//! * [`extraction`]: data entries with closed option sets, prompt rendering
//!   and validation of the model's JSON-array answer.
//! * [`evaluation`]: Cohen's kappa over exact answer sets and the
//!   union/intersection precision and recall against two human raters.
//!
//! Everything touching the filesystem, the network or the clock lives in the
//! `slrx` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod corpus;
pub mod evaluation;
pub mod extraction;
pub mod retrieval;

pub use corpus::{
    chunk_document, expected_chunk_count, Chunk, ChunkingParams, CorpusError, Document, Token,
    Tokenizer, WhitespaceTokenizer,
};
pub use evaluation::{
    agreement_matrix, cohen_kappa, precision_recall, AgreementMatrix, AnnotationSet, EvalError,
    ItemKey, KappaResult, PrResult,
};
pub use extraction::{
    build_prompt, parse_answer, AnswerOption, DataEntry, EntryError, ParseError, ParseMode,
    PromptBundle, PromptChunkRef, PromptError, BASE_SYSTEM_PROMPT,
};
pub use retrieval::{
    cosine_similarity, rank_chunks, EmbeddingProvider, EmbeddingProviderSpec, EmbeddingVector,
    HashEmbedder, RetrievalError, RetrievalQuery, ScoredChunk,
};

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}
