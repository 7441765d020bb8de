//! Remote embeddings and the per-document embedding cache.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use slrx_core::retrieval::truncate_to_tokens;
use slrx_core::{Chunk, EmbeddingProvider, EmbeddingProviderSpec, EmbeddingVector, RetrievalError};

use crate::cache::{sha256_hex, write_atomic, KeyLocks};
use crate::transport::{JsonClient, RetryPolicy};

/// Inputs per `/embeddings` request.
const BATCH_SIZE: usize = 32;

/// Client for an OpenAI-style `POST {endpoint}/embeddings`.
///
/// Inputs are cut to `max_input_tokens` whitespace tokens before they are
/// sent.
#[derive(Debug)]
pub struct HttpEmbedder {
    spec: EmbeddingProviderSpec,
    model: String,
    client: JsonClient,
    retry: RetryPolicy,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    index: usize,
    embedding: Vec<f64>,
}

impl HttpEmbedder {
    pub fn new(
        spec: EmbeddingProviderSpec,
        model: Option<String>,
        api_key: Option<String>,
        timeout: Duration,
        retry: RetryPolicy,
    ) -> Result<Self, RetrievalError> {
        let endpoint = spec.endpoint.clone().ok_or_else(|| {
            RetrievalError::Provider(format!("provider {:?} has no endpoint", spec.name))
        })?;
        let client = JsonClient::new(&endpoint, api_key, timeout)
            .map_err(|e| RetrievalError::Provider(e.to_string()))?;
        Ok(Self {
            model: model.unwrap_or_else(|| spec.name.clone()),
            spec,
            client,
            retry,
        })
    }

    pub fn network_calls(&self) -> u64 {
        self.client.attempts()
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, RetrievalError> {
        let input: Vec<&str> = texts
            .iter()
            .map(|t| truncate_to_tokens(t, self.spec.max_input_tokens))
            .collect();
        let body = json!({"model": self.model, "input": input});
        let resp: EmbeddingResponse = self
            .client
            .post_json("embeddings", &body, &self.retry)
            .map_err(|e| RetrievalError::Provider(e.to_string()))?;
        let mut slots: Vec<Option<EmbeddingVector>> = vec![None; texts.len()];
        for item in resp.data {
            let slot = slots.get_mut(item.index).ok_or_else(|| {
                RetrievalError::Provider(format!("response index {} out of range", item.index))
            })?;
            let v = EmbeddingVector::new(item.embedding)
                .map_err(|e| RetrievalError::Provider(e.to_string()))?;
            if v.dim() != self.spec.dim {
                return Err(RetrievalError::Provider(format!(
                    "expected dimension {}, got {}",
                    self.spec.dim,
                    v.dim()
                )));
            }
            *slot = Some(v);
        }
        slots
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                v.ok_or_else(|| RetrievalError::Provider(format!("response missing index {i}")))
            })
            .collect()
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn spec(&self) -> &EmbeddingProviderSpec {
        &self.spec
    }

    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, RetrievalError> {
        if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
            return Err(RetrievalError::EmptyText(Some(i)));
        }
        let mut out = Vec::with_capacity(texts.len());
        for batch in texts.chunks(BATCH_SIZE) {
            out.extend(self.embed_batch(batch)?);
        }
        Ok(out)
    }
}

/// One line of `{cache_dir}/embeddings/{provider}/{doc_id}.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedVector {
    pub chunk_index: usize,
    pub content_hash: String,
    pub vector: EmbeddingVector,
}

/// Escape everything outside `[A-Za-z0-9._-]` as `%XX` so any id maps to a
/// distinct, safe file name.
pub fn file_stem(id: &str) -> String {
    let mut out = String::with_capacity(id.len());
    for b in id.bytes() {
        if b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_') || (b == b'.' && !out.is_empty()) {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

#[derive(Debug)]
pub struct EmbeddingCache {
    root: PathBuf,
    locks: KeyLocks,
}

impl EmbeddingCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            locks: KeyLocks::default(),
        }
    }

    pub fn path_for(&self, provider: &str, doc_id: &str) -> PathBuf {
        self.root
            .join(file_stem(provider))
            .join(format!("{}.jsonl", file_stem(doc_id)))
    }

    fn load(&self, provider: &str, doc_id: &str) -> HashMap<usize, CachedVector> {
        let Ok(text) = fs::read_to_string(self.path_for(provider, doc_id)) else {
            return HashMap::new();
        };
        text.lines()
            .filter_map(|l| serde_json::from_str::<CachedVector>(l).ok())
            .map(|c| (c.chunk_index, c))
            .collect()
    }

    /// Vectors for `chunks` of one document, in order. Only chunks whose
    /// index or content hash is not cached are sent to the provider.
    ///
    /// Returns the vectors and how many were computed.
    pub fn embed_chunks<P: EmbeddingProvider + ?Sized>(
        &self,
        provider: &P,
        doc_id: &str,
        chunks: &[Chunk],
    ) -> Result<(Vec<EmbeddingVector>, usize), EmbedCacheError> {
        let spec = provider.spec();
        let path = self.path_for(&spec.name, doc_id);
        let lock = self.locks.get(&path.to_string_lossy());
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());

        let cached = self.load(&spec.name, doc_id);
        let hashes: Vec<String> = chunks.iter().map(|c| sha256_hex(&c.text)).collect();
        let mut vectors: Vec<Option<EmbeddingVector>> = chunks
            .iter()
            .zip(&hashes)
            .map(|(c, h)| {
                cached
                    .get(&c.chunk_index)
                    .filter(|e| &e.content_hash == h && e.vector.dim() == spec.dim)
                    .map(|e| e.vector.clone())
            })
            .collect();
        let missing: Vec<usize> = (0..chunks.len())
            .filter(|&i| vectors[i].is_none())
            .collect();
        if !missing.is_empty() {
            let texts: Vec<&str> = missing.iter().map(|&i| chunks[i].text.as_str()).collect();
            let fresh = provider.embed_texts(&texts)?;
            if fresh.len() != missing.len() {
                return Err(RetrievalError::Provider(
                    "provider returned wrong number of vectors".into(),
                )
                .into());
            }
            for (i, v) in missing.iter().zip(fresh) {
                vectors[*i] = Some(v);
            }
            let mut body = String::new();
            for ((c, h), v) in chunks.iter().zip(&hashes).zip(&vectors) {
                let line = CachedVector {
                    chunk_index: c.chunk_index,
                    content_hash: h.clone(),
                    vector: v.clone().expect("filled above"),
                };
                body.push_str(&serde_json::to_string(&line).map_err(io::Error::other)?);
                body.push('\n');
            }
            write_atomic(&path, body.as_bytes())?;
        }
        Ok((
            vectors
                .into_iter()
                .map(|v| v.expect("filled above"))
                .collect(),
            missing.len(),
        ))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EmbedCacheError {
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("embedding cache io: {0}")]
    Io(#[from] io::Error),
}
