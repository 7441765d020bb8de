//! Retrieval, prompting, querying and parsing for one (document, entry,
//! model) triple.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use slrx_core::{
    build_prompt, parse_answer, rank_chunks, Chunk, DataEntry, Document, EmbeddingProvider,
    EmbeddingVector, ParseMode, PromptChunkRef, RetrievalError, RetrievalQuery, ScoredChunk,
};

use crate::llm::{LlmClient, LlmConfig};

/// The unit output of the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionRecord {
    pub doc_id: String,
    pub entry_id: String,
    pub model_id: String,
    pub answer_ids: Vec<String>,
    pub parse_mode: Option<ParseMode>,
    pub raw_text: String,
    pub chunk_refs: Vec<PromptChunkRef>,
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_detail: Option<String>,
    #[serde(default)]
    pub from_cache: bool,
    pub timestamp: DateTime<Utc>,
}

impl ExtractionRecord {
    pub fn new(doc_id: &str, entry_id: &str, model_id: &str) -> Self {
        Self {
            doc_id: doc_id.to_string(),
            entry_id: entry_id.to_string(),
            model_id: model_id.to_string(),
            answer_ids: Vec::new(),
            parse_mode: None,
            raw_text: String::new(),
            chunk_refs: Vec::new(),
            error: None,
            error_detail: None,
            from_cache: false,
            timestamp: Utc::now(),
        }
    }

    pub fn failed(
        doc_id: &str,
        entry_id: &str,
        model_id: &str,
        code: &str,
        detail: String,
    ) -> Self {
        let mut record = Self::new(doc_id, entry_id, model_id);
        record.set_error(code, detail);
        record
    }

    fn set_error(&mut self, code: &str, detail: String) {
        self.answer_ids.clear();
        self.parse_mode = None;
        self.error = Some(code.to_string());
        self.error_detail = Some(detail);
    }

    /// The record with its timestamp zeroed, for comparisons across runs.
    pub fn without_timestamp(&self) -> Self {
        Self {
            timestamp: DateTime::<Utc>::UNIX_EPOCH,
            ..self.clone()
        }
    }
}

/// A document with its chunks and their embeddings, in chunk order.
#[derive(Debug, Clone)]
pub struct IndexedDocument {
    pub doc: Document,
    pub chunks: Vec<Chunk>,
    pub vectors: Vec<EmbeddingVector>,
}

/// Embeds data-entry queries (memoized) and ranks a document's chunks
/// against them.
pub struct Retriever {
    provider: Arc<dyn EmbeddingProvider + Send + Sync>,
    k: usize,
    queries: Mutex<HashMap<String, EmbeddingVector>>,
}

impl Retriever {
    pub fn new(provider: Arc<dyn EmbeddingProvider + Send + Sync>, k: usize) -> Self {
        Self {
            provider,
            k,
            queries: Mutex::new(HashMap::new()),
        }
    }

    pub fn provider(&self) -> &Arc<dyn EmbeddingProvider + Send + Sync> {
        &self.provider
    }

    pub fn query_vector(&self, entry: &DataEntry) -> Result<EmbeddingVector, RetrievalError> {
        let query = RetrievalQuery::for_entry(entry);
        if let Some(v) = self
            .queries
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(&query.query_text)
        {
            return Ok(v.clone());
        }
        let v = self
            .provider
            .embed_texts(&[&query.query_text])?
            .pop()
            .ok_or_else(|| RetrievalError::Provider("no vector returned".into()))?;
        self.queries
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(query.query_text, v.clone());
        Ok(v)
    }

    pub fn top_chunks(
        &self,
        doc: &IndexedDocument,
        entry: &DataEntry,
    ) -> Result<Vec<ScoredChunk>, RetrievalError> {
        let q = self.query_vector(entry)?;
        rank_chunks(&q, doc.chunks.iter().zip(&doc.vectors), self.k)
    }
}

/// Run retrieval, prompting, the model call and answer parsing for one
/// triple. Failures at any stage end up in `record.error`.
pub fn extract_entry(
    doc: &IndexedDocument,
    entry: &DataEntry,
    retriever: &Retriever,
    llm: &LlmClient,
    config: &LlmConfig,
) -> ExtractionRecord {
    let doc_id = doc.doc.doc_id.as_str();
    let model_id = config.model_id.as_str();
    let fail = |code: &str, detail: String| {
        ExtractionRecord::failed(doc_id, &entry.entry_id, model_id, code, detail)
    };
    let chunks = match retriever.top_chunks(doc, entry) {
        Ok(c) => c,
        Err(e) => return fail("RetrievalError", e.to_string()),
    };
    let prompt = match build_prompt(entry, &chunks) {
        Ok(p) => p,
        Err(e) => return fail("PromptError", e.to_string()),
    };
    let mut record = ExtractionRecord::new(doc_id, &entry.entry_id, model_id);
    record.chunk_refs = prompt.chunk_refs.clone();
    let raw = match llm.query_llm(config, &prompt) {
        Ok(raw) => raw,
        Err(e) => {
            record.set_error(e.code(), e.to_string());
            return record;
        }
    };
    record.from_cache = raw.from_cache;
    record.raw_text = raw.text;
    match parse_answer(&record.raw_text, entry) {
        Ok((ids, mode)) => {
            record.answer_ids = ids;
            record.parse_mode = Some(mode);
        }
        Err(e) => record.set_error(e.code(), e.to_string()),
    }
    record
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cache::CompletionCache;
    use crate::llm::{RuleBasedModel, ScriptedModel};
    use slrx_core::{
        chunk_document, AnswerOption, ChunkingParams, HashEmbedder, WhitespaceTokenizer,
    };

    fn data_type() -> DataEntry {
        DataEntry::new(
            "data_type",
            "Which data type is used in this study?",
            [
                "Tabular",
                "Time-series",
                "Images",
                "Text",
                "Video",
                "Audio",
                "Multi-modal",
            ]
            .into_iter()
            .map(AnswerOption::labelled)
            .collect(),
        )
        .unwrap()
    }

    fn index(doc: Document, provider: &HashEmbedder) -> IndexedDocument {
        let chunks = chunk_document(
            &doc,
            &ChunkingParams::new(20, 10).unwrap(),
            &WhitespaceTokenizer,
        )
        .unwrap();
        let texts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
        let vectors = provider.embed_texts(&texts).unwrap();
        IndexedDocument {
            doc,
            chunks,
            vectors,
        }
    }

    #[test]
    fn planted_sentence_is_extracted() {
        let emb = HashEmbedder::default();
        let filler =
            "patients were recruited from outpatient clinics and followed for months ".repeat(6);
        let doc = Document::new(
            "p1",
            format!("{filler}The study uses Tabular data. {filler}"),
        )
        .unwrap();
        let doc = index(doc, &emb);
        let retriever = Retriever::new(Arc::new(emb), 3);
        let dir = tempfile::tempdir().unwrap();
        let cache = Arc::new(CompletionCache::open(dir.path()).unwrap());
        let llm = LlmClient::new(Arc::new(RuleBasedModel::default()), Some(cache));
        let cfg = LlmConfig::new("mock");
        let rec = extract_entry(&doc, &data_type(), &retriever, &llm, &cfg);
        assert_eq!(rec.answer_ids, ["Tabular"]);
        assert_eq!(rec.parse_mode, Some(ParseMode::Strict));
        assert_eq!(rec.error, None);
        assert_eq!(rec.chunk_refs.len(), 3);
        assert!(!rec.from_cache);
        assert!(rec.chunk_refs.windows(2).all(|w| w[0].score >= w[1].score));

        let again = extract_entry(&doc, &data_type(), &retriever, &llm, &cfg);
        assert!(again.from_cache);
        assert_eq!(
            ExtractionRecord {
                from_cache: false,
                ..again.without_timestamp()
            },
            rec.without_timestamp()
        );
    }

    #[test]
    fn prose_answer_is_captured_as_error() {
        let emb = HashEmbedder::default();
        let doc = index(
            Document::new("p1", "The study uses Tabular data.").unwrap(),
            &emb,
        );
        let retriever = Retriever::new(Arc::new(emb), 3);
        let llm = LlmClient::new(Arc::new(ScriptedModel::canned("I am not sure.")), None);
        let rec = extract_entry(&doc, &data_type(), &retriever, &llm, &LlmConfig::new("m"));
        assert_eq!(rec.error.as_deref(), Some("NoJsonArray"));
        assert!(rec.answer_ids.is_empty());
        assert_eq!(rec.raw_text, "I am not sure.");
        assert_eq!(rec.parse_mode, None);
        assert_eq!(rec.chunk_refs.len(), 1);
    }

    #[test]
    fn record_json_shape() {
        let rec = ExtractionRecord::failed("d", "e", "m", "ProviderError", "boom".into());
        let v: serde_json::Value = serde_json::to_value(&rec).unwrap();
        assert_eq!(v["answer_ids"], serde_json::json!([]));
        assert_eq!(v["parse_mode"], serde_json::Value::Null);
        assert_eq!(v["error"], "ProviderError");
        let back: ExtractionRecord = serde_json::from_value(v).unwrap();
        assert_eq!(back, rec);
    }
}
