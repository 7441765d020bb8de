//! End-to-end extraction runs.

use std::collections::BTreeMap;
use std::env;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::Duration;

use serde::Serialize;
use serde_json::json;
use slrx_core::{
    chunk_document, DataEntry, Document, EmbeddingProvider, HashEmbedder, WhitespaceTokenizer,
};
use thiserror::Error;

use crate::cache::{CacheStats, CompletionCache};
use crate::config::{ConfigError, RunConfig};
use crate::embed::{EmbeddingCache, HttpEmbedder};
use crate::ingest::{load_corpus, load_entries};
use crate::llm::{ChatModel, HttpChatModel, LlmClient, MockScript, RuleBasedModel, ScriptedModel};
use crate::pipeline::{extract_entry, ExtractionRecord, IndexedDocument, Retriever};
use crate::transport::RetryPolicy;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("evaluation error: {0}")]
    Eval(String),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

/// Receives progress events. The CLI prints them to stderr as JSON lines.
pub type EventSink = Arc<dyn Fn(&serde_json::Value) + Send + Sync>;

pub fn stderr_events() -> EventSink {
    Arc::new(|event| {
        let mut err = io::stderr().lock();
        let _ = writeln!(err, "{event}");
    })
}

pub fn no_events() -> EventSink {
    Arc::new(|_| {})
}

/// The embedding provider and chat model a run talks to.
pub struct Backends {
    pub provider: Arc<dyn EmbeddingProvider + Send + Sync>,
    pub chat: Arc<dyn ChatModel>,
    http_embedder: Option<Arc<HttpEmbedder>>,
}

impl Backends {
    pub fn new(
        provider: Arc<dyn EmbeddingProvider + Send + Sync>,
        chat: Arc<dyn ChatModel>,
    ) -> Self {
        Self {
            provider,
            chat,
            http_embedder: None,
        }
    }

    /// Build backends from configuration. Offline mode uses the hashing
    /// embedder and the scripted or rule-based mock model.
    pub fn from_config(config: &RunConfig, offline: bool) -> Result<Self, ConfigError> {
        if offline {
            let provider = Arc::new(HashEmbedder::with_dim(
                HashEmbedder::DIM,
                config.embedding.max_input_tokens,
            ));
            let chat: Arc<dyn ChatModel> = match &config.offline_fixtures {
                Some(path) => {
                    let text = fs::read_to_string(path)
                        .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
                    let script: MockScript = serde_json::from_str(&text)
                        .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
                    Arc::new(ScriptedModel::new(script))
                }
                None => Arc::new(RuleBasedModel::default()),
            };
            return Ok(Self::new(provider, chat));
        }

        let chat_key = read_key(&config.api_key_env, true)?;
        let timeout = Duration::from_secs(config.llm.timeout_secs);
        let chat = Arc::new(
            HttpChatModel::new(&config.llm.endpoint, chat_key, timeout)
                .map_err(|e| ConfigError(e.to_string()))?,
        );
        let emb = &config.embedding;
        if emb.is_builtin_hash() {
            let provider = Arc::new(HashEmbedder::with_dim(emb.dim, emb.max_input_tokens));
            return Ok(Self::new(provider, chat));
        }
        if emb.endpoint.is_none() {
            return Err(ConfigError(format!(
                "embedding provider {:?} needs an endpoint",
                emb.name
            )));
        }
        let key_env = emb.api_key_env.as_deref().unwrap_or(&config.api_key_env);
        let http = Arc::new(
            HttpEmbedder::new(
                emb.spec(),
                emb.model.clone(),
                read_key(key_env, false)?,
                timeout,
                RetryPolicy {
                    max_retries: config.llm.max_retries,
                    backoff_base_ms: config.llm.backoff_base_ms,
                },
            )
            .map_err(|e| ConfigError(e.to_string()))?,
        );
        Ok(Self {
            provider: http.clone(),
            chat,
            http_embedder: Some(http),
        })
    }

    /// HTTP requests sent by both backends.
    pub fn network_calls(&self) -> u64 {
        self.chat.network_calls() + self.http_embedder.as_ref().map_or(0, |h| h.network_calls())
    }
}

/// An empty variable name means no authentication.
fn read_key(var: &str, required: bool) -> Result<Option<String>, ConfigError> {
    if var.is_empty() {
        return Ok(None);
    }
    match env::var(var) {
        Ok(v) if !v.is_empty() => Ok(Some(v)),
        _ if required => Err(ConfigError(format!(
            "environment variable {var} is not set"
        ))),
        _ => Ok(None),
    }
}

#[derive(Clone)]
pub struct ExtractOptions {
    /// Replaces `config.model_ids` when non-empty.
    pub models: Vec<String>,
    /// Checked before each work item; once set, no new items start.
    pub stop: Arc<AtomicBool>,
    pub events: EventSink,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            models: Vec::new(),
            stop: Arc::new(AtomicBool::new(false)),
            events: no_events(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtractSummary {
    pub records: usize,
    pub failures: usize,
    pub interrupted: bool,
    pub cache: CacheStats,
    pub network_calls: u64,
    pub embeddings_computed: usize,
    pub output_path: PathBuf,
}

struct WorkItem<'a> {
    doc: usize,
    entry: &'a DataEntry,
    model: usize,
}

/// Fan `count` jobs out to `workers` threads. Results are handed to `sink`
/// on the calling thread in completion order.
fn for_each_parallel<T, F>(
    count: usize,
    workers: usize,
    stop: &AtomicBool,
    job: F,
    mut sink: impl FnMut(usize, T),
) where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();
    thread::scope(|s| {
        for _ in 0..workers.max(1).min(count.max(1)) {
            let tx = tx.clone();
            let (next, job) = (&next, &job);
            s.spawn(move || loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= count {
                    break;
                }
                if tx.send((i, job(i))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (i, v) in rx {
            sink(i, v);
        }
    });
}

fn index_document(
    doc: &Document,
    config: &RunConfig,
    provider: &(dyn EmbeddingProvider + Send + Sync),
    cache: &EmbeddingCache,
) -> Result<(IndexedDocument, usize), String> {
    let chunks =
        chunk_document(doc, &config.chunking, &WhitespaceTokenizer).map_err(|e| e.to_string())?;
    let (vectors, computed) = cache
        .embed_chunks(provider, &doc.doc_id, &chunks)
        .map_err(|e| e.to_string())?;
    Ok((
        IndexedDocument {
            doc: doc.clone(),
            chunks,
            vectors,
        },
        computed,
    ))
}

/// Load the inputs named in `config` and check them before any network
/// traffic.
pub fn prepare(
    config: &RunConfig,
    opts: &ExtractOptions,
) -> Result<(RunConfig, Vec<Document>, Vec<DataEntry>), RunError> {
    let mut config = config.clone();
    if !opts.models.is_empty() {
        config.model_ids = opts.models.clone();
    }
    config.validate()?;
    let docs = load_corpus(&config.corpus_path).map_err(|e| ConfigError(e.to_string()))?;
    let mut entries = load_entries(&config.entries_path).map_err(|e| ConfigError(e.to_string()))?;
    entries.sort_by(|a, b| a.entry_id.cmp(&b.entry_id));
    Ok((config, docs, entries))
}

/// Extract every (document, entry, model) triple and write the records as
/// JSON lines to `config.output_path`, ordered by document id, entry id and
/// then model in configuration order.
///
/// Per-item failures are recorded, never raised. If `opts.stop` is set
/// before all items finish, nothing is written and the summary says
/// `interrupted`; finished completions stay cached for the next run.
pub fn run_extract(
    config: &RunConfig,
    offline: bool,
    opts: &ExtractOptions,
) -> Result<ExtractSummary, RunError> {
    let (config, docs, entries) = prepare(config, opts)?;
    let backends = Backends::from_config(&config, offline)?;
    run_prepared(&config, &docs, &entries, &backends, opts)
}

/// [`run_extract`] with caller-supplied backends.
pub fn run_extract_with(
    config: &RunConfig,
    backends: &Backends,
    opts: &ExtractOptions,
) -> Result<ExtractSummary, RunError> {
    let (config, docs, entries) = prepare(config, opts)?;
    run_prepared(&config, &docs, &entries, backends, opts)
}

fn run_prepared(
    config: &RunConfig,
    docs: &[Document],
    entries: &[DataEntry],
    backends: &Backends,
    opts: &ExtractOptions,
) -> Result<ExtractSummary, RunError> {
    let events = &opts.events;
    let emb_cache = EmbeddingCache::new(config.cache_dir.join("embeddings"));
    let completions = Arc::new(CompletionCache::open(config.cache_dir.join("completions"))?);
    let llm = LlmClient::new(backends.chat.clone(), Some(completions.clone()));
    let retriever = Retriever::new(backends.provider.clone(), config.k);
    let total = docs.len() * entries.len() * config.model_ids.len();
    events(
        &json!({"event": "start", "documents": docs.len(), "entries": entries.len(), "models": config.model_ids, "items": total}),
    );

    let mut indexed: Vec<Option<Result<IndexedDocument, String>>> = vec![None; docs.len()];
    let mut embeddings_computed = 0;
    let never = AtomicBool::new(false);
    for_each_parallel(
        docs.len(),
        config.parallelism,
        &never,
        |i| index_document(&docs[i], config, backends.provider.as_ref(), &emb_cache),
        |i, res| {
            match &res {
                Ok((_, computed)) => embeddings_computed += computed,
                Err(e) => {
                    events(&json!({"event": "index_error", "doc_id": docs[i].doc_id, "error": e}))
                }
            }
            indexed[i] = Some(res.map(|(d, _)| d));
        },
    );
    let indexed: Vec<Result<IndexedDocument, String>> = indexed
        .into_iter()
        .map(|d| d.expect("every document indexed"))
        .collect();

    let llm_configs: Vec<_> = config
        .model_ids
        .iter()
        .map(|m| config.llm.for_model(m))
        .collect();
    let n_models = llm_configs.len();
    let items: Vec<WorkItem> = (0..docs.len())
        .flat_map(|doc| {
            entries.iter().flat_map(move |entry| {
                (0..n_models).map(move |model| WorkItem { doc, entry, model })
            })
        })
        .collect();

    let out_dir = config
        .output_path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(std::path::Path::new("."));
    fs::create_dir_all(out_dir)?;
    let tmp = tempfile::NamedTempFile::new_in(out_dir)?;
    let mut writer = BufWriter::new(tmp.as_file());
    let mut pending: BTreeMap<usize, ExtractionRecord> = BTreeMap::new();
    let mut written = 0usize;
    let mut failures = 0usize;
    let mut write_err: Option<io::Error> = None;

    for_each_parallel(
        items.len(),
        config.parallelism,
        &opts.stop,
        |i| {
            let item = &items[i];
            let cfg = &llm_configs[item.model];
            match &indexed[item.doc] {
                Ok(doc) => extract_entry(doc, item.entry, &retriever, &llm, cfg),
                Err(e) => ExtractionRecord::failed(
                    &docs[item.doc].doc_id,
                    &item.entry.entry_id,
                    &cfg.model_id,
                    "RetrievalError",
                    e.clone(),
                ),
            }
        },
        |i, record| {
            if record.error.is_some() {
                failures += 1;
            }
            events(&json!({
                "event": "record",
                "index": i,
                "doc_id": record.doc_id,
                "entry_id": record.entry_id,
                "model_id": record.model_id,
                "from_cache": record.from_cache,
                "error": record.error,
                "error_detail": record.error_detail,
            }));
            pending.insert(i, record);
            while let Some(rec) = pending.remove(&written) {
                let res = serde_json::to_writer(&mut writer, &rec)
                    .map_err(io::Error::other)
                    .and_then(|_| writer.write_all(b"\n"));
                if let Err(e) = res {
                    write_err.get_or_insert(e);
                }
                written += 1;
            }
        },
    );
    if let Some(e) = write_err {
        return Err(e.into());
    }
    writer.flush()?;
    drop(writer);

    let interrupted = written < items.len();
    if !interrupted {
        tmp.persist(&config.output_path).map_err(|e| e.error)?;
    }
    let summary = ExtractSummary {
        records: written + pending.len(),
        failures,
        interrupted,
        cache: completions.stats(),
        network_calls: backends.network_calls(),
        embeddings_computed,
        output_path: config.output_path.clone(),
    };
    events(&json!({"event": "done", "summary": summary}));
    Ok(summary)
}

/// Read a results file written by [`run_extract`].
pub fn load_records(path: &std::path::Path) -> Result<Vec<ExtractionRecord>, RunError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| ConfigError(format!("{}:{}: {e}", path.display(), i + 1)).into())
        })
        .collect()
}
