//! Content-addressed on-disk cache of chat completions.
//!
//! Layout: `{root}/{key[..2]}/{key}.json`, where `key` is the SHA-256 of the
//! model id and both prompt messages.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Cache key for one request.
///
/// Each field is length-prefixed so that no two distinct triples hash the
/// same byte stream.
pub fn completion_key(model_id: &str, system_text: &str, user_text: &str) -> String {
    let mut h = Sha256::new();
    for part in [model_id, system_text, user_text] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex::encode(h.finalize())
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CachedCompletion {
    pub request_digest: String,
    pub model_id: String,
    pub response_text: String,
    pub usage: Usage,
    pub latency_ms: u64,
    pub timestamp: DateTime<Utc>,
}

/// Write `contents` to `path` through a temporary sibling and a rename, so
/// readers never see a partial file.
pub(crate) fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Per-key mutexes handed out on demand.
#[derive(Debug, Default)]
pub(crate) struct KeyLocks {
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl KeyLocks {
    pub(crate) fn get(&self, key: &str) -> Arc<Mutex<()>> {
        let mut map = self.locks.lock().unwrap_or_else(|e| e.into_inner());
        map.entry(key.to_string()).or_default().clone()
    }
}

#[derive(Debug)]
pub struct CompletionCache {
    root: PathBuf,
    locks: KeyLocks,
    hits: AtomicU64,
    misses: AtomicU64,
}

/// Hit and miss counts since the cache was opened.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
}

impl CompletionCache {
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            locks: KeyLocks::default(),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        })
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.root.join(&key[..2]).join(format!("{key}.json"))
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
        }
    }

    /// Read an entry. Unreadable or corrupt files count as absent.
    pub fn get(&self, key: &str) -> Option<CachedCompletion> {
        let bytes = fs::read(self.path_for(key)).ok()?;
        serde_json::from_slice::<CachedCompletion>(&bytes)
            .ok()
            .filter(|c| c.request_digest == key)
    }

    pub fn put(&self, entry: &CachedCompletion) -> io::Result<()> {
        let bytes = serde_json::to_vec_pretty(entry).map_err(io::Error::other)?;
        write_atomic(&self.path_for(&entry.request_digest), &bytes)
    }

    /// Return the cached entry for `key`, or run `compute`, store its result
    /// and return it. Callers racing on one key are serialized, so `compute`
    /// runs at most once per key while the entry persists.
    ///
    /// The boolean is true on a cache hit.
    pub fn get_or_compute<E, F>(&self, key: &str, compute: F) -> Result<(CachedCompletion, bool), E>
    where
        F: FnOnce() -> Result<CachedCompletion, E>,
    {
        let lock = self.locks.get(key);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(hit) = self.get(key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok((hit, true));
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let fresh = compute()?;
        // A failed write only costs a recomputation later.
        let _ = self.put(&fresh);
        Ok((fresh, false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicUsize;
    use std::thread;

    fn entry(key: &str, text: &str) -> CachedCompletion {
        CachedCompletion {
            request_digest: key.to_string(),
            model_id: "m".into(),
            response_text: text.into(),
            usage: Usage::default(),
            latency_ms: 1,
            timestamp: Utc::now(),
        }
    }

    #[test]
    fn keys_separate_fields() {
        let a = completion_key("m", "ab", "c");
        let b = completion_key("m", "a", "bc");
        assert_ne!(a, b);
        assert_eq!(a.len(), 64);
        assert_eq!(a, completion_key("m", "ab", "c"));
        assert_eq!(
            sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn layout_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = CompletionCache::open(dir.path()).unwrap();
        let key = completion_key("m", "s", "u");
        assert!(cache.get(&key).is_none());
        cache.put(&entry(&key, "[\"A\"]")).unwrap();
        let path = dir.path().join(&key[..2]).join(format!("{key}.json"));
        assert!(path.is_file());
        assert_eq!(cache.get(&key).unwrap().response_text, "[\"A\"]");
        fs::write(&path, b"{ truncated").unwrap();
        assert!(cache.get(&key).is_none());
    }

    #[test]
    fn concurrent_same_key_computes_once() {
        let dir = tempfile::tempdir().unwrap();
        let cache = CompletionCache::open(dir.path()).unwrap();
        let key = completion_key("m", "s", "u");
        let calls = AtomicUsize::new(0);
        thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| {
                    cache
                        .get_or_compute::<(), _>(&key, || {
                            calls.fetch_add(1, Ordering::SeqCst);
                            Ok(entry(&key, "x"))
                        })
                        .unwrap()
                });
            }
        });
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        assert_eq!(cache.stats(), CacheStats { hits: 7, misses: 1 });
    }

    #[test]
    fn failures_are_not_cached() {
        let dir = tempfile::tempdir().unwrap();
        let cache = CompletionCache::open(dir.path()).unwrap();
        let key = completion_key("m", "s", "u");
        assert!(cache
            .get_or_compute(&key, || Err::<CachedCompletion, _>("boom"))
            .is_err());
        assert!(cache.get(&key).is_none());
    }
}
