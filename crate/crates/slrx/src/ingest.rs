//! Loading articles and data-entry definitions from disk.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use slrx_core::{CorpusError, DataEntry, Document, EntryError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("corpus path {0} does not exist")]
    Missing(PathBuf),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    BadLine {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Document { path: PathBuf, source: CorpusError },
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
    #[error("corpus at {0} is empty")]
    EmptyCorpus(PathBuf),
    #[error("entries file {path}: {message}")]
    Entries { path: PathBuf, message: String },
    #[error("entries file {path}: {source}")]
    Entry { path: PathBuf, source: EntryError },
}

fn read(path: &Path) -> Result<String, IngestError> {
    fs::read_to_string(path).map_err(|source| IngestError::Read {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Deserialize)]
struct JsonlDocument {
    id: String,
    text: String,
}

/// Load a corpus from a directory of `.txt` files (id = file stem) or from a
/// JSON-lines file of `{"id", "text"}` objects. Documents come back sorted
/// by id.
pub fn load_corpus(source: &Path) -> Result<Vec<Document>, IngestError> {
    if !source.exists() {
        return Err(IngestError::Missing(source.to_path_buf()));
    }
    let mut docs: BTreeMap<String, Document> = BTreeMap::new();
    let mut add = |doc: Document| {
        if docs.contains_key(&doc.doc_id) {
            return Err(IngestError::DuplicateId(doc.doc_id));
        }
        docs.insert(doc.doc_id.clone(), doc);
        Ok(())
    };
    if source.is_dir() {
        let entries = fs::read_dir(source).map_err(|e| IngestError::Read {
            path: source.to_path_buf(),
            source: e,
        })?;
        for entry in entries {
            let path = entry
                .map_err(|e| IngestError::Read {
                    path: source.to_path_buf(),
                    source: e,
                })?
                .path();
            if !path.is_file() || path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            let doc = Document::new(id, read(&path)?).map_err(|source| IngestError::Document {
                path: path.clone(),
                source,
            })?;
            add(doc)?;
        }
    } else {
        let text = read(source)?;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| IngestError::BadLine {
                path: source.to_path_buf(),
                line: i + 1,
                message,
            };
            let raw: JsonlDocument = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
            let doc = Document::new(raw.id, raw.text).map_err(|e| bad(e.to_string()))?;
            add(doc)?;
        }
    }
    if docs.is_empty() {
        return Err(IngestError::EmptyCorpus(source.to_path_buf()));
    }
    Ok(docs.into_values().collect())
}

/// Load a JSON array of `{"entry_id", "question", "options": [{"id", "label"}]}`.
pub fn load_entries(path: &Path) -> Result<Vec<DataEntry>, IngestError> {
    let text = read(path)?;
    let mut entries: Vec<DataEntry> =
        serde_json::from_str(&text).map_err(|e| IngestError::Entries {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    if entries.is_empty() {
        return Err(IngestError::Entries {
            path: path.to_path_buf(),
            message: "no entries".into(),
        });
    }
    let mut seen = std::collections::HashSet::new();
    for entry in entries.iter_mut() {
        entry.normalize().map_err(|source| IngestError::Entry {
            path: path.to_path_buf(),
            source,
        })?;
        if !seen.insert(entry.entry_id.clone()) {
            return Err(IngestError::Entries {
                path: path.to_path_buf(),
                message: format!("duplicate entry id {:?}", entry.entry_id),
            });
        }
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directory_sorted_by_id() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("b.txt"), "beta text").unwrap();
        fs::write(dir.path().join("a.txt"), "alpha text").unwrap();
        fs::write(dir.path().join("notes.md"), "ignored").unwrap();
        let docs = load_corpus(dir.path()).unwrap();
        let ids: Vec<_> = docs.iter().map(|d| d.doc_id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        assert_eq!(docs[0].text, "alpha text");
    }

    #[test]
    fn jsonl_duplicates_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        fs::write(
            &path,
            "{\"id\":\"p1\",\"text\":\"x\"}\n\n{\"id\":\"p1\",\"text\":\"y\"}\n",
        )
        .unwrap();
        assert!(matches!(load_corpus(&path), Err(IngestError::DuplicateId(id)) if id == "p1"));
        fs::write(
            &path,
            "{\"id\":\"p2\",\"text\":\"y\"}\n{\"id\":\"p1\",\"text\":\"x\"}\n",
        )
        .unwrap();
        let ids: Vec<_> = load_corpus(&path)
            .unwrap()
            .into_iter()
            .map(|d| d.doc_id)
            .collect();
        assert_eq!(ids, ["p1", "p2"]);
        fs::write(&path, "{\"id\":\"p1\"}\n").unwrap();
        assert!(matches!(
            load_corpus(&path),
            Err(IngestError::BadLine { line: 1, .. })
        ));
        fs::write(&path, "{\"id\":\"p1\",\"text\":\"  \"}\n").unwrap();
        assert!(matches!(
            load_corpus(&path),
            Err(IngestError::BadLine { .. })
        ));
    }

    #[test]
    fn empty_and_missing() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_corpus(dir.path()),
            Err(IngestError::EmptyCorpus(_))
        ));
        assert!(matches!(
            load_corpus(&dir.path().join("nope")),
            Err(IngestError::Missing(_))
        ));
    }

    #[test]
    fn entries_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("entries.json");
        fs::write(
            &path,
            r#"[{"entry_id":"data_type","question":"Which data type?","options":[{"id":"Tabular","label":"Tabular"},{"id":"Images"}]}]"#,
        )
        .unwrap();
        let e = load_entries(&path).unwrap();
        assert_eq!(e[0].options[1].label, "Images");
        fs::write(
            &path,
            r#"[{"entry_id":"x","question":"q","options":[{"id":"A"}]}]"#,
        )
        .unwrap();
        assert!(matches!(
            load_entries(&path),
            Err(IngestError::Entry { .. })
        ));
        fs::write(
            &path,
            r#"[{"entry_id":"x","question":"q","options":[{"id":"A"},{"id":"B"}]},
                {"entry_id":"x","question":"q","options":[{"id":"A"},{"id":"B"}]}]"#,
        )
        .unwrap();
        assert!(matches!(
            load_entries(&path),
            Err(IngestError::Entries { .. })
        ));
    }
}
