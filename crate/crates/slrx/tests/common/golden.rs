//! The data-type prompt fixture and its checked-in rendering.

use std::fs;
use std::path::{Path, PathBuf};

use slrx_core::{build_prompt, Chunk, DataEntry, ScoredChunk};

fn tests_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests")
}

fn chunk(idx: usize, text: &str) -> Chunk {
    Chunk {
        doc_id: "p1".into(),
        chunk_index: idx,
        token_start: idx * 500,
        token_end: idx * 500 + 1000,
        char_start: 0,
        char_end: text.len(),
        text: text.into(),
    }
}

pub fn data_type_entry() -> DataEntry {
    let text = fs::read_to_string(tests_dir().join("fixtures/data_type_entry.json")).unwrap();
    let mut entry: DataEntry = serde_json::from_str(&text).unwrap();
    entry.normalize().unwrap();
    entry
}

pub fn fixture_transcript() -> String {
    let chunks = [
        ScoredChunk {
            chunk: chunk(
                2,
                "Heart rate was sampled every second from a wrist-worn sensor.",
            ),
            score: 0.81,
        },
        ScoredChunk {
            chunk: chunk(0, "We recruited 120 adults with hypertension."),
            score: 0.42,
        },
        ScoredChunk {
            chunk: chunk(5, "Models were compared using AUROC."),
            score: 0.42,
        },
    ];
    build_prompt(&data_type_entry(), &chunks)
        .unwrap()
        .transcript()
}

pub fn golden_transcript() -> String {
    fs::read_to_string(tests_dir().join("golden/data_type_prompt.txt")).unwrap()
}
