//! A small planted corpus whose correct answers are known.

use std::fs;
use std::path::{Path, PathBuf};

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde_json::json;
use slrx::RunConfig;
use slrx_core::ChunkingParams;

pub const DATA_TYPES: [&str; 7] = [
    "Tabular",
    "Time-series",
    "Images",
    "Text",
    "Video",
    "Audio",
    "Multi-modal",
];
const APPLICATIONS: [&str; 4] = [
    "Remote monitoring",
    "Diagnosis",
    "Rehabilitation",
    "Mental health",
];
const MODELS: [&str; 4] = [
    "Random forest",
    "Logistic regression",
    "Neural network",
    "Support vector machine",
];

const FILLER: [&str; 24] = [
    "cohort",
    "baseline",
    "follow-up",
    "clinic",
    "participants",
    "recruited",
    "weeks",
    "outcomes",
    "protocol",
    "ethics",
    "approval",
    "consent",
    "site",
    "measures",
    "reported",
    "secondary",
    "visits",
    "adults",
    "enrolled",
    "hospital",
    "questionnaire",
    "sessions",
    "staff",
    "months",
];

pub struct EntryDef {
    pub id: &'static str,
    pub question: &'static str,
    pub labels: &'static [&'static str],
    pub template: &'static str,
}

pub const ENTRIES: [EntryDef; 3] = [
    EntryDef {
        id: "application",
        question: "Which type of digital health application is studied?",
        labels: &APPLICATIONS,
        template: "The type of digital health application studied is {}.",
    },
    EntryDef {
        id: "data_type",
        question: "Which data type is used in this study?",
        labels: &DATA_TYPES,
        template: "The data type used in this study is {}.",
    },
    EntryDef {
        id: "prediction_model",
        question: "Which prediction model is applied?",
        labels: &MODELS,
        template: "The prediction model applied is {}.",
    },
];

/// Planted answers per document, one list per entry in `ENTRIES` order.
pub const TRUTH: [(&str, [&[&str]; 3]); 5] = [
    ("p1", [&["Diagnosis"], &["Tabular"], &["Random forest"]]),
    (
        "p2",
        [
            &["Remote monitoring"],
            &["Time-series"],
            &["Neural network"],
        ],
    ),
    (
        "p3",
        [
            &["Diagnosis"],
            &["Images"],
            &["Neural network", "Support vector machine"],
        ],
    ),
    (
        "p4",
        [&["Mental health"], &["Text"], &["Logistic regression"]],
    ),
    (
        "p5",
        [&["Rehabilitation"], &["Audio", "Video"], &["Random forest"]],
    ),
];

pub struct Fixture {
    pub dir: PathBuf,
    pub config: RunConfig,
}

fn filler(rng: &mut StdRng, words: usize) -> String {
    (0..words)
        .map(|_| *FILLER.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

fn document(seed: u64, answers: &[&[&str]; 3]) -> String {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut parts = vec![filler(&mut rng, 60)];
    for (def, ans) in ENTRIES.iter().zip(answers) {
        parts.push(def.template.replace("{}", &ans.join(" and ")));
        parts.push(filler(&mut rng, 60));
    }
    parts.join(" ")
}

/// Write the corpus, entries file and a run config under `dir`.
pub fn write_fixture(dir: &Path) -> Fixture {
    let corpus = dir.join("corpus");
    fs::create_dir_all(&corpus).unwrap();
    for (i, (doc_id, answers)) in TRUTH.iter().enumerate() {
        fs::write(
            corpus.join(format!("{doc_id}.txt")),
            document(i as u64, answers),
        )
        .unwrap();
    }
    let entries: Vec<_> = ENTRIES
        .iter()
        .map(|e| {
            json!({
                "entry_id": e.id,
                "question": e.question,
                "options": e.labels.iter().map(|l| json!({"id": l})).collect::<Vec<_>>(),
            })
        })
        .collect();
    let entries_path = dir.join("entries.json");
    fs::write(
        &entries_path,
        serde_json::to_string_pretty(&entries).unwrap(),
    )
    .unwrap();
    let mut config = RunConfig::new(&corpus, &entries_path, vec!["mock-model".into()]);
    config.chunking = ChunkingParams::new(40, 20).unwrap();
    config.cache_dir = dir.join("cache");
    config.output_path = dir.join("out").join("results.jsonl");
    config.api_key_env = String::new();
    Fixture {
        dir: dir.to_path_buf(),
        config,
    }
}

/// Annotation lines for raters who all report the planted answers.
pub fn truthful_annotations(raters: &[&str]) -> String {
    let mut out = String::new();
    for rater in raters {
        for (doc_id, answers) in TRUTH {
            for (def, ans) in ENTRIES.iter().zip(answers) {
                out.push_str(
                    &json!({"rater": rater, "doc_id": doc_id, "entry_id": def.id, "answers": ans})
                        .to_string(),
                );
                out.push('\n');
            }
        }
    }
    out
}

/// The planted answers for a (document, entry) pair in option order.
pub fn expected(doc_id: &str, entry_id: &str) -> Vec<String> {
    let (_, answers) = TRUTH.iter().find(|(d, _)| *d == doc_id).unwrap();
    let i = ENTRIES.iter().position(|e| e.id == entry_id).unwrap();
    ENTRIES[i]
        .labels
        .iter()
        .filter(|l| answers[i].contains(l))
        .map(|l| l.to_string())
        .collect()
}
