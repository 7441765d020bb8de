//! Retrieval-augmented extraction of structured answers from research
//! articles: file formats, HTTP clients, caches, runs and reports.

#![forbid(unsafe_code)]

pub mod cache;
pub mod config;
pub mod embed;
pub mod ingest;
pub mod llm;
pub mod pipeline;
pub mod report;
pub mod run;
pub mod transport;

pub use config::{ConfigError, RunConfig};
pub use pipeline::ExtractionRecord;
pub use report::{evaluate, run_evaluate, EvaluationReport};
pub use run::{run_extract, run_extract_with, Backends, ExtractOptions, ExtractSummary, RunError};
pub use slrx_core as core;
