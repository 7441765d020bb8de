use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;
use slrx::ingest::load_corpus;
use slrx::run::stderr_events;
use slrx::{run_evaluate, run_extract, ConfigError, ExtractOptions, RunConfig, RunError};
use slrx_core::{chunk_document, WhitespaceTokenizer};

const EXIT_CONFIG: u8 = 1;
const EXIT_EVAL: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "slrx",
    about = "Retrieval-augmented data extraction for literature reviews"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract answers for every document, data entry and model.
    Extract {
        #[arg(long)]
        config: PathBuf,
        /// Use the hashing embedder and the mock model; no network access.
        #[arg(long)]
        offline: bool,
        /// Override the configured models. Repeatable.
        #[arg(long = "model")]
        models: Vec<String>,
    },
    /// Compare extraction results with human annotations.
    Evaluate {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the chunk spans of one document as JSON lines.
    Chunks {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        doc: String,
    },
    /// Print the version.
    Version,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", json!({"event": "error", "message": e.to_string()}));
            ExitCode::from(match e {
                RunError::Eval(_) => EXIT_EVAL,
                RunError::Config(_) | RunError::Io(_) => EXIT_CONFIG,
            })
        }
    }
}

fn run(command: Command) -> Result<ExitCode, RunError> {
    match command {
        Command::Extract {
            config,
            offline,
            models,
        } => {
            let config = RunConfig::load(&config)?;
            let opts = ExtractOptions {
                models,
                events: stderr_events(),
                ..ExtractOptions::default()
            };
            let summary = run_extract(&config, offline, &opts)?;
            Ok(if summary.failures > 0 {
                ExitCode::from(EXIT_PARTIAL)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Evaluate {
            results,
            annotations,
            out,
        } => {
            let report = run_evaluate(&results, &annotations, &out)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&report.to_json()).expect("plain json")
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Chunks { config, doc } => {
            let config = RunConfig::load(&config)?;
            let docs = load_corpus(&config.corpus_path).map_err(|e| ConfigError(e.to_string()))?;
            let doc = docs
                .iter()
                .find(|d| d.doc_id == doc)
                .ok_or_else(|| ConfigError(format!("no document with id {doc:?}")))?;
            let chunks = chunk_document(doc, &config.chunking, &WhitespaceTokenizer)
                .map_err(|e| ConfigError(e.to_string()))?;
            for c in chunks {
                println!(
                    "{}",
                    json!({
                        "doc_id": c.doc_id,
                        "chunk_index": c.chunk_index,
                        "token_start": c.token_start,
                        "token_end": c.token_end,
                        "char_start": c.char_start,
                        "char_end": c.char_end,
                    })
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Version => {
            println!("slrx {}", env!("CARGO_PKG_VERSION"));
            Ok(ExitCode::SUCCESS)
        }
    }
}
