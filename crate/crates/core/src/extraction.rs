//! Data entries, prompt rendering and answer validation.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::retrieval::ScoredChunk;

/// System prompt sent with every extraction request.
pub const BASE_SYSTEM_PROMPT: &str = "You are a helpful and meticulous research assistant who answers questions about study details carefully and adequately from context chunks of provided research papers. Formatting: Carefully read the QUESTION, ANSWERS, AND CONTEXT. If one or more options are correct, return ONLY a JSON array of the correct option IDs, e.g., [\"A\", \"C\"]. Return the IDs exactly as provided in ANSWERS (case-sensitive). Do NOT include any text besides the JSON array.";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EntryError {
    #[error("entry id must not be empty")]
    EmptyId,
    #[error("entry {0:?}: question must not be empty")]
    EmptyQuestion(String),
    #[error("entry {0:?}: at least two options are required")]
    TooFewOptions(String),
    #[error("entry {entry:?}: duplicate option id {option:?}")]
    DuplicateOption { entry: String, option: String },
    #[error("entry {0:?}: option ids must not be empty")]
    EmptyOption(String),
}

/// One candidate answer. When `label` is omitted it defaults to the id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerOption {
    #[serde(rename = "id")]
    pub option_id: String,
    #[serde(default)]
    pub label: String,
}

impl AnswerOption {
    pub fn new(option_id: impl Into<String>, label: impl Into<String>) -> Self {
        Self {
            option_id: option_id.into(),
            label: label.into(),
        }
    }

    /// An option whose id is its label.
    pub fn labelled(label: impl Into<String>) -> Self {
        let label = label.into();
        Self::new(label.clone(), label)
    }
}

/// A review question with its closed set of answer options.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataEntry {
    pub entry_id: String,
    pub question: String,
    pub options: Vec<AnswerOption>,
}

impl DataEntry {
    pub fn new(
        entry_id: impl Into<String>,
        question: impl Into<String>,
        options: Vec<AnswerOption>,
    ) -> Result<Self, EntryError> {
        let mut entry = Self {
            entry_id: entry_id.into(),
            question: question.into(),
            options,
        };
        entry.normalize()?;
        Ok(entry)
    }

    /// Fill missing labels and check the entry invariants.
    pub fn normalize(&mut self) -> Result<(), EntryError> {
        for opt in &mut self.options {
            if opt.label.is_empty() {
                opt.label = opt.option_id.clone();
            }
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), EntryError> {
        if self.entry_id.is_empty() {
            return Err(EntryError::EmptyId);
        }
        if self.question.trim().is_empty() {
            return Err(EntryError::EmptyQuestion(self.entry_id.clone()));
        }
        if self.options.len() < 2 {
            return Err(EntryError::TooFewOptions(self.entry_id.clone()));
        }
        for (i, opt) in self.options.iter().enumerate() {
            if opt.option_id.is_empty() {
                return Err(EntryError::EmptyOption(self.entry_id.clone()));
            }
            if self.options[..i]
                .iter()
                .any(|o| o.option_id == opt.option_id)
            {
                return Err(EntryError::DuplicateOption {
                    entry: self.entry_id.clone(),
                    option: opt.option_id.clone(),
                });
            }
        }
        Ok(())
    }

    /// True when every option id equals its label, in which case ANSWERS
    /// lists the bare labels.
    pub fn ids_are_labels(&self) -> bool {
        self.options.iter().all(|o| o.option_id == o.label)
    }

    pub fn option_index(&self, option_id: &str) -> Option<usize> {
        self.options.iter().position(|o| o.option_id == option_id)
    }

    /// The ANSWERS array: bare ids, or `"id: label"` when ids differ from
    /// labels.
    pub fn render_answers(&self) -> String {
        let plain = self.ids_are_labels();
        json_string_array(self.options.iter().map(|o| {
            if plain {
                o.option_id.clone()
            } else {
                alloc::format!("{}: {}", o.option_id, o.label)
            }
        }))
    }
}

/// `["a", "b"]` with JSON string escaping and `", "` separators.
pub fn json_string_array<I, S>(items: I) -> String
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut out = String::from("[");
    for (i, item) in items.into_iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        // Serializing a str cannot fail.
        out.push_str(&serde_json::to_string(item.as_ref()).unwrap_or_default());
    }
    out.push(']');
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptChunkRef {
    pub doc_id: String,
    pub chunk_index: usize,
    pub score: f64,
}

/// A fully rendered request for one (document, entry) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub entry_id: String,
    pub chunk_refs: Vec<PromptChunkRef>,
}

impl PromptBundle {
    /// Human-readable form of both messages.
    pub fn transcript(&self) -> String {
        alloc::format!(
            "[system]\n{}\n\n[user]\n{}\n",
            self.system_text,
            self.user_text
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("no context chunks for entry {0:?}")]
    NoChunks(String),
    #[error("context chunks for entry {0:?} are not sorted by descending score")]
    Unsorted(String),
}

/// Render the system and user messages for `entry` over the retrieved
/// `chunks`, which must already be sorted by descending score.
pub fn build_prompt(
    entry: &DataEntry,
    chunks: &[ScoredChunk],
) -> Result<PromptBundle, PromptError> {
    if chunks.is_empty() {
        return Err(PromptError::NoChunks(entry.entry_id.clone()));
    }
    if chunks.windows(2).any(|w| w[0].score < w[1].score) {
        return Err(PromptError::Unsorted(entry.entry_id.clone()));
    }
    let mut user = String::new();
    user.push_str("QUESTION:\n");
    user.push_str(&entry.question);
    user.push_str("\n\nANSWERS:\n");
    user.push_str(&entry.render_answers());
    user.push_str("\n\nCONTEXT:");
    for (i, sc) in chunks.iter().enumerate() {
        if i > 0 {
            user.push('\n');
        }
        user.push_str(&alloc::format!(
            "\n--- CHUNK {} (doc={}, idx={}) ---\n",
            i + 1,
            sc.chunk.doc_id,
            sc.chunk.chunk_index
        ));
        user.push_str(&sc.chunk.text);
    }
    Ok(PromptBundle {
        system_text: BASE_SYSTEM_PROMPT.to_string(),
        user_text: user,
        entry_id: entry.entry_id.clone(),
        chunk_refs: chunks
            .iter()
            .map(|sc| PromptChunkRef {
                doc_id: sc.chunk.doc_id.clone(),
                chunk_index: sc.chunk.chunk_index,
                score: sc.score,
            })
            .collect(),
    })
}

/// How the answer array was located in the completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    /// The whole trimmed completion was the array.
    Strict,
    /// The array was embedded in other text.
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no JSON array of strings found in completion")]
    NoJsonArray,
    #[error("answer {0:?} is not one of the option ids")]
    UnknownOptionId(String),
    #[error("answer array is empty")]
    EmptyAnswer,
}

impl ParseError {
    /// Stable code stored in extraction records.
    pub fn code(&self) -> &'static str {
        match self {
            Self::NoJsonArray => "NoJsonArray",
            Self::UnknownOptionId(_) => "UnknownOptionId",
            Self::EmptyAnswer => "EmptyAnswer",
        }
    }
}

/// Validate a completion against the entry's option ids.
///
/// The answer ids come back deduplicated and in option order.
pub fn parse_answer(
    raw_text: &str,
    entry: &DataEntry,
) -> Result<(Vec<String>, ParseMode), ParseError> {
    let (items, mode) = match serde_json::from_str::<Vec<String>>(raw_text.trim()) {
        Ok(items) => (items, ParseMode::Strict),
        Err(_) => (
            first_embedded_string_array(raw_text).ok_or(ParseError::NoJsonArray)?,
            ParseMode::Lenient,
        ),
    };
    if items.is_empty() {
        return Err(ParseError::EmptyAnswer);
    }
    let mut selected = alloc::vec![false; entry.options.len()];
    for item in items {
        let idx = entry
            .option_index(&item)
            .ok_or(ParseError::UnknownOptionId(item))?;
        selected[idx] = true;
    }
    let ids = entry
        .options
        .iter()
        .zip(selected)
        .filter(|(_, s)| *s)
        .map(|(o, _)| o.option_id.clone())
        .collect();
    Ok((ids, mode))
}

/// The first `[`-opened JSON value in `text` that is a complete array of
/// strings.
fn first_embedded_string_array(text: &str) -> Option<Vec<String>> {
    text.match_indices('[').find_map(|(i, _)| {
        let mut de = serde_json::Deserializer::from_str(&text[i..]);
        Vec::<String>::deserialize(&mut de).ok()
    })
}
