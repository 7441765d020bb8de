//! Evaluation of extraction results against human annotations, and the
//! JSON/CSV reports.

use std::fs;
use std::path::Path;

use serde::Deserialize;
use serde_json::{json, Map, Value};
use slrx_core::{
    agreement_matrix, precision_recall, AgreementMatrix, AnnotationSet, EvalError, ItemKey,
    PrResult,
};

use crate::cache::write_atomic;
use crate::config::ConfigError;
use crate::pipeline::ExtractionRecord;
use crate::run::{load_records, RunError};

pub const REPORT_FILE: &str = "report.json";
pub const KAPPA_CSV: &str = "kappa_matrix.csv";
pub const PR_CSV: &str = "precision_recall.csv";

#[derive(Deserialize)]
struct AnnotationLine {
    rater: String,
    doc_id: String,
    entry_id: String,
    answers: Vec<String>,
}

/// Read annotation JSON lines into one set per rater, in order of first
/// appearance.
pub fn load_annotations(path: &Path) -> Result<Vec<AnnotationSet>, RunError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    let mut sets: Vec<AnnotationSet> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: String| ConfigError(format!("{}:{}: {m}", path.display(), i + 1));
        let a: AnnotationLine = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        if a.answers.is_empty() {
            return Err(bad("answers must not be empty".into()).into());
        }
        let pos = match sets.iter().position(|s| s.rater_id == a.rater) {
            Some(p) => p,
            None => {
                sets.push(AnnotationSet::new(a.rater.clone()));
                sets.len() - 1
            }
        };
        sets[pos].insert(ItemKey::new(a.doc_id, a.entry_id), a.answers);
    }
    Ok(sets)
}

/// One annotation set per model, in order of first appearance. Failed
/// extractions become empty answers.
pub fn model_annotations(records: &[ExtractionRecord]) -> Vec<AnnotationSet> {
    let mut sets: Vec<AnnotationSet> = Vec::new();
    for r in records {
        let pos = match sets.iter().position(|s| s.rater_id == r.model_id) {
            Some(p) => p,
            None => {
                sets.push(AnnotationSet::new(r.model_id.clone()));
                sets.len() - 1
            }
        };
        let ids: &[String] = if r.error.is_some() {
            &[]
        } else {
            &r.answer_ids
        };
        sets[pos].insert(ItemKey::new(&r.doc_id, &r.entry_id), ids.iter().cloned());
    }
    sets
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub kappa_matrix: AgreementMatrix,
    /// Per model, in rater order.
    pub precision_recall: Vec<(String, PrResult)>,
}

/// Pairwise kappa over humans then models, and precision/recall of each
/// model against the first two human raters.
pub fn evaluate(
    humans: &[AnnotationSet],
    models: &[AnnotationSet],
) -> Result<EvaluationReport, EvalError> {
    if humans.len() < 2 {
        return Err(EvalError::TooFewRaters(humans.len()));
    }
    let all: Vec<AnnotationSet> = humans.iter().chain(models).cloned().collect();
    let kappa_matrix = agreement_matrix(&all)?;
    let precision_recall = models
        .iter()
        .map(|m| {
            Ok((
                m.rater_id.clone(),
                precision_recall(m, &humans[0], &humans[1])?,
            ))
        })
        .collect::<Result<_, EvalError>>()?;
    Ok(EvaluationReport {
        kappa_matrix,
        precision_recall,
    })
}

impl EvaluationReport {
    pub fn to_json(&self) -> Value {
        let pr: Map<String, Value> = self
            .precision_recall
            .iter()
            .map(|(m, r)| (m.clone(), serde_json::to_value(r).expect("plain struct")))
            .collect();
        json!({
            "kappa_matrix": {
                "raters": self.kappa_matrix.rater_ids,
                "values": self.kappa_matrix.values,
            },
            "precision_recall": pr,
        })
    }

    /// Square matrix with rater names on both axes; the lower triangle is
    /// left blank.
    pub fn kappa_csv(&self) -> Result<String, csv::Error> {
        let m = &self.kappa_matrix;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(std::iter::once("").chain(m.rater_ids.iter().map(String::as_str)))?;
        for (i, rater) in m.rater_ids.iter().enumerate() {
            let mut row = vec![rater.clone()];
            row.extend((0..m.rater_ids.len()).map(|j| {
                if j < i {
                    String::new()
                } else {
                    format!("{:.3}", m.get(i, j))
                }
            }));
            w.write_record(&row)?;
        }
        finish(w)
    }

    /// Precision and recall rows, one column per model. Undefined scores
    /// are blank.
    pub fn pr_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(
            std::iter::once("").chain(self.precision_recall.iter().map(|(m, _)| m.as_str())),
        )?;
        let fmt = |v: Option<f64>| v.map(|v| format!("{v:.3}")).unwrap_or_default();
        for (name, get) in [
            (
                "Precision",
                (|r: &PrResult| r.precision) as fn(&PrResult) -> Option<f64>,
            ),
            ("Recall", |r: &PrResult| r.recall),
        ] {
            let mut row = vec![name.to_string()];
            row.extend(self.precision_recall.iter().map(|(_, r)| fmt(get(r))));
            w.write_record(&row)?;
        }
        finish(w)
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, csv::Error> {
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 input"))
}

/// Evaluate a results file against an annotations file and write
/// `report.json`, `kappa_matrix.csv` and `precision_recall.csv` to
/// `out_dir`.
pub fn run_evaluate(
    results: &Path,
    annotations: &Path,
    out_dir: &Path,
) -> Result<EvaluationReport, RunError> {
    let records = load_records(results)?;
    let humans = load_annotations(annotations)?;
    let models = model_annotations(&records);
    let report = evaluate(&humans, &models).map_err(|e| RunError::Eval(e.to_string()))?;
    fs::create_dir_all(out_dir)?;
    let json = serde_json::to_vec_pretty(&report.to_json()).map_err(std::io::Error::other)?;
    write_atomic(&out_dir.join(REPORT_FILE), &json)?;
    let csv_err = |e: csv::Error| RunError::Io(std::io::Error::other(e));
    write_atomic(
        &out_dir.join(KAPPA_CSV),
        report.kappa_csv().map_err(csv_err)?.as_bytes(),
    )?;
    write_atomic(
        &out_dir.join(PR_CSV),
        report.pr_csv().map_err(csv_err)?.as_bytes(),
    )?;
    Ok(report)
}
