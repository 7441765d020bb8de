//! Agreement between raters and precision/recall of model answers against
//! two human raters.
//!
//! An answer for one item is a set of option ids. For Cohen's kappa each
//! distinct set is one nominal category, so two raters agree on an item only
//! when they chose exactly the same options.
//!
//! Precision and recall count per (item, option id):
//!
//! * TP: the model gave the id and at least one rater gave it.
//! * FP: the model gave the id and neither rater gave it.
//! * FN: both raters gave the id and the model did not.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("raters {0:?} have no items in common")]
    NoCommonItems(Vec<String>),
    #[error("at least two annotation sets are required, got {0}")]
    TooFewRaters(usize),
}

/// One (document, data entry) pair.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ItemKey {
    pub doc_id: String,
    pub entry_id: String,
}

impl ItemKey {
    pub fn new(doc_id: impl Into<String>, entry_id: impl Into<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            entry_id: entry_id.into(),
        }
    }
}

/// One rater's answers over a set of items.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnnotationSet {
    pub rater_id: String,
    pub answers: BTreeMap<ItemKey, BTreeSet<String>>,
}

impl AnnotationSet {
    pub fn new(rater_id: impl Into<String>) -> Self {
        Self {
            rater_id: rater_id.into(),
            answers: BTreeMap::new(),
        }
    }

    /// Add ids to an item, creating it if needed. An empty iterator records
    /// an item with no answer.
    pub fn insert<I, S>(&mut self, key: ItemKey, ids: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.answers
            .entry(key)
            .or_default()
            .extend(ids.into_iter().map(Into::into));
    }

    pub fn with<I, S>(mut self, doc_id: &str, entry_id: &str, ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.insert(ItemKey::new(doc_id, entry_id), ids);
        self
    }

    pub fn get(&self, key: &ItemKey) -> Option<&BTreeSet<String>> {
        self.answers.get(key)
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }
}

/// Canonical category of an answer set: sorted ids joined with `|`.
pub fn category(ids: &BTreeSet<String>) -> String {
    let mut out = String::new();
    for (i, id) in ids.iter().enumerate() {
        if i > 0 {
            out.push('|');
        }
        out.push_str(id);
    }
    out
}

fn common_keys<'a>(sets: &[&'a AnnotationSet]) -> Result<Vec<&'a ItemKey>, EvalError> {
    let (first, rest) = sets.split_first().expect("at least one set");
    let keys: Vec<_> = first
        .answers
        .keys()
        .filter(|k| rest.iter().all(|s| s.answers.contains_key(*k)))
        .collect();
    if keys.is_empty() {
        return Err(EvalError::NoCommonItems(
            sets.iter().map(|s| s.rater_id.clone()).collect(),
        ));
    }
    Ok(keys)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaResult {
    pub kappa: f64,
    pub p_o: f64,
    pub p_e: f64,
    pub n_items: usize,
}

/// Cohen's kappa over the items both raters answered.
///
/// Perfect observed agreement gives 1.0. Chance agreement of 1 without
/// perfect observed agreement gives 0.0.
pub fn cohen_kappa(a: &AnnotationSet, b: &AnnotationSet) -> Result<KappaResult, EvalError> {
    let keys = common_keys(&[a, b])?;
    let n = keys.len();
    let mut agree = 0usize;
    let mut counts_a: BTreeMap<String, usize> = BTreeMap::new();
    let mut counts_b: BTreeMap<String, usize> = BTreeMap::new();
    for key in keys {
        let ca = category(&a.answers[key]);
        let cb = category(&b.answers[key]);
        if ca == cb {
            agree += 1;
        }
        *counts_a.entry(ca).or_default() += 1;
        *counts_b.entry(cb).or_default() += 1;
    }
    let nf = n as f64;
    let p_o = agree as f64 / nf;
    let p_e: f64 = counts_a
        .iter()
        .filter_map(|(c, &na)| {
            counts_b
                .get(c)
                .map(|&nb| (na as f64 / nf) * (nb as f64 / nf))
        })
        .sum();
    let kappa = if agree == n {
        1.0
    } else if p_e >= 1.0 {
        0.0
    } else {
        ((p_o - p_e) / (1.0 - p_e)).clamp(-1.0, 1.0)
    };
    Ok(KappaResult {
        kappa,
        p_o,
        p_e,
        n_items: n,
    })
}

/// Pairwise kappa for every pair of raters, in the given order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementMatrix {
    pub rater_ids: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl AgreementMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }
}

pub fn agreement_matrix(sets: &[AnnotationSet]) -> Result<AgreementMatrix, EvalError> {
    if sets.len() < 2 {
        return Err(EvalError::TooFewRaters(sets.len()));
    }
    let n = sets.len();
    let mut values = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let k = cohen_kappa(&sets[i], &sets[j])?.kappa;
            values[i][j] = k;
            values[j][i] = k;
        }
    }
    Ok(AgreementMatrix {
        rater_ids: sets.iter().map(|s| s.rater_id.clone()).collect(),
        values,
    })
}

/// Micro-averaged counts and scores. Scores are `None` when their
/// denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrResult {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

impl PrResult {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
        Self {
            tp,
            fp,
            fn_,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
        }
    }
}

/// Score `llm` against two human raters over the items all three share.
pub fn precision_recall(
    llm: &AnnotationSet,
    r1: &AnnotationSet,
    r2: &AnnotationSet,
) -> Result<PrResult, EvalError> {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for key in common_keys(&[llm, r1, r2])? {
        let (m, a, b) = (&llm.answers[key], &r1.answers[key], &r2.answers[key]);
        for id in m {
            if a.contains(id) || b.contains(id) {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        fn_ += a.intersection(b).filter(|id| !m.contains(*id)).count();
    }
    Ok(PrResult::from_counts(tp, fp, fn_))
}
