//! Straightforward reference implementations that the library is checked
//! against.

use std::collections::BTreeSet;

use rand::Rng;
use slrx_core::{AnnotationSet, Chunk, EmbeddingVector, ItemKey};

/// Sort every chunk by (score desc, index asc) and keep the first `k`.
pub fn brute_force_rank(query: &[f64], vectors: &[Vec<f64>], k: usize) -> Vec<(usize, f64)> {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut scored: Vec<(usize, f64)> = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let dot: f64 = query.iter().zip(v).map(|(a, b)| a * b).sum();
            (i, dot / (norm(query) * norm(v)))
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

pub fn random_vector<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if v.iter().any(|x| *x != 0.0) {
            return v;
        }
    }
}

pub fn dummy_chunks(n: usize) -> Vec<Chunk> {
    (0..n)
        .map(|i| Chunk {
            doc_id: "d".into(),
            chunk_index: i,
            token_start: i,
            token_end: i + 1,
            char_start: i,
            char_end: i + 1,
            text: format!("chunk {i}"),
        })
        .collect()
}

pub fn to_vectors(raw: &[Vec<f64>]) -> Vec<EmbeddingVector> {
    raw.iter()
        .map(|v| EmbeddingVector::new(v.clone()).unwrap())
        .collect()
}

pub struct KappaOracle {
    pub kappa: f64,
    pub p_o: f64,
    pub p_e: f64,
}

/// Cohen's kappa from a full category-by-category contingency table.
pub fn kappa_oracle(a: &AnnotationSet, b: &AnnotationSet) -> Option<KappaOracle> {
    let keys: Vec<&ItemKey> = a
        .answers
        .keys()
        .filter(|k| b.answers.contains_key(*k))
        .collect();
    if keys.is_empty() {
        return None;
    }
    let label = |s: &BTreeSet<String>| s.iter().cloned().collect::<Vec<_>>().join("|");
    let mut cats: Vec<String> = keys
        .iter()
        .flat_map(|k| [label(&a.answers[*k]), label(&b.answers[*k])])
        .collect();
    cats.sort();
    cats.dedup();
    let idx = |c: &str| cats.iter().position(|x| x == c).unwrap();
    let m = cats.len();
    let mut table = vec![vec![0u64; m]; m];
    for k in &keys {
        table[idx(&label(&a.answers[*k]))][idx(&label(&b.answers[*k]))] += 1;
    }
    let n = keys.len() as f64;
    let trace: u64 = (0..m).map(|i| table[i][i]).sum();
    let p_o = trace as f64 / n;
    let p_e: f64 = (0..m)
        .map(|i| {
            let row: u64 = table[i].iter().sum();
            let col: u64 = table.iter().map(|r| r[i]).sum();
            (row as f64 / n) * (col as f64 / n)
        })
        .sum();
    let kappa = if trace as f64 == n {
        1.0
    } else if p_e == 1.0 {
        0.0
    } else {
        (p_o - p_e) / (1.0 - p_e)
    };
    Some(KappaOracle { kappa, p_o, p_e })
}

/// TP/FP/FN by visiting every (item, label) pair over the label universe.
pub fn pr_oracle(
    llm: &AnnotationSet,
    r1: &AnnotationSet,
    r2: &AnnotationSet,
) -> Option<(usize, usize, usize)> {
    let items: Vec<&ItemKey> = llm
        .answers
        .keys()
        .filter(|k| r1.answers.contains_key(*k) && r2.answers.contains_key(*k))
        .collect();
    if items.is_empty() {
        return None;
    }
    let universe: BTreeSet<&String> = [llm, r1, r2]
        .iter()
        .flat_map(|s| s.answers.values().flatten())
        .collect();
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for item in items {
        for label in &universe {
            let by_model = llm.answers[item].contains(*label);
            let by_first = r1.answers[item].contains(*label);
            let by_second = r2.answers[item].contains(*label);
            match (by_model, by_first, by_second) {
                (true, true, _) | (true, _, true) => tp += 1,
                (true, false, false) => fp += 1,
                (false, true, true) => fn_ += 1,
                _ => {}
            }
        }
    }
    Some((tp, fp, fn_))
}

/// A rater over `n_items` items drawn from `n_cats` single-label categories,
/// with some items left out.
pub fn random_single_label<R: Rng>(
    rng: &mut R,
    rater: &str,
    n_items: usize,
    n_cats: usize,
) -> AnnotationSet {
    let mut s = AnnotationSet::new(rater);
    for i in 0..n_items {
        if rng.gen_bool(0.1) {
            continue;
        }
        let c = rng.gen_range(0..n_cats);
        s.insert(ItemKey::new(format!("d{i}"), "e"), [format!("C{c}")]);
    }
    s
}

/// A rater giving a random subset of `labels` per item, possibly empty.
pub fn random_multi_label<R: Rng>(
    rng: &mut R,
    rater: &str,
    n_items: usize,
    labels: &[&str],
) -> AnnotationSet {
    let mut s = AnnotationSet::new(rater);
    for i in 0..n_items {
        if rng.gen_bool(0.05) {
            continue;
        }
        let ids: Vec<&str> = labels
            .iter()
            .copied()
            .filter(|_| rng.gen_bool(0.35))
            .collect();
        s.insert(
            ItemKey::new(format!("d{}", i % 7), format!("e{}", i / 7)),
            ids,
        );
    }
    s
}

/// Windows found by walking token positions one stride at a time until the
/// end is covered.
pub fn brute_force_windows(total: usize, size: usize, overlap: usize) -> Vec<(usize, usize)> {
    let stride = size - overlap;
    let mut out = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + size).min(total);
        out.push((start, end));
        if end == total {
            return out;
        }
        start += stride;
    }
}
