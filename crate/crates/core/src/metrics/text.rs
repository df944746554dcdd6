use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

/// Levenshtein distance with unit costs over any sequence.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Character-level Levenshtein divided by the longer length; 0 when both are empty.
pub fn edit_distance_norm(pred: &str, reference: &str) -> f64 {
    let p: Vec<char> = pred.chars().collect();
    let r: Vec<char> = reference.chars().collect();
    let longest = p.len().max(r.len());
    if longest == 0 {
        return 0.0;
    }
    levenshtein(&p, &r) as f64 / longest as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn counts<T: Eq + Hash>(items: impl IntoIterator<Item = T>) -> HashMap<T, usize> {
    let mut m = HashMap::new();
    for it in items {
        *m.entry(it).or_insert(0) += 1;
    }
    m
}

/// Multiset overlap of whitespace tokens.
///
/// Two empty texts score 1; if only one side is empty everything is 0.
pub fn token_prf(pred: &str, reference: &str) -> Prf {
    let p: Vec<&str> = pred.split_whitespace().collect();
    let r: Vec<&str> = reference.split_whitespace().collect();
    match (p.is_empty(), r.is_empty()) {
        (true, true) => {
            return Prf {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0,
            }
        }
        (true, false) | (false, true) => {
            return Prf {
                precision: 0.0,
                recall: 0.0,
                f1: 0.0,
            }
        }
        _ => {}
    }
    let rc = counts(r.iter().copied());
    let overlap: usize = counts(p.iter().copied())
        .iter()
        .map(|(tok, n)| (*n).min(rc.get(tok).copied().unwrap_or(0)))
        .sum();
    let precision = overlap as f64 / p.len() as f64;
    let recall = overlap as f64 / r.len() as f64;
    let f1 = if overlap == 0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Prf {
        precision,
        recall,
        f1,
    }
}

/// Sentence BLEU-4 over whitespace tokens with uniform weights and the
/// brevity penalty.
///
/// Orders 2..4 use add-one smoothing, `(matches + 1) / (max(total, 1) + 1)`;
/// unigram precision is unsmoothed, so no unigram overlap gives 0. Two empty
/// texts score 1.
pub fn bleu(pred: &str, reference: &str) -> f64 {
    let p: Vec<&str> = pred.split_whitespace().collect();
    let r: Vec<&str> = reference.split_whitespace().collect();
    if p.is_empty() || r.is_empty() {
        return if p.is_empty() && r.is_empty() { 1.0 } else { 0.0 };
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let pc = counts(p.windows(n));
        let rc = counts(r.windows(n));
        let matches: usize = pc
            .iter()
            .map(|(g, c)| (*c).min(rc.get(g).copied().unwrap_or(0)))
            .sum();
        let total = p.len().saturating_sub(n - 1);
        let precision = if n == 1 {
            matches as f64 / total as f64
        } else {
            (matches + 1) as f64 / (total.max(1) + 1) as f64
        };
        if precision == 0.0 {
            return 0.0;
        }
        log_sum += precision.ln() / 4.0;
    }
    let (c, rl) = (p.len() as f64, r.len() as f64);
    let bp = if c > rl { 1.0 } else { (1.0 - rl / c).exp() };
    (bp * log_sum.exp()).clamp(0.0, 1.0)
}
