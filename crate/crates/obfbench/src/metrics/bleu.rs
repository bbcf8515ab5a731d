use std::collections::HashMap;

use crate::textkit::TokenSeq;

const MAX_ORDER: usize = 4;
const EPS: f64 = 0.1;

/// Sentence-level BLEU over token ids: the geometric mean of modified 1..4
/// gram precisions times the brevity penalty `min(1, exp(1 − |ref|/|hyp|))`.
///
/// Zero n-gram matches are smoothed to `0.1 / total` (with `total` floored
/// at 1 when the hypothesis is shorter than the order), so near-miss
/// hypotheses stay distinguishable from complete misses without `log(0)`.
/// An empty hypothesis scores 0. An empty reference (a model that
/// translated the original to nothing) scores 1 against an empty hypothesis
/// and 0 otherwise.
pub fn bleu(hyp: &TokenSeq, reference: &TokenSeq) -> f64 {
    if reference.is_empty() {
        return if hyp.is_empty() { 1.0 } else { 0.0 };
    }
    if hyp.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for order in 1..=MAX_ORDER {
        let p = modified_precision(hyp.ids(), reference.ids(), order);
        log_sum += p.ln();
    }
    let brevity = (1.0 - reference.len() as f64 / hyp.len() as f64).exp().min(1.0);
    brevity * (log_sum / MAX_ORDER as f64).exp()
}

fn ngram_counts(ids: &[u32], order: usize) -> HashMap<&[u32], usize> {
    let mut counts = HashMap::new();
    if ids.len() >= order {
        for w in ids.windows(order) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

fn modified_precision(hyp: &[u32], reference: &[u32], order: usize) -> f64 {
    let total = hyp.len().saturating_sub(order - 1);
    let ref_counts = ngram_counts(reference, order);
    let mut matches = 0usize;
    for (gram, count) in ngram_counts(hyp, order) {
        matches += count.min(ref_counts.get(gram).copied().unwrap_or(0));
    }
    if matches == 0 {
        EPS / total.max(1) as f64
    } else {
        matches as f64 / total as f64
    }
}
