//! ROUGE-N, corpus BLEU up to bigrams, and the averaged report.
//!
//! All functions are generic over the token type so the same code scores
//! detokenized strings at evaluation time and extended ids inside the learner.

use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram matches and the candidate / reference n-gram totals.
fn clipped_matches<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> (usize, usize, usize) {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let matched = cand
        .iter()
        .map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0)))
        .sum();
    let total = |len: usize| (len + 1).saturating_sub(n);
    (matched, total(candidate.len()), total(reference.len()))
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn rouge_n<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> RougeScore {
    assert!(n >= 1, "rouge_n requires n >= 1");
    let (matched, cand_total, ref_total) = clipped_matches(candidate, reference, n);
    let precision = ratio(matched, cand_total);
    let recall = ratio(matched, ref_total);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    RougeScore { precision, recall, f1 }
}

/// ROUGE-2 F1, the reward of the policy-gradient presets.
pub fn reward_rouge2<T: Eq + Hash>(candidate: &[T], reference: &[T]) -> f64 {
    rouge_n(candidate, reference, 2).f1
}

/// Corpus-level BLEU with uniform weights over unigram and bigram precision.
pub fn bleu2<T: Eq + Hash, C: AsRef<[T]>, R: AsRef<[T]>>(candidates: &[C], references: &[R]) -> Result<f64> {
    if candidates.len() != references.len() {
        return Err(Error::contract(format!(
            "bleu2: {} candidates but {} references",
            candidates.len(),
            references.len()
        )));
    }
    let mut matched = [0usize; 2];
    let mut totals = [0usize; 2];
    let (mut cand_len, mut ref_len) = (0usize, 0usize);
    for (c, r) in candidates.iter().zip(references) {
        let (c, r) = (c.as_ref(), r.as_ref());
        cand_len += c.len();
        ref_len += r.len();
        for n in 1..=2 {
            let (m, ct, _) = clipped_matches(c, r, n);
            matched[n - 1] += m;
            totals[n - 1] += ct;
        }
    }
    if matched.contains(&0) {
        return Ok(0.0);
    }
    let log_precision: f64 = (0..2).map(|i| 0.5 * (matched[i] as f64 / totals[i] as f64).ln()).sum();
    let brevity = if cand_len < ref_len {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    } else {
        1.0
    };
    Ok(brevity * log_precision.exp())
}

/// Add-one smoothed sentence BLEU-2. For diagnostics only; the report uses
/// [`bleu2`].
pub fn sentence_bleu2_smoothed<T: Eq + Hash>(candidate: &[T], reference: &[T]) -> f64 {
    if candidate.is_empty() {
        return 0.0;
    }
    let log_precision: f64 = (1..=2)
        .map(|n| {
            let (m, ct, _) = clipped_matches(candidate, reference, n);
            0.5 * ((m as f64 + 1.0) / (ct as f64 + 1.0)).ln()
        })
        .sum();
    let brevity = if candidate.len() < reference.len() {
        (1.0 - reference.len() as f64 / candidate.len() as f64).exp()
    } else {
        1.0
    };
    brevity * log_precision.exp()
}

/// Scores scaled to percentages, as printed in results tables.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    pub rouge1: f64,
    pub rouge2: f64,
    pub bleu2: f64,
    pub avg: f64,
}

impl MetricReport {
    pub fn new(rouge1: f64, rouge2: f64, bleu2: f64) -> Self {
        MetricReport {
            rouge1,
            rouge2,
            bleu2,
            avg: (rouge1 + rouge2 + bleu2) / 3.0,
        }
    }

    pub const CSV_HEADER: &'static str = "rouge1,rouge2,bleu2,avg";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.2},{:.2},{:.2},{:.2}",
            self.rouge1, self.rouge2, self.bleu2, self.avg
        )
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "ROUGE-1 {:.2}  ROUGE-2 {:.2}  BLEU {:.2}  Avg {:.2}",
            self.rouge1, self.rouge2, self.bleu2, self.avg
        )
    }
}

/// Mean sentence ROUGE-1/2 F1 and corpus BLEU-2, all ×100.
pub fn evaluate_corpus<T: Eq + Hash, C: AsRef<[T]>, R: AsRef<[T]>>(
    candidates: &[C],
    references: &[R],
) -> Result<MetricReport> {
    if candidates.is_empty() {
        return Err(Error::contract("evaluate_corpus: empty corpus"));
    }
    if candidates.len() != references.len() {
        return Err(Error::contract(format!(
            "evaluate_corpus: {} candidates but {} references",
            candidates.len(),
            references.len()
        )));
    }
    let n = candidates.len() as f64;
    let (mut r1, mut r2) = (0.0, 0.0);
    for (c, r) in candidates.iter().zip(references) {
        r1 += rouge_n(c.as_ref(), r.as_ref(), 1).f1;
        r2 += rouge_n(c.as_ref(), r.as_ref(), 2).f1;
    }
    let b = bleu2(candidates, references)?;
    Ok(MetricReport::new(100.0 * r1 / n, 100.0 * r2 / n, 100.0 * b))
}
