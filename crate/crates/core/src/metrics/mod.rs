//! Summary evaluation: the Rouge family, bootstrap aggregation, concept-aware
//! Rouge and concept F1.
//!
//! Texts are tokenized with the shared word definition after lowercasing.
//! No stemming and no stopword removal. Rouge-L is computed over the whole
//! summary rather than as a union of per-sentence LCS.

mod bootstrap;
mod medical;
mod report;

use rustc_hash::FxHashMap;
use serde::Serialize;

use crate::text::{words, Normalizer};

pub use bootstrap::{bootstrap_aggregate, percentile, Aggregate};
pub use medical::{concept_f1, med_rouge};
pub use report::{evaluate, load_pairs, EvalPair, MetricParams, PairScores, ScoreReport};

/// Lowercased words of `text`.
pub fn tokens(text: &str) -> Vec<String> {
    words(&Normalizer::UNCASED.normalize(text))
        .map(str::to_owned)
        .collect()
}

/// A candidate summary and its reference, as word tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScorePair {
    pub candidate: Vec<String>,
    pub reference: Vec<String>,
}

impl ScorePair {
    pub fn new(candidate: Vec<String>, reference: Vec<String>) -> Self {
        ScorePair {
            candidate,
            reference,
        }
    }

    pub fn from_texts(candidate: &str, reference: &str) -> Self {
        Self::new(tokens(candidate), tokens(reference))
    }

    /// Scores against an empty reference are defined as zero.
    pub fn empty_reference(&self) -> bool {
        self.reference.is_empty()
    }

    /// The same pair with candidate and reference swapped.
    pub fn swapped(&self) -> Self {
        Self::new(self.reference.clone(), self.candidate.clone())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Prf {
    #[serde(serialize_with = "crate::fixed::serialize")]
    pub precision: f64,
    #[serde(serialize_with = "crate::fixed::serialize")]
    pub recall: f64,
    #[serde(serialize_with = "crate::fixed::serialize")]
    pub f1: f64,
}

impl Prf {
    pub const ZERO: Prf = Prf {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };

    pub fn new(precision: f64, recall: f64) -> Self {
        Prf {
            precision,
            recall,
            f1: f1(precision, recall),
        }
    }

    /// `matched / candidate_units` and `matched / reference_units`; a zero
    /// denominator gives zero.
    pub fn from_counts(matched: f64, candidate_units: f64, reference_units: f64) -> Self {
        let ratio = |d: f64| if d > 0.0 { matched / d } else { 0.0 };
        Prf::new(ratio(candidate_units), ratio(reference_units))
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub(crate) fn ngram_counts(tokens: &[String], n: usize) -> FxHashMap<&[String], u32> {
    let mut counts = FxHashMap::default();
    if n > 0 && tokens.len() >= n {
        for g in tokens.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

pub(crate) fn ngram_total(tokens: &[String], n: usize) -> usize {
    (tokens.len() + 1).saturating_sub(n)
}

/// Clipped n-gram overlap.
pub(crate) fn clipped_overlap(cand: &FxHashMap<&[String], u32>, refc: &FxHashMap<&[String], u32>) -> u32 {
    cand.iter()
        .map(|(g, &c)| c.min(refc.get(g).copied().unwrap_or(0)))
        .sum()
}

/// Rouge-N with clipped counts.
pub fn rouge_n(pair: &ScorePair, n: usize) -> Prf {
    assert!(n >= 1, "n-gram order must be at least 1");
    if pair.empty_reference() {
        return Prf::ZERO;
    }
    let cand = ngram_counts(&pair.candidate, n);
    let refc = ngram_counts(&pair.reference, n);
    let matched = clipped_overlap(&cand, &refc);
    Prf::from_counts(
        matched as f64,
        ngram_total(&pair.candidate, n) as f64,
        ngram_total(&pair.reference, n) as f64,
    )
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l(pair: &ScorePair) -> Prf {
    if pair.empty_reference() {
        return Prf::ZERO;
    }
    let l = lcs_len(&pair.candidate, &pair.reference) as f64;
    Prf::from_counts(l, pair.candidate.len() as f64, pair.reference.len() as f64)
}

/// Weighted LCS score, rewarding consecutive matches with `f(k) = k^w`.
pub fn wlcs<T: PartialEq>(a: &[T], b: &[T], w: f64) -> f64 {
    let f = |k: f64| k.powf(w);
    let cols = b.len() + 1;
    let mut c_prev = vec![0.0f64; cols];
    let mut c_cur = vec![0.0f64; cols];
    let mut run_prev = vec![0u32; cols];
    let mut run_cur = vec![0u32; cols];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            if x == y {
                let k = run_prev[j] as f64;
                c_cur[j + 1] = c_prev[j] + f(k + 1.0) - f(k);
                run_cur[j + 1] = run_prev[j] + 1;
            } else {
                c_cur[j + 1] = c_prev[j + 1].max(c_cur[j]);
                run_cur[j + 1] = 0;
            }
        }
        std::mem::swap(&mut c_prev, &mut c_cur);
        std::mem::swap(&mut run_prev, &mut run_cur);
    }
    c_prev[b.len()]
}

/// Rouge-W: weighted LCS normalized through the inverse weighting function.
pub fn rouge_w(pair: &ScorePair, w: f64) -> Prf {
    if pair.empty_reference() || pair.candidate.is_empty() {
        return Prf::ZERO;
    }
    let score = wlcs(&pair.candidate, &pair.reference, w);
    let inv = |x: f64| x.powf(1.0 / w);
    let norm = |len: usize| (len as f64).powf(w);
    let p = inv(score / norm(pair.candidate.len())).min(1.0);
    let r = inv(score / norm(pair.reference.len())).min(1.0);
    Prf::new(p, r)
}

fn skip_units(tokens: &[String], include_unigram: bool) -> (FxHashMap<(&str, &str), u32>, usize) {
    let mut counts = FxHashMap::default();
    for i in 0..tokens.len() {
        for j in i + 1..tokens.len() {
            *counts.entry((tokens[i].as_str(), tokens[j].as_str())).or_insert(0) += 1;
        }
    }
    let n = tokens.len();
    let mut total = n * n.saturating_sub(1) / 2;
    if include_unigram {
        total += n;
    }
    (counts, total)
}

/// Rouge-SU: skip-bigrams with unlimited gap, optionally plus unigrams.
pub fn rouge_su(pair: &ScorePair, include_unigram: bool) -> Prf {
    if pair.empty_reference() {
        return Prf::ZERO;
    }
    let (cand, cand_total) = skip_units(&pair.candidate, include_unigram);
    let (refc, ref_total) = skip_units(&pair.reference, include_unigram);
    let mut matched: u64 = cand
        .iter()
        .map(|(g, &c)| c.min(refc.get(g).copied().unwrap_or(0)) as u64)
        .sum();
    if include_unigram {
        matched += clipped_overlap(&ngram_counts(&pair.candidate, 1), &ngram_counts(&pair.reference, 1)) as u64;
    }
    Prf::from_counts(matched as f64, cand_total as f64, ref_total as f64)
}
