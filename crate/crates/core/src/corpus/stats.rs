use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use super::{Corpus, Side, WordFreq};
use crate::text::words;
use crate::tokenizer::Vocabulary;
use crate::{Error, Result};

/// How a document's OOV fraction counts words.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OovMode {
    /// Each distinct word of a document counts once.
    #[default]
    Distinct,
    /// Every occurrence counts.
    Occurrence,
}

impl std::str::FromStr for OovMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "distinct" => Ok(OovMode::Distinct),
            "occurrence" => Ok(OovMode::Occurrence),
            other => Err(format!("unknown OOV mode {other:?} (expected distinct or occurrence)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OovReport {
    pub side: Side,
    pub mode: OovMode,
    /// Fraction of words split into more than one piece, per analyzed document.
    pub per_doc_oov_fraction: Vec<f64>,
    pub median_oov_pct: f64,
    /// Piece count -> number of analyzed words with that count.
    pub split_histogram: BTreeMap<usize, u64>,
    /// Distinct words split into four or more pieces, most fragmented first.
    pub words_split_ge4: Vec<(String, usize)>,
    /// Documents without any word on the analyzed side.
    pub skipped_documents: usize,
}

/// Exact median; the mean of the two middle values for even lengths.
pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn oov_stats(corpus: &Corpus, vocab: &Vocabulary, side: Side, mode: OovMode) -> Result<OovReport> {
    if corpus.is_empty() {
        return Err(Error::Empty(format!("corpus {} has no documents", corpus.name())));
    }
    let distinct: Vec<&String> = corpus.word_freq(side).keys().collect();
    let counts: FxHashMap<&str, usize> = distinct
        .par_iter()
        .map(|w| Ok((w.as_str(), vocab.tokenize_word(w)?.piece_count())))
        .collect::<Result<_>>()?;

    let per_doc: Vec<Option<(f64, Vec<usize>)>> = corpus
        .documents()
        .par_iter()
        .map(|doc| {
            let text = Corpus::text(doc, side);
            let analyzed: Vec<&str> = match mode {
                OovMode::Occurrence => words(text).collect(),
                OovMode::Distinct => {
                    let mut seen = HashSet::new();
                    words(text).filter(|w| seen.insert(*w)).collect()
                }
            };
            if analyzed.is_empty() {
                return None;
            }
            let pieces: Vec<usize> = analyzed.iter().map(|w| counts[w]).collect();
            let oov = pieces.iter().filter(|&&p| p > 1).count();
            Some((oov as f64 / pieces.len() as f64, pieces))
        })
        .collect();

    let mut fractions = Vec::new();
    let mut histogram = BTreeMap::new();
    let mut skipped = 0;
    for entry in per_doc {
        match entry {
            None => skipped += 1,
            Some((fraction, pieces)) => {
                fractions.push(fraction);
                for p in pieces {
                    *histogram.entry(p).or_insert(0u64) += 1;
                }
            }
        }
    }
    if fractions.is_empty() {
        return Err(Error::Empty(format!("corpus {} has no words", corpus.name())));
    }

    let mut split_ge4: Vec<(String, usize)> = counts
        .iter()
        .filter(|(_, &p)| p >= 4)
        .map(|(w, &p)| (w.to_string(), p))
        .collect();
    split_ge4.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    Ok(OovReport {
        side,
        mode,
        median_oov_pct: median(&fractions) * 100.0,
        per_doc_oov_fraction: fractions,
        split_histogram: histogram,
        words_split_ge4: split_ge4,
        skipped_documents: skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainOverlap {
    #[serde(serialize_with = "crate::fixed::serialize")]
    pub similarity: f64,
    pub shared: usize,
    pub requested_n: usize,
    /// Denominator actually used; smaller than `requested_n` when neither
    /// table holds that many words.
    pub effective_n: usize,
}

fn top_words(freq: &WordFreq, n: usize) -> HashSet<&str> {
    let mut rows: Vec<(&String, &u64)> = freq.iter().collect();
    rows.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
    rows.into_iter().take(n).map(|(w, _)| w.as_str()).collect()
}

/// Share of the `top_n` most frequent words the two tables have in common.
pub fn domain_similarity(a: &WordFreq, b: &WordFreq, top_n: usize) -> Result<DomainOverlap> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("frequency table is empty".into()));
    }
    if top_n == 0 {
        return Err(Error::Config("top_n must be positive".into()));
    }
    let ta = top_words(a, top_n);
    let tb = top_words(b, top_n);
    let shared = ta.intersection(&tb).count();
    let effective_n = top_n.min(ta.len().max(tb.len()));
    Ok(DomainOverlap {
        similarity: shared as f64 / effective_n as f64,
        shared,
        requested_n: top_n,
        effective_n,
    })
}
