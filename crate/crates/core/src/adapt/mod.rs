//! Vocabulary adaptation: candidate subwords, the (A, K) grid search and the
//! comparison baselines.
//!
//! The pipeline picks target-task words the base vocabulary fragments badly,
//! learns subwords from them and from a large in-domain collection, then
//! searches for the smallest union vocabulary whose fragment score on the
//! target summaries is within a margin of the best one found.

mod avocado;
mod candidates;
mod compare;
mod emit;
mod grid;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::WordFreq;
use crate::tokenizer::{Segmenter, TokenLookup};
use crate::{Error, Result};

pub use avocado::{avocado_vocab, AvocadoConfig, AvocadoResult, AvocadoStep};
pub use candidates::{build_candidate_vocabs, candidate_words, RankedSubwords};
pub use compare::{compare_vocabularies, Comparison, EqualizedScores};
pub use emit::{emit_vocabulary, grid_csv};
pub use grid::{grid_search, AddedToken, AdaptationResult, GridCell, Origin};

/// The grid of K values (how many top-ranked in-domain subwords to consider).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KGrid {
    /// `start, start + step, ...` up to the smaller of the base vocabulary
    /// size and the in-domain candidate count.
    Range { start: usize, step: usize },
    /// Explicit values, each at most the base vocabulary size.
    Values(Vec<usize>),
}

impl Default for KGrid {
    fn default() -> Self {
        KGrid::Range {
            start: 5000,
            step: 5000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptationConfig {
    pub a_grid: Vec<f64>,
    pub k_grid: KGrid,
    /// Additive slack on the minimum fragment score.
    pub margin: f64,
    /// Size of the in-domain vocabulary to train; defaults to three times the
    /// base vocabulary size.
    pub v_pac_target_size: Option<usize>,
    /// Size of the target-word vocabulary to train; by default training runs
    /// until every candidate word is a single token.
    pub v_tgt_target_size: Option<usize>,
    /// Words split into more than this many pieces are candidates.
    pub split_threshold: usize,
    pub concept_threshold: f64,
    pub segmenter: Segmenter,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        AdaptationConfig {
            a_grid: (1..=40).map(|i| i as f64 * 0.25).collect(),
            k_grid: KGrid::default(),
            margin: 0.04,
            v_pac_target_size: None,
            v_tgt_target_size: None,
            split_threshold: 3,
            concept_threshold: crate::concepts::DEFAULT_THRESHOLD,
            segmenter: Segmenter::default(),
        }
    }
}

impl AdaptationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.a_grid.is_empty() {
            return Err(Error::Config("a_grid is empty".into()));
        }
        if let Some(a) = self.a_grid.iter().find(|a| !a.is_finite() || **a < 0.0) {
            return Err(Error::Config(format!("a_grid value {a} is not a non-negative number")));
        }
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return Err(Error::Config(format!("margin {} must be >= 0", self.margin)));
        }
        match &self.k_grid {
            KGrid::Range { start, step } if *start == 0 || *step == 0 => {
                Err(Error::Config("k_grid start and step must be positive".into()))
            }
            KGrid::Values(v) if v.is_empty() => Err(Error::Config("k_grid is empty".into())),
            _ => Ok(()),
        }
    }

    /// Concrete K values for the given vocabulary sizes.
    pub fn k_values(&self, plm_size: usize, pac_size: usize) -> Result<Vec<usize>> {
        let ks = match &self.k_grid {
            KGrid::Range { start, step } => {
                let limit = plm_size.min(pac_size);
                (0..)
                    .map(|i| start + i * step)
                    .take_while(|&k| k <= limit)
                    .collect::<Vec<_>>()
            }
            KGrid::Values(values) => {
                if let Some(k) = values.iter().find(|&&k| k > plm_size) {
                    return Err(Error::Config(format!(
                        "K = {k} exceeds the base vocabulary size {plm_size}"
                    )));
                }
                values.clone()
            }
        };
        if ks.is_empty() {
            return Err(Error::Config(format!(
                "K grid is empty for base size {plm_size} and {pac_size} in-domain subwords"
            )));
        }
        Ok(ks)
    }

    pub fn v_pac_size(&self, plm_size: usize) -> usize {
        self.v_pac_target_size.unwrap_or(3 * plm_size)
    }
}

/// Distinct words with their occurrence counts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WordBag {
    words: Vec<(String, u64)>,
    total: u64,
}

impl WordBag {
    pub fn from_freq(freq: &WordFreq) -> Self {
        Self::from_counts(freq.iter().map(|(w, &c)| (w.clone(), c)))
    }

    /// Counts for repeated words are summed; zero counts are dropped.
    pub fn from_counts<I: IntoIterator<Item = (String, u64)>>(counts: I) -> Self {
        let mut freq = WordFreq::new();
        for (w, c) in counts {
            if c > 0 && !w.is_empty() {
                *freq.entry(w).or_insert(0) += c;
            }
        }
        let total = freq.values().sum();
        WordBag {
            words: freq.into_iter().collect(),
            total,
        }
    }

    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::from_counts(words.into_iter().map(|w| (w.into(), 1)))
    }

    pub fn words(&self) -> &[(String, u64)] {
        &self.words
    }

    /// Total occurrences.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Mean number of pieces per word occurrence under `lookup`.
pub fn fragment_score<L>(bag: &WordBag, lookup: &L, segmenter: Segmenter) -> Result<f64>
where
    L: TokenLookup + Sync + ?Sized,
{
    if bag.is_empty() {
        return Err(Error::Empty("no words to score".into()));
    }
    let pieces: u64 = bag
        .words
        .par_iter()
        .map(|(w, c)| segmenter.count(w, lookup).map(|p| p as u64 * c))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok(pieces as f64 / bag.total as f64)
}
