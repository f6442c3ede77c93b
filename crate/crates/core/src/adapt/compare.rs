//! Equal-size comparison of two vocabularies grown from the same base.
//!
//! Tokens both vocabularies added are removed from each side, the larger
//! remainder is cut down to the size of the smaller one, and each side is
//! scored as base plus its remainder. Cutting is done by rank (keep the
//! top entries) and by seeded uniform sampling.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashSet;
use serde::Serialize;

use super::{fragment_score, WordBag};
use crate::tokenizer::{PieceSet, Segmenter, Vocabulary};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EqualizedScores {
    pub mode: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub size: usize,
    #[serde(serialize_with = "crate::fixed::serialize")]
    pub score_a: f64,
    #[serde(serialize_with = "crate::fixed::serialize")]
    pub score_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub base_size: usize,
    pub added_a: usize,
    pub added_b: usize,
    pub common: usize,
    pub unique_a: usize,
    pub unique_b: usize,
    #[serde(serialize_with = "crate::fixed::serialize")]
    pub base_score: f64,
    #[serde(serialize_with = "crate::fixed::serialize")]
    pub score_a: f64,
    #[serde(serialize_with = "crate::fixed::serialize")]
    pub score_b: f64,
    pub equalized: Vec<EqualizedScores>,
}

pub fn compare_vocabularies(
    a: &Vocabulary,
    b: &Vocabulary,
    bag: &WordBag,
    seed: u64,
    segmenter: Segmenter,
) -> Result<Comparison> {
    if a.base_tokens() != b.base_tokens() {
        return Err(Error::Config(
            "vocabularies do not share the same base vocabulary".into(),
        ));
    }
    if a.surface() != b.surface() {
        return Err(Error::Config("vocabularies use different surface conventions".into()));
    }
    let surface = a.surface().clone();
    let base = a.base_tokens();
    let score_with = |extra: &[&String]| -> Result<f64> {
        let mut set = PieceSet::from_tokens(surface.clone(), base);
        set.extend(extra.iter());
        fragment_score(bag, &set, segmenter)
    };

    let in_a: FxHashSet<&String> = a.added_tokens().iter().collect();
    let in_b: FxHashSet<&String> = b.added_tokens().iter().collect();
    let unique_a: Vec<&String> = a.added_tokens().iter().filter(|t| !in_b.contains(t)).collect();
    let unique_b: Vec<&String> = b.added_tokens().iter().filter(|t| !in_a.contains(t)).collect();
    let common = a.added_tokens().len() - unique_a.len();

    let all_a: Vec<&String> = a.added_tokens().iter().collect();
    let all_b: Vec<&String> = b.added_tokens().iter().collect();
    let size = unique_a.len().min(unique_b.len());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampled_a = sample_down(&mut rng, &unique_a, size);
    let sampled_b = sample_down(&mut rng, &unique_b, size);

    Ok(Comparison {
        base_size: base.len(),
        added_a: all_a.len(),
        added_b: all_b.len(),
        common,
        unique_a: unique_a.len(),
        unique_b: unique_b.len(),
        base_score: score_with(&[])?,
        score_a: score_with(&all_a)?,
        score_b: score_with(&all_b)?,
        equalized: vec![
            EqualizedScores {
                mode: "top-rank",
                seed: None,
                size,
                score_a: score_with(&unique_a[..size])?,
                score_b: score_with(&unique_b[..size])?,
            },
            EqualizedScores {
                mode: "sampled",
                seed: Some(seed),
                size,
                score_a: score_with(&sampled_a)?,
                score_b: score_with(&sampled_b)?,
            },
        ],
    })
}

/// `size` entries of `v` picked uniformly without replacement, kept in rank
/// order.
fn sample_down<'a>(rng: &mut ChaCha8Rng, v: &[&'a String], size: usize) -> Vec<&'a String> {
    if v.len() == size {
        return v.to_vec();
    }
    let mut idx = sample(rng, v.len(), size).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| v[i]).collect()
}
