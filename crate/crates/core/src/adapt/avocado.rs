//! Threshold-driven vocabulary growth: add ranked subwords in batches until
//! the fragment score on the target summaries drops to the threshold.

use serde::{Deserialize, Serialize};

use super::{fragment_score, RankedSubwords, WordBag};
use crate::tokenizer::{PieceSet, Segmenter, Vocabulary};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AvocadoConfig {
    pub batch_size: usize,
    pub threshold: f64,
    pub segmenter: Segmenter,
}

impl Default for AvocadoConfig {
    fn default() -> Self {
        AvocadoConfig {
            batch_size: 100,
            threshold: 3.0,
            segmenter: Segmenter::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AvocadoStep {
    pub batches: usize,
    pub added: usize,
    #[serde(serialize_with = "crate::fixed::serialize")]
    pub fragment_score: f64,
}

#[derive(Debug, Clone)]
pub struct AvocadoResult {
    pub vocab: Vocabulary,
    pub added: Vec<String>,
    /// Score before any addition, then after each batch.
    pub trace: Vec<AvocadoStep>,
}

pub fn avocado_vocab(
    bag: &WordBag,
    base: &Vocabulary,
    stream: &RankedSubwords,
    cfg: &AvocadoConfig,
) -> Result<AvocadoResult> {
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut set = PieceSet::from_tokens(base.surface().clone(), base.tokens());
    let candidates: Vec<&String> = stream.tokens.iter().filter(|t| !base.contains(t)).collect();

    let mut score = fragment_score(bag, &set, cfg.segmenter)?;
    let mut trace = vec![AvocadoStep {
        batches: 0,
        added: 0,
        fragment_score: score,
    }];
    let mut added: Vec<String> = Vec::new();
    for (i, batch) in candidates.chunks(cfg.batch_size).enumerate() {
        if score <= cfg.threshold {
            break;
        }
        for t in batch {
            if set.contains_token(t) {
                continue;
            }
            set.insert(t);
            added.push((*t).clone());
        }
        score = fragment_score(bag, &set, cfg.segmenter)?;
        trace.push(AvocadoStep {
            batches: i + 1,
            added: added.len(),
            fragment_score: score,
        });
    }
    let vocab = base.extended(added.iter().cloned())?;
    Ok(AvocadoResult { vocab, added, trace })
}
