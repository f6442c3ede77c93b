use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use rustc_hash::FxHashMap;

use super::AdaptationConfig;
use crate::concepts::ConceptDictionary;
use crate::corpus::{Corpus, Side, WordFreq};
use crate::tokenizer::vocab::write_file;
use crate::tokenizer::{train_subword_vocab, Surface, TrainerConfig, Vocabulary};
use crate::Result;

/// Subwords in rank order (most important first), without the fallback
/// entries a full [`Vocabulary`] would add.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedSubwords {
    pub surface: Surface,
    pub tokens: Vec<String>,
}

impl RankedSubwords {
    pub fn new(surface: Surface, tokens: Vec<String>) -> Self {
        RankedSubwords { surface, tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// One token per line, in rank order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for t in &self.tokens {
            let _ = writeln!(out, "{t}");
        }
        write_file(path, out.as_bytes())
    }
}

/// Summary words the base vocabulary fragments into more than
/// `cfg.split_threshold` pieces, plus medical words it splits at all.
/// Counts are occurrences in the target summaries.
pub fn candidate_words(
    target: &Corpus,
    base: &Vocabulary,
    dict: &ConceptDictionary,
    cfg: &AdaptationConfig,
) -> Result<WordFreq> {
    let freq = target.word_freq(Side::Summary);
    let entries: Vec<(&String, &u64)> = freq.iter().collect();
    let keep: Vec<bool> = entries
        .par_iter()
        .map(|(w, _)| {
            let pieces = base.tokenize_word(w)?.piece_count();
            Ok(pieces > cfg.split_threshold
                || (pieces > 1 && dict.is_medical_word(w, cfg.concept_threshold)))
        })
        .collect::<Result<_>>()?;
    Ok(entries
        .into_iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|((w, c), _)| (w.clone(), *c))
        .collect())
}

/// Train the target-word and in-domain subword lists, both with the base
/// vocabulary's tokens removed.
///
/// The target list keeps the trainer's learning order. The in-domain list is
/// re-ranked by how often each subword occurs when the in-domain source texts
/// are segmented with the trained vocabulary (ties by token).
pub fn build_candidate_vocabs(
    candidates: &WordFreq,
    pac: &Corpus,
    base: &Vocabulary,
    cfg: &AdaptationConfig,
) -> Result<(RankedSubwords, RankedSubwords)> {
    let meta = base.meta().clone();
    let surface = base.surface().clone();

    let v_tgt_temp = if candidates.is_empty() {
        RankedSubwords::new(surface.clone(), Vec::new())
    } else {
        let trainer = TrainerConfig {
            meta: meta.clone(),
            target_size: cfg.v_tgt_target_size.unwrap_or(usize::MAX),
        };
        let trained = train_subword_vocab(candidates, &trainer)?;
        let tokens = trained
            .tokens()
            .iter()
            .filter(|t| !base.contains(t))
            .cloned()
            .collect();
        RankedSubwords::new(surface.clone(), tokens)
    };

    let pac_freq = pac.word_freq(Side::Source);
    let trainer = TrainerConfig {
        meta,
        target_size: cfg.v_pac_size(base.len()),
    };
    let trained = train_subword_vocab(pac_freq, &trainer)?;
    let segmented: Vec<(Vec<String>, u64)> = pac_freq
        .par_iter()
        .map(|(w, &c)| Ok((trained.tokenize_word(w)?.pieces, c)))
        .collect::<Result<_>>()?;
    let mut usage: FxHashMap<&str, u64> = FxHashMap::default();
    for (pieces, c) in &segmented {
        for p in pieces {
            *usage.entry(p.as_str()).or_insert(0) += c;
        }
    }
    let mut ranked: Vec<(&String, u64)> = trained
        .tokens()
        .iter()
        .filter(|t| !base.contains(t))
        .map(|t| (t, usage.get(t.as_str()).copied().unwrap_or(0)))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let v_pac = RankedSubwords::new(surface, ranked.into_iter().map(|(t, _)| t.clone()).collect());
    Ok((v_tgt_temp, v_pac))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::Normalizer;
    use crate::tokenizer::{Family, VocabMeta};

    fn base(tokens: &[&str]) -> Vocabulary {
        Vocabulary::new(
            VocabMeta::new(Family::WordPiece),
            tokens.iter().map(|t| t.to_string()).collect(),
        )
        .unwrap()
    }

    fn target(summaries: &[&str]) -> Corpus {
        Corpus::from_documents(
            "tgt",
            Normalizer::UNCASED,
            summaries
                .iter()
                .enumerate()
                .map(|(i, s)| (i.to_string(), "source".to_string(), s.to_string())),
        )
        .unwrap()
    }

    #[test]
    fn candidate_rules() {
        let dict = ConceptDictionary::from_entries([("fever", "C1"), ("pain", "C2")]).unwrap();
        let b = base(&["pain", "fe", "##ver", "##v", "##e", "##r", "a", "b", "##b", "##a"]);
        // ababa: a ##b ##a ##b ##a = 5 pieces (non-medical, > 3)
        // fever: fe ##ver = 2 pieces, medical
        // pain: 1 piece, medical but not split
        // abab: 4 pieces, included; ab: 2 pieces, not medical
        let t = target(&["ababa fever pain", "abab ab fever"]);
        let cfg = AdaptationConfig::default();
        let c = candidate_words(&t, &b, &dict, &cfg).unwrap();
        let words: Vec<_> = c.iter().map(|(w, c)| (w.as_str(), *c)).collect();
        assert_eq!(words, [("abab", 1), ("ababa", 1), ("fever", 2)]);
    }

    #[test]
    fn empty_candidates_give_empty_target_list() {
        let b = base(&["a", "##a", "b", "##b"]);
        let pac = Corpus::from_documents(
            "pac",
            Normalizer::UNCASED,
            [("1".to_string(), "ab ab ba".to_string(), "x".to_string())],
        )
        .unwrap();
        let cfg = AdaptationConfig {
            v_pac_target_size: Some(10),
            ..Default::default()
        };
        let (tgt, _) = build_candidate_vocabs(&WordFreq::new(), &pac, &b, &cfg).unwrap();
        assert!(tgt.is_empty());
    }

    #[test]
    fn candidates_already_in_base_are_subtracted() {
        let b = base(&["ab", "a", "##b"]);
        let pac = Corpus::from_documents(
            "pac",
            Normalizer::UNCASED,
            [("1".to_string(), "ab".to_string(), "ab".to_string())],
        )
        .unwrap();
        let cands = WordFreq::from([("ab".to_string(), 3)]);
        let cfg = AdaptationConfig {
            v_pac_target_size: Some(10),
            ..Default::default()
        };
        let (tgt, pac_list) = build_candidate_vocabs(&cands, &pac, &b, &cfg).unwrap();
        assert!(tgt.is_empty());
        assert!(pac_list.is_empty());
    }

    #[test]
    fn in_domain_list_ranked_by_segmented_usage() {
        // Trainer on {aab: 3, ab: 2} with wordpiece markers:
        // alphabet [##a, ##b, a]; pair counts (a,##a)=3, (##a,##b)=3,
        // (a,##b)=2 -> merge (##a,##b) first (smaller left), giving ##ab;
        // then (a,##ab)=3 beats (a,##b)=2 -> aab. Target size 5 stops there.
        // Segmenting: aab x3 -> [aab], ab x2 -> [a, ##b].
        let b = base(&["[UNK]"]);
        let pac = Corpus::from_documents(
            "pac",
            Normalizer::UNCASED,
            [
                ("1".to_string(), "aab aab ab".to_string(), "x".to_string()),
                ("2".to_string(), "aab ab".to_string(), "x".to_string()),
            ],
        )
        .unwrap();
        let cfg = AdaptationConfig {
            v_pac_target_size: Some(5),
            ..Default::default()
        };
        let (_, list) = build_candidate_vocabs(&WordFreq::new(), &pac, &b, &cfg).unwrap();
        // usage: aab 3, a 2, ##b 2, ##a 0, ##ab 0
        assert_eq!(list.tokens, ["aab", "##b", "a", "##a", "##ab"]);
    }
}
