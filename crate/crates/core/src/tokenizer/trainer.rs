//! Pair-merge vocabulary trainer shared by all three families.
//!
//! Words start as single characters in their position-marked form. The most
//! frequent adjacent pair (weighted by word count) is merged repeatedly; ties
//! go to the lexicographically smallest `(left, right)` pair. The learned
//! ranking is the alphabet (sorted) followed by merge results in merge order.
//! Unigram-style vocabularies also get add-one smoothed log-frequency scores
//! taken from the final segmentation of the training words.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};

use super::{Family, Position, Surface, VocabMeta, Vocabulary};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub meta: VocabMeta,
    /// Requested vocabulary size. Training stops early when every word has
    /// become a single token.
    pub target_size: usize,
}

impl TrainerConfig {
    pub fn new(family: Family, target_size: usize) -> Self {
        TrainerConfig {
            meta: VocabMeta::new(family),
            target_size,
        }
    }
}

#[derive(Debug, PartialEq, Eq)]
struct Candidate {
    count: u64,
    left: String,
    right: String,
    pair: (u32, u32),
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.count
            .cmp(&other.count)
            .then_with(|| other.left.cmp(&self.left))
            .then_with(|| other.right.cmp(&self.right))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Symbols {
    strings: Vec<String>,
    ids: FxHashMap<String, u32>,
}

impl Symbols {
    fn intern(&mut self, s: String) -> u32 {
        if let Some(&id) = self.ids.get(&s) {
            return id;
        }
        let id = self.strings.len() as u32;
        self.ids.insert(s.clone(), id);
        self.strings.push(s);
        id
    }
}

fn pairs_of(word: &[u32]) -> impl Iterator<Item = (u32, u32)> + '_ {
    word.windows(2).map(|w| (w[0], w[1]))
}

/// Learn a ranked vocabulary of at most `cfg.target_size` tokens from a word
/// frequency table.
pub fn train_subword_vocab(
    word_freqs: &BTreeMap<String, u64>,
    cfg: &TrainerConfig,
) -> Result<Vocabulary> {
    let surface: &Surface = &cfg.meta.surface;
    let mut symbols = Symbols {
        strings: Vec::new(),
        ids: FxHashMap::default(),
    };

    let alphabet: BTreeSet<String> = word_freqs
        .keys()
        .flat_map(|w| {
            w.chars()
                .enumerate()
                .map(|(i, c)| surface.render(c.encode_utf8(&mut [0; 4]), Position::at(i)))
        })
        .collect();
    if cfg.target_size < alphabet.len() {
        return Err(Error::TargetBelowAlphabet {
            requested: cfg.target_size,
            minimum: alphabet.len(),
        });
    }
    let mut vocab: Vec<u32> = alphabet.into_iter().map(|s| symbols.intern(s)).collect();
    let mut in_vocab: FxHashSet<u32> = vocab.iter().copied().collect();

    let mut words: Vec<(Vec<u32>, u64)> = Vec::with_capacity(word_freqs.len());
    for (w, &count) in word_freqs {
        if count == 0 || w.is_empty() {
            continue;
        }
        let syms = w
            .chars()
            .enumerate()
            .map(|(i, c)| {
                let s = surface.render(c.encode_utf8(&mut [0; 4]), Position::at(i));
                symbols.ids[&s]
            })
            .collect();
        words.push((syms, count));
    }

    let mut counts: FxHashMap<(u32, u32), u64> = FxHashMap::default();
    let mut locations: FxHashMap<(u32, u32), FxHashSet<usize>> = FxHashMap::default();
    for (idx, (w, c)) in words.iter().enumerate() {
        for p in pairs_of(w) {
            *counts.entry(p).or_default() += c;
            locations.entry(p).or_default().insert(idx);
        }
    }
    let mut heap: BinaryHeap<Candidate> = counts
        .iter()
        .map(|(&pair, &count)| Candidate {
            count,
            left: symbols.strings[pair.0 as usize].clone(),
            right: symbols.strings[pair.1 as usize].clone(),
            pair,
        })
        .collect();

    let mut merges: Vec<(String, String)> = Vec::new();
    while vocab.len() < cfg.target_size {
        let Some(top) = heap.pop() else { break };
        let current = counts.get(&top.pair).copied().unwrap_or(0);
        if current != top.count {
            if current > 0 {
                heap.push(Candidate { count: current, ..top });
            }
            continue;
        }
        if current == 0 {
            break;
        }

        let (l, r) = top.pair;
        let merged_str = format!("{}{}", top.left, surface.strip(&top.right));
        let merged = symbols.intern(merged_str);
        merges.push((top.left.clone(), top.right.clone()));
        if in_vocab.insert(merged) {
            vocab.push(merged);
        }

        let mut delta: FxHashMap<(u32, u32), i64> = FxHashMap::default();
        let mut affected: Vec<usize> = locations
            .remove(&top.pair)
            .map(|s| s.into_iter().collect())
            .unwrap_or_default();
        affected.sort_unstable();
        for idx in affected {
            let (word, c) = &mut words[idx];
            if !pairs_of(word).any(|p| p == (l, r)) {
                continue;
            }
            let c = *c as i64;
            for p in pairs_of(word) {
                *delta.entry(p).or_default() -= c;
            }
            let mut next = Vec::with_capacity(word.len());
            let mut k = 0;
            while k < word.len() {
                if k + 1 < word.len() && word[k] == l && word[k + 1] == r {
                    next.push(merged);
                    k += 2;
                } else {
                    next.push(word[k]);
                    k += 1;
                }
            }
            *word = next;
            for p in pairs_of(word) {
                *delta.entry(p).or_default() += c;
                locations.entry(p).or_default().insert(idx);
            }
        }
        let mut changed: Vec<((u32, u32), i64)> = delta.into_iter().filter(|&(_, d)| d != 0).collect();
        changed.sort_unstable();
        for (pair, d) in changed {
            let entry = counts.entry(pair).or_default();
            *entry = (*entry as i64 + d) as u64;
            if *entry > 0 && pair != top.pair {
                heap.push(Candidate {
                    count: *entry,
                    left: symbols.strings[pair.0 as usize].clone(),
                    right: symbols.strings[pair.1 as usize].clone(),
                    pair,
                });
            }
        }
        counts.remove(&top.pair);
    }

    let tokens: Vec<String> = vocab
        .iter()
        .map(|&id| symbols.strings[id as usize].clone())
        .collect();
    let mut out = Vocabulary::new(cfg.meta.clone(), tokens)?;
    match cfg.meta.family {
        Family::Bpe => out = out.with_merges(merges)?,
        Family::Unigram => {
            let mut freq: FxHashMap<u32, u64> = FxHashMap::default();
            let mut total = 0u64;
            for (w, c) in &words {
                for &s in w {
                    *freq.entry(s).or_default() += c;
                    total += c;
                }
            }
            let denom = (total + vocab.len() as u64) as f64;
            let scores = vocab
                .iter()
                .map(|id| {
                    let c = freq.get(id).copied().unwrap_or(0);
                    Some(((c + 1) as f64 / denom).ln())
                })
                .collect();
            out = out.with_scores(scores)?;
        }
        Family::WordPiece => {}
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::Surface;

    fn freqs(pairs: &[(&str, u64)]) -> BTreeMap<String, u64> {
        pairs.iter().map(|&(w, c)| (w.to_owned(), c)).collect()
    }

    fn bare_cfg(family: Family, size: usize) -> TrainerConfig {
        TrainerConfig {
            meta: VocabMeta::new(family).with_surface(Surface::bare()),
            target_size: size,
        }
    }

    #[test]
    fn alphabet_only_when_no_room() {
        let v = train_subword_vocab(&freqs(&[("ab", 5)]), &bare_cfg(Family::Bpe, 2)).unwrap();
        assert_eq!(v.tokens(), ["a", "b"]);
        let wp = train_subword_vocab(&freqs(&[("ab", 5)]), &TrainerConfig::new(Family::WordPiece, 2))
            .unwrap();
        assert_eq!(wp.tokens(), ["##b", "a"]);
    }

    #[test]
    fn hand_traced_pair_frequencies() {
        // aaab x2: (a,a)=2*2, (a,b)=2; ab x1: (a,b)=1 -> merge aa (4 > 3).
        // aaab -> [aa, a, b]: (aa,a)=2, (a,b)=2; plus ab -> (a,b)=3 -> merge ab.
        let v = train_subword_vocab(&freqs(&[("aaab", 2), ("ab", 1)]), &bare_cfg(Family::Bpe, 4))
            .unwrap();
        assert_eq!(v.tokens(), ["a", "b", "aa", "ab"]);
        assert_eq!(
            v.merges(),
            [("a".to_owned(), "a".to_owned()), ("a".to_owned(), "b".to_owned())]
        );
    }

    #[test]
    fn ties_break_lexicographically() {
        // (a,b) and (c,d) both have count 1.
        let v = train_subword_vocab(&freqs(&[("ab", 1), ("cd", 1)]), &bare_cfg(Family::Bpe, 5))
            .unwrap();
        assert_eq!(v.tokens(), ["a", "b", "c", "d", "ab"]);
    }

    #[test]
    fn below_alphabet_is_an_error() {
        let err = train_subword_vocab(&freqs(&[("abc", 1)]), &bare_cfg(Family::Bpe, 2)).unwrap_err();
        assert!(matches!(err, Error::TargetBelowAlphabet { requested: 2, minimum: 3 }));
    }

    #[test]
    fn stops_when_corpus_is_exhausted() {
        let v = train_subword_vocab(&freqs(&[("abc", 3)]), &bare_cfg(Family::Bpe, 100)).unwrap();
        assert_eq!(v.tokens(), ["a", "b", "c", "ab", "abc"]);
    }

    #[test]
    fn wordpiece_merges_keep_continuation_marker() {
        let v = train_subword_vocab(
            &freqs(&[("abab", 4)]),
            &TrainerConfig::new(Family::WordPiece, 10),
        )
        .unwrap();
        // (##a,##b)=4 ties with nothing larger: a ##b ##a ##b -> pairs
        // (a,##b)=4 (##b,##a)=4 (##a,##b)=4; smallest is ("##a","##b").
        assert_eq!(v.tokens()[..4], ["##a", "##b", "a", "##ab"]);
        assert_eq!(v.tokenize_word("abab").unwrap().piece_count(), 1);
    }

    #[test]
    fn bpe_training_words_tokenize_to_trained_merges() {
        let f = freqs(&[("lower", 5), ("lowest", 2), ("newer", 6), ("wider", 3)]);
        let v = train_subword_vocab(&f, &TrainerConfig::new(Family::Bpe, 30)).unwrap();
        for w in f.keys() {
            let t = v.tokenize_word(w).unwrap();
            assert_eq!(t.pieces.concat().replace('\u{2581}', ""), *w);
        }
    }

    #[test]
    fn unigram_gets_scores() {
        let v = train_subword_vocab(&freqs(&[("abab", 4), ("ab", 1)]), &TrainerConfig::new(Family::Unigram, 6))
            .unwrap();
        assert!(v.tokens().iter().all(|t| v.score(t).is_some()));
        assert!(v.tokenize_word("abab").is_ok());
    }

    #[test]
    fn deterministic() {
        let f = freqs(&[("cardiomyopathy", 3), ("cardiology", 2), ("myopathy", 4), ("pathology", 1)]);
        let cfg = TrainerConfig::new(Family::WordPiece, 40);
        let a = train_subword_vocab(&f, &cfg).unwrap();
        let b = train_subword_vocab(&f, &cfg).unwrap();
        assert_eq!(a.tokens(), b.tokens());
    }
}
