//! Approximate concept matching against a term dictionary.
//!
//! Terms and text windows are compared by cosine similarity over binary
//! character 3-gram sets. Candidate terms are retrieved through an inverted
//! gram index, so only terms sharing at least one gram are ever scored.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rustc_hash::{FxHashMap, FxHashSet};
use serde::Serialize;

use crate::text::{canonical, words, Normalizer};
use crate::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.95;
pub const DEFAULT_MAX_WINDOW: usize = 5;
const GRAM: usize = 3;

/// Distinct character n-grams of `s`, without padding.
fn gram_set(s: &str, n: usize) -> FxHashSet<&str> {
    let bounds: Vec<usize> = s.char_indices().map(|(i, _)| i).chain([s.len()]).collect();
    let chars = bounds.len() - 1;
    let mut set = FxHashSet::default();
    if chars >= n {
        for i in 0..=chars - n {
            set.insert(&s[bounds[i]..bounds[i + n]]);
        }
    }
    set
}

/// Cosine similarity of the binary character n-gram vectors of `a` and `b`.
///
/// Strings shorter than `n` characters have no grams; they score 1.0 against
/// an identical string and 0.0 otherwise.
pub fn char_ngram_cosine(a: &str, b: &str, n: usize) -> f64 {
    assert!(n > 0, "gram length must be positive");
    if a.chars().count() < n || b.chars().count() < n {
        return if a == b { 1.0 } else { 0.0 };
    }
    let ga = gram_set(a, n);
    let gb = gram_set(b, n);
    let shared = ga.intersection(&gb).count();
    shared as f64 / ((ga.len() * gb.len()) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConceptMatch {
    /// Word span `[start, end)` within the matched text.
    pub start: usize,
    pub end: usize,
    pub matched_term: String,
    /// Every concept the matched term maps to, sorted.
    pub concept_ids: Vec<String>,
    pub similarity: f64,
}

impl ConceptMatch {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

#[derive(Debug, Clone)]
pub struct ConceptDictionary {
    terms: Vec<String>,
    ids: Vec<Vec<String>>,
    gram_counts: Vec<u32>,
    by_term: FxHashMap<String, u32>,
    index: FxHashMap<String, Vec<u32>>,
    normalizer: Normalizer,
}

impl ConceptDictionary {
    /// Build from `(term, concept id)` pairs. A term listed with several ids
    /// maps to all of them.
    pub fn from_entries<I, T, C>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (T, C)>,
        T: AsRef<str>,
        C: Into<String>,
    {
        let normalizer = Normalizer::UNCASED;
        let mut dict = ConceptDictionary {
            terms: Vec::new(),
            ids: Vec::new(),
            gram_counts: Vec::new(),
            by_term: FxHashMap::default(),
            index: FxHashMap::default(),
            normalizer,
        };
        for (term, id) in entries {
            let term = canonical(&normalizer.normalize(term.as_ref()));
            let id = id.into();
            if term.is_empty() || id.is_empty() {
                return Err(Error::Config("dictionary entries need a term and an id".into()));
            }
            dict.insert(term, id);
        }
        if dict.terms.is_empty() {
            return Err(Error::Empty("concept dictionary has no entries".into()));
        }
        for ids in &mut dict.ids {
            ids.sort();
            ids.dedup();
        }
        Ok(dict)
    }

    fn insert(&mut self, term: String, id: String) {
        if let Some(&t) = self.by_term.get(&term) {
            self.ids[t as usize].push(id);
            return;
        }
        let t = self.terms.len() as u32;
        let grams = gram_set(&term, GRAM);
        self.gram_counts.push(grams.len() as u32);
        for g in grams {
            self.index.entry(g.to_owned()).or_default().push(t);
        }
        self.by_term.insert(term.clone(), t);
        self.terms.push(term);
        self.ids.push(vec![id]);
    }

    /// Read a `term<TAB>concept_id` file. Blank lines are ignored.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let malformed = || Error::parse(path, i + 1, "expected `term<TAB>concept_id`");
            let (term, id) = line.split_once('\t').ok_or_else(malformed)?;
            let id = id.trim();
            if id.is_empty() || id.contains('\t') || canonical(term).is_empty() {
                return Err(malformed());
            }
            entries.push((term.to_owned(), id.to_owned()));
        }
        if entries.is_empty() {
            return Err(Error::Empty(format!("{} has no entries", path.display())));
        }
        Self::from_entries(entries)
    }

    /// Number of distinct terms.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn concept_ids(&self, term: &str) -> Option<&[String]> {
        self.by_term.get(term).map(|&t| self.ids[t as usize].as_slice())
    }

    /// Most similar term to `query` (ties go to the smaller term).
    fn best_term(&self, query: &str) -> Option<(u32, f64)> {
        if query.chars().count() < GRAM {
            return self.by_term.get(query).map(|&t| (t, 1.0));
        }
        let grams = gram_set(query, GRAM);
        let mut shared: FxHashMap<u32, u32> = FxHashMap::default();
        for g in &grams {
            if let Some(posting) = self.index.get(*g) {
                for &t in posting {
                    *shared.entry(t).or_insert(0) += 1;
                }
            }
        }
        let q = grams.len() as f64;
        let mut best: Option<(u32, f64)> = None;
        for (t, s) in shared {
            let sim = s as f64 / (q * self.gram_counts[t as usize] as f64).sqrt();
            let better = match best {
                None => true,
                Some((bt, bs)) => {
                    sim > bs || (sim == bs && self.terms[t as usize] < self.terms[bt as usize])
                }
            };
            if better {
                best = Some((t, sim));
            }
        }
        best
    }

    fn make_match(&self, start: usize, end: usize, term: u32, similarity: f64) -> ConceptMatch {
        ConceptMatch {
            start,
            end,
            matched_term: self.terms[term as usize].clone(),
            concept_ids: self.ids[term as usize].clone(),
            similarity,
        }
    }

    /// Every window of 1..=`max_window` words whose best term reaches
    /// `threshold`, before overlap resolution. `tokens` must be normalized.
    pub fn candidate_matches<S: AsRef<str>>(
        &self,
        tokens: &[S],
        threshold: f64,
        max_window: usize,
    ) -> Vec<ConceptMatch> {
        let mut out = Vec::new();
        let mut window = String::new();
        for start in 0..tokens.len() {
            window.clear();
            for end in start + 1..=(start + max_window).min(tokens.len()) {
                if end > start + 1 {
                    window.push(' ');
                }
                window.push_str(tokens[end - 1].as_ref());
                if let Some((t, sim)) = self.best_term(&window) {
                    if sim > 0.0 && sim >= threshold {
                        out.push(self.make_match(start, end, t, sim));
                    }
                }
            }
        }
        out
    }

    /// Non-overlapping matches over already-normalized words, in text order.
    /// Overlaps go to the longer span, then the higher similarity, then the
    /// earlier start.
    pub fn match_words<S: AsRef<str>>(
        &self,
        tokens: &[S],
        threshold: f64,
        max_window: usize,
    ) -> Vec<ConceptMatch> {
        let mut candidates = self.candidate_matches(tokens, threshold, max_window);
        candidates.sort_by(|a, b| {
            b.len()
                .cmp(&a.len())
                .then(b.similarity.total_cmp(&a.similarity))
                .then(a.start.cmp(&b.start))
        });
        let mut taken = vec![false; tokens.len()];
        let mut chosen = Vec::new();
        for m in candidates {
            if taken[m.start..m.end].iter().any(|&t| t) {
                continue;
            }
            taken[m.start..m.end].iter_mut().for_each(|t| *t = true);
            chosen.push(m);
        }
        chosen.sort_by_key(|m| m.start);
        chosen
    }

    /// Normalize `text`, split it into words and match spans.
    pub fn match_spans(&self, text: &str, threshold: f64, max_window: usize) -> Vec<ConceptMatch> {
        let normalized = self.normalizer.normalize(text);
        let tokens: Vec<&str> = words(&normalized).collect();
        self.match_words(&tokens, threshold, max_window)
    }

    /// Union of concept ids over the matched spans of `text`.
    pub fn extract_concepts(&self, text: &str, threshold: f64) -> BTreeSet<String> {
        self.match_spans(text, threshold, DEFAULT_MAX_WINDOW)
            .into_iter()
            .flat_map(|m| m.concept_ids)
            .collect()
    }

    /// True when `word` on its own matches some term.
    pub fn is_medical_word(&self, word: &str, threshold: f64) -> bool {
        let word = self.normalizer.normalize(word);
        matches!(self.best_term(&word), Some((_, sim)) if sim > 0.0 && sim >= threshold)
    }
}
