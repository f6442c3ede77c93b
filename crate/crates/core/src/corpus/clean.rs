//! Near-duplicate removal against downstream data and training-split cleaning.

use rayon::prelude::*;
use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};

use super::Corpus;
use crate::concepts::ConceptDictionary;
use crate::text::words;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecontamConfig {
    /// Words per shingle.
    pub shingle: usize,
    /// Minimum shingle Jaccard similarity for removal.
    pub jaccard: f64,
}

impl Default for DecontamConfig {
    fn default() -> Self {
        DecontamConfig {
            shingle: 8,
            jaccard: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Exact,
    Jaccard,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RemovalRecord {
    pub pac_id: String,
    pub downstream: String,
    pub downstream_id: String,
    pub criterion: Criterion,
    #[serde(serialize_with = "crate::fixed::serialize")]
    pub jaccard: f64,
}

/// Distinct shingles of a word sequence. Texts shorter than one shingle
/// yield a single shingle holding all their words.
fn shingles(words: &[&str], size: usize) -> FxHashSet<String> {
    if words.is_empty() {
        return FxHashSet::default();
    }
    if words.len() < size {
        return FxHashSet::from_iter([words.join(" ")]);
    }
    words.windows(size).map(|w| w.join(" ")).collect()
}

struct DownstreamIndex<'a> {
    /// (corpus, document) pairs in downstream order.
    docs: Vec<(&'a Corpus, usize)>,
    shingle_counts: Vec<usize>,
    exact: FxHashMap<String, u32>,
    postings: FxHashMap<String, Vec<u32>>,
}

impl<'a> DownstreamIndex<'a> {
    fn build(downstream: &'a [Corpus], size: usize) -> Self {
        let mut index = DownstreamIndex {
            docs: Vec::new(),
            shingle_counts: Vec::new(),
            exact: FxHashMap::default(),
            postings: FxHashMap::default(),
        };
        for corpus in downstream {
            for (i, doc) in corpus.documents().iter().enumerate() {
                let d = index.docs.len() as u32;
                index.docs.push((corpus, i));
                let w: Vec<&str> = words(&doc.source).collect();
                index.exact.entry(w.join(" ")).or_insert(d);
                let set = shingles(&w, size);
                index.shingle_counts.push(set.len());
                for s in set {
                    index.postings.entry(s).or_default().push(d);
                }
            }
        }
        index
    }

    fn record(&self, pac_id: &str, d: u32, criterion: Criterion, jaccard: f64) -> RemovalRecord {
        let (corpus, i) = self.docs[d as usize];
        RemovalRecord {
            pac_id: pac_id.to_owned(),
            downstream: corpus.name().to_owned(),
            downstream_id: corpus.documents()[i].id.clone(),
            criterion,
            jaccard,
        }
    }
}

/// Drop PAC documents whose source text duplicates or nearly duplicates a
/// downstream source document. Returns the retained corpus and one record
/// per removed document.
pub fn decontaminate(
    pac: &Corpus,
    downstream: &[Corpus],
    cfg: &DecontamConfig,
) -> (Corpus, Vec<RemovalRecord>) {
    let index = DownstreamIndex::build(downstream, cfg.shingle.max(1));
    let verdicts: Vec<Option<RemovalRecord>> = pac
        .documents()
        .par_iter()
        .map(|doc| {
            let w: Vec<&str> = words(&doc.source).collect();
            if let Some(&d) = index.exact.get(&w.join(" ")) {
                return Some(index.record(&doc.id, d, Criterion::Exact, 1.0));
            }
            let set = shingles(&w, cfg.shingle.max(1));
            let mut shared: FxHashMap<u32, usize> = FxHashMap::default();
            for s in &set {
                if let Some(posting) = index.postings.get(s) {
                    for &d in posting {
                        *shared.entry(d).or_insert(0) += 1;
                    }
                }
            }
            let mut best: Option<(u32, f64)> = None;
            for (d, inter) in shared {
                let union = set.len() + index.shingle_counts[d as usize] - inter;
                let j = inter as f64 / union as f64;
                let better = match best {
                    None => true,
                    Some((bd, bj)) => j > bj || (j == bj && d < bd),
                };
                if better {
                    best = Some((d, j));
                }
            }
            match best {
                Some((d, j)) if j >= cfg.jaccard => {
                    Some(index.record(&doc.id, d, Criterion::Jaccard, j))
                }
                _ => None,
            }
        })
        .collect();

    let removed: FxHashSet<&str> = verdicts.iter().flatten().map(|r| r.pac_id.as_str()).collect();
    let kept = pac.filtered(|d| !removed.contains(d.id.as_str()));
    (kept, verdicts.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CleaningCounts {
    /// Summary and source share no concept.
    pub no_shared_concept: usize,
    /// Summary has more words than its source.
    pub summary_longer: usize,
}

impl CleaningCounts {
    pub fn total(&self) -> usize {
        self.no_shared_concept + self.summary_longer
    }
}

/// Remove training pairs whose summary shares no concept with its source,
/// then pairs whose summary is longer than the source.
pub fn clean_training_split(
    dataset: &Corpus,
    dict: &ConceptDictionary,
    threshold: f64,
) -> (Corpus, CleaningCounts) {
    #[derive(Clone, Copy, PartialEq)]
    enum Verdict {
        Keep,
        NoSharedConcept,
        SummaryLonger,
    }
    let verdicts: Vec<Verdict> = dataset
        .documents()
        .par_iter()
        .map(|doc| {
            let rs = dict.extract_concepts(&doc.summary, threshold);
            let sd = dict.extract_concepts(&doc.source, threshold);
            if rs.is_disjoint(&sd) {
                Verdict::NoSharedConcept
            } else if words(&doc.summary).count() > words(&doc.source).count() {
                Verdict::SummaryLonger
            } else {
                Verdict::Keep
            }
        })
        .collect();
    let mut counts = CleaningCounts::default();
    for v in &verdicts {
        match v {
            Verdict::NoSharedConcept => counts.no_shared_concept += 1,
            Verdict::SummaryLonger => counts.summary_longer += 1,
            Verdict::Keep => {}
        }
    }
    let mut it = verdicts.iter();
    let kept = dataset.filtered(|_| it.next() == Some(&Verdict::Keep));
    (kept, counts)
}
