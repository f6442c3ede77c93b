use std::collections::BTreeSet;

use rustc_hash::FxHashMap;

use super::{clipped_overlap, ngram_counts, ngram_total, Prf, ScorePair};
use crate::concepts::ConceptDictionary;

/// Concept ids of the spans matched inside one n-gram.
fn ngram_concepts(gram: &[String], dict: &ConceptDictionary, threshold: f64) -> BTreeSet<String> {
    dict.match_words(gram, threshold, gram.len())
        .into_iter()
        .flat_map(|m| m.concept_ids)
        .collect()
}

/// Leftover occurrences of each n-gram after clipped surface matching, in
/// text order.
fn unmatched<'t>(
    tokens: &'t [String],
    n: usize,
    mut budget: FxHashMap<&'t [String], u32>,
) -> Vec<&'t [String]> {
    let mut out = Vec::new();
    if tokens.len() < n {
        return out;
    }
    for g in tokens.windows(n) {
        match budget.get_mut(g) {
            Some(b) if *b > 0 => *b -= 1,
            _ => out.push(g),
        }
    }
    out
}

/// Rouge-N where candidate n-grams without a surface match still count when
/// they carry a concept the reference has.
///
/// After clipped surface matching, each leftover candidate n-gram is paired
/// with the first leftover reference n-gram that shares an unused concept.
/// That reference n-gram and the shared concept are then used up, so neither
/// can justify a second match.
pub fn med_rouge(pair: &ScorePair, dict: &ConceptDictionary, n: usize, threshold: f64) -> Prf {
    assert!(n >= 1, "n-gram order must be at least 1");
    if pair.empty_reference() {
        return Prf::ZERO;
    }
    let cand = ngram_counts(&pair.candidate, n);
    let refc = ngram_counts(&pair.reference, n);
    let surface = clipped_overlap(&cand, &refc);

    // The surface-matched share of each n-gram is its clipped count.
    let shared: FxHashMap<&[String], u32> = cand
        .iter()
        .filter_map(|(g, &c)| refc.get(g).map(|&r| (*g, c.min(r))))
        .collect();
    let cand_left = unmatched(&pair.candidate, n, shared.clone());
    let ref_left = unmatched(&pair.reference, n, shared);

    let mut ref_sets: Vec<Option<BTreeSet<String>>> = ref_left
        .iter()
        .map(|g| {
            let c = ngram_concepts(g, dict, threshold);
            (!c.is_empty()).then_some(c)
        })
        .collect();
    let mut used_concepts: BTreeSet<String> = BTreeSet::new();
    let mut flagged = 0u32;
    for g in &cand_left {
        let mine = ngram_concepts(g, dict, threshold);
        if mine.is_empty() {
            continue;
        }
        let hit = ref_sets.iter().position(|r| {
            r.as_ref().is_some_and(|r| {
                r.iter().any(|c| mine.contains(c) && !used_concepts.contains(c))
            })
        });
        if let Some(i) = hit {
            let r = ref_sets[i].take().expect("position found an entry");
            let concept = r
                .iter()
                .find(|c| mine.contains(*c) && !used_concepts.contains(*c))
                .expect("position checked the intersection")
                .clone();
            used_concepts.insert(concept);
            flagged += 1;
        }
    }

    Prf::from_counts(
        (surface + flagged) as f64,
        ngram_total(&pair.candidate, n) as f64,
        ngram_total(&pair.reference, n) as f64,
    )
}

/// Set F1 over the concepts found in each text. Two texts without concepts
/// agree perfectly; one empty side scores zero.
pub fn concept_f1(candidate: &str, reference: &str, dict: &ConceptDictionary, threshold: f64) -> Prf {
    let c = dict.extract_concepts(candidate, threshold);
    let r = dict.extract_concepts(reference, threshold);
    match (c.is_empty(), r.is_empty()) {
        (true, true) => Prf::new(1.0, 1.0),
        (true, false) | (false, true) => Prf::ZERO,
        (false, false) => {
            let shared = c.intersection(&r).count() as f64;
            Prf::from_counts(shared, c.len() as f64, r.len() as f64)
        }
    }
}
