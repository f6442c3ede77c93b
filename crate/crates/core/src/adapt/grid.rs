//! The (A, K) grid search over union vocabularies.
//!
//! Every candidate token is looked up once per word position, producing a
//! small lattice of edges per distinct target word. A grid cell only changes
//! which edges are usable, so scoring a cell is a pass over the precomputed
//! lattices with no string hashing. Cells sharing the same effective
//! `(K, P)` pair have identical scores and are evaluated once.

use std::collections::BTreeMap;

use rayon::prelude::*;
use rustc_hash::FxHashSet;
use serde::Serialize;

use super::{AdaptationConfig, RankedSubwords, WordBag};
use crate::tokenizer::segment::{char_bounds, longest_match_ranges, unrepresentable};
use crate::tokenizer::{Position, Segmenter, SurfaceMap, Vocabulary};
use crate::{Error, Result};

/// Slack for floating-point noise when comparing against `min + margin`.
const SCORE_EPS: f64 = 1e-9;
const NO_RANK: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCell {
    #[serde(serialize_with = "crate::fixed::serialize")]
    pub a: f64,
    pub k: usize,
    pub v_tgt_size: usize,
    pub p: usize,
    pub candidate_vocab_size: usize,
    #[serde(serialize_with = "crate::fixed::serialize")]
    pub fragment_score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Origin {
    /// Learned from the target words and frequent enough in-domain.
    #[serde(rename = "TGT")]
    Tgt,
    /// Among the top in-domain subwords.
    #[serde(rename = "PAC")]
    Pac,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AddedToken {
    pub token: String,
    pub origin: Origin,
    /// Longest-match split of the token under the base vocabulary, or `None`
    /// when the base vocabulary cannot represent it.
    pub base_pieces: Option<Vec<String>>,
}

#[derive(Debug, Clone)]
pub struct AdaptationResult {
    pub chosen: GridCell,
    pub chosen_index: usize,
    pub min_fragment_score: f64,
    pub base_fragment_score: f64,
    pub margin: f64,
    /// Cells in A-major order.
    pub grid: Vec<GridCell>,
    pub a_values: Vec<f64>,
    pub k_values: Vec<usize>,
    pub adapted_vocab: Vocabulary,
    pub added_tokens: Vec<AddedToken>,
}

#[derive(Debug, Clone, Copy)]
struct Membership {
    plm: bool,
    tgt: bool,
    pac_rank: u32,
}

impl Default for Membership {
    fn default() -> Self {
        Membership {
            plm: false,
            tgt: false,
            pac_rank: NO_RANK,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Edge {
    end: u32,
    plm: bool,
    tgt: bool,
    pac_rank: u32,
}

impl Edge {
    #[inline]
    fn usable(&self, k: u32, p: u32) -> bool {
        self.plm || self.pac_rank < p || (self.tgt && self.pac_rank < k)
    }
}

struct WordLattice {
    count: u64,
    chars: u32,
    /// `edges[offsets[i]..offsets[i + 1]]` start at char `i`, longest first.
    offsets: Vec<u32>,
    edges: Vec<Edge>,
}

impl WordLattice {
    fn build(word: &str, count: u64, index: &SurfaceMap<Membership>) -> Self {
        let bounds = char_bounds(word);
        let n = bounds.len() - 1;
        let max = index.max_chars().max(1);
        let mut offsets = Vec::with_capacity(n + 1);
        let mut edges = Vec::new();
        for i in 0..n {
            offsets.push(edges.len() as u32);
            let position = Position::at(i);
            for j in (i + 1..=n.min(i + max)).rev() {
                if let Some(m) = index.get(&word[bounds[i]..bounds[j]], position) {
                    edges.push(Edge {
                        end: j as u32,
                        plm: m.plm,
                        tgt: m.tgt,
                        pac_rank: m.pac_rank,
                    });
                }
            }
        }
        offsets.push(edges.len() as u32);
        WordLattice {
            count,
            chars: n as u32,
            offsets,
            edges,
        }
    }

    fn from(&self, i: usize) -> &[Edge] {
        &self.edges[self.offsets[i] as usize..self.offsets[i + 1] as usize]
    }

    /// Piece count under the usable edges, or the char index where
    /// segmentation gets stuck.
    fn pieces(&self, k: u32, p: u32, segmenter: Segmenter, best: &mut Vec<u32>) -> Result<u32, usize> {
        let n = self.chars as usize;
        match segmenter {
            Segmenter::LongestMatch => {
                let mut i = 0;
                let mut count = 0;
                while i < n {
                    let e = self.from(i).iter().find(|e| e.usable(k, p)).ok_or(i)?;
                    i = e.end as usize;
                    count += 1;
                }
                Ok(count)
            }
            Segmenter::MinPieces => {
                best.clear();
                best.resize(n + 1, u32::MAX);
                best[0] = 0;
                for i in 0..n {
                    let here = best[i];
                    if here == u32::MAX {
                        continue;
                    }
                    for e in self.from(i) {
                        let j = e.end as usize;
                        if here + 1 < best[j] && e.usable(k, p) {
                            best[j] = here + 1;
                        }
                    }
                }
                if best[n] == u32::MAX {
                    let stuck = (0..n).rev().find(|&i| best[i] != u32::MAX).unwrap_or(0);
                    return Err(stuck);
                }
                Ok(best[n])
            }
        }
    }
}

/// Per-word lattices over the union of all candidate tokens.
struct CandidateIndex<'w> {
    words: Vec<&'w str>,
    lattices: Vec<WordLattice>,
    total: u64,
}

impl<'w> CandidateIndex<'w> {
    fn build(bag: &'w WordBag, index: &SurfaceMap<Membership>) -> Self {
        let lattices = bag
            .words()
            .par_iter()
            .map(|(w, c)| WordLattice::build(w, *c, index))
            .collect();
        CandidateIndex {
            words: bag.words().iter().map(|(w, _)| w.as_str()).collect(),
            lattices,
            total: bag.total(),
        }
    }

    fn score(&self, k: u32, p: u32, segmenter: Segmenter) -> Result<f64> {
        let mut best = Vec::new();
        let mut pieces = 0u64;
        for (i, lattice) in self.lattices.iter().enumerate() {
            let n = lattice
                .pieces(k, p, segmenter, &mut best)
                .map_err(|at| unrepresentable(self.words[i], at))?;
            pieces += n as u64 * lattice.count;
        }
        Ok(pieces as f64 / self.total as f64)
    }
}

/// Search the (A, K) grid for the smallest union vocabulary whose fragment
/// score on `bag` is within `cfg.margin` of the best cell.
///
/// `v_tgt_temp` and `v_pac` are ranked candidate lists; tokens already in
/// `base` are ignored. Ties in vocabulary size go to the smaller K, then the
/// smaller A.
pub fn grid_search(
    bag: &WordBag,
    v_tgt_temp: &RankedSubwords,
    v_pac: &RankedSubwords,
    base: &Vocabulary,
    cfg: &AdaptationConfig,
) -> Result<AdaptationResult> {
    cfg.validate()?;
    if bag.is_empty() {
        return Err(Error::Empty("target summaries contain no words".into()));
    }
    let surface = base.surface();
    let plm_size = base.len();

    let mut seen = FxHashSet::default();
    let pac_tokens: Vec<&str> = v_pac
        .tokens
        .iter()
        .map(String::as_str)
        .filter(|t| !base.contains(t) && seen.insert(*t))
        .collect();
    let tgt_tokens: FxHashSet<&str> = v_tgt_temp
        .tokens
        .iter()
        .map(String::as_str)
        .filter(|t| !base.contains(t))
        .collect();

    let mut index: SurfaceMap<Membership> = SurfaceMap::new();
    for t in base.tokens() {
        index.upsert(surface, t, |m| m.plm = true);
    }
    for t in &tgt_tokens {
        index.upsert(surface, t, |m| m.tgt = true);
    }
    let mut tgt_ranks = Vec::new();
    for (rank, t) in pac_tokens.iter().enumerate() {
        let rank = rank as u32;
        index.upsert(surface, t, |m| m.pac_rank = m.pac_rank.min(rank));
        if tgt_tokens.contains(t) {
            tgt_ranks.push(rank as usize);
        }
    }

    let lattices = CandidateIndex::build(bag, &index);
    let base_fragment_score = lattices.score(0, 0, cfg.segmenter)?;

    let k_values = cfg.k_values(plm_size, pac_tokens.len())?;
    let a_values = cfg.a_grid.clone();
    let below = |r: usize| tgt_ranks.partition_point(|&x| x < r);
    let mut cells = Vec::with_capacity(a_values.len() * k_values.len());
    for &a in &a_values {
        for &k in &k_values {
            let v_tgt_size = below(k);
            let p = plm_size.min((a * v_tgt_size as f64).round() as usize);
            let p_eff = p.min(pac_tokens.len());
            let added = v_tgt_size + p_eff - below(k.min(p_eff));
            cells.push((a, k, v_tgt_size, p, p_eff, plm_size + added));
        }
    }

    let keys: Vec<(usize, usize)> = {
        let mut keys: Vec<_> = cells.iter().map(|c| (c.1, c.4)).collect();
        keys.sort_unstable();
        keys.dedup();
        keys
    };
    let scores: BTreeMap<(usize, usize), f64> = keys
        .par_iter()
        .map(|&(k, p)| {
            let s = lattices.score(k.min(NO_RANK as usize) as u32, p as u32, cfg.segmenter)?;
            Ok(((k, p), s))
        })
        .collect::<Result<_>>()?;

    let grid: Vec<GridCell> = cells
        .iter()
        .map(|&(a, k, v_tgt_size, p, p_eff, size)| GridCell {
            a,
            k,
            v_tgt_size,
            p,
            candidate_vocab_size: size,
            fragment_score: scores[&(k, p_eff)],
        })
        .collect();

    let min_fragment_score = grid
        .iter()
        .map(|c| c.fragment_score)
        .fold(f64::INFINITY, f64::min);
    let limit = min_fragment_score + cfg.margin + SCORE_EPS;
    let chosen_index = (0..grid.len())
        .filter(|&i| grid[i].fragment_score <= limit)
        .min_by(|&i, &j| {
            let (x, y) = (&grid[i], &grid[j]);
            x.candidate_vocab_size
                .cmp(&y.candidate_vocab_size)
                .then(x.k.cmp(&y.k))
                .then(x.a.total_cmp(&y.a))
        })
        .expect("the minimum cell is always within the margin");
    let chosen = grid[chosen_index].clone();

    let k = chosen.k;
    let p_eff = chosen.p.min(pac_tokens.len());
    let added_tokens: Vec<AddedToken> = pac_tokens
        .iter()
        .enumerate()
        .filter_map(|(rank, t)| {
            let from_tgt = rank < k && tgt_tokens.contains(t);
            if !from_tgt && rank >= p_eff {
                return None;
            }
            Some(AddedToken {
                token: (*t).to_owned(),
                origin: if from_tgt { Origin::Tgt } else { Origin::Pac },
                base_pieces: base_pieces(t, base),
            })
        })
        .collect();
    let adapted_vocab = base.extended(added_tokens.iter().map(|t| t.token.clone()))?;

    let result = AdaptationResult {
        chosen,
        chosen_index,
        min_fragment_score,
        base_fragment_score,
        margin: cfg.margin,
        grid,
        a_values,
        k_values,
        adapted_vocab,
        added_tokens,
    };
    check_invariants(&result, bag, base, cfg.segmenter)?;
    Ok(result)
}

/// Longest-match split of `token` under `base`, starting at the position
/// its markers say it occupies.
pub(crate) fn base_pieces(token: &str, base: &Vocabulary) -> Option<Vec<String>> {
    let surface = base.surface();
    let (forms, bare) = surface.classify(token);
    let start = if forms.contains(Position::Initial) {
        Position::Initial
    } else {
        Position::Continuation
    };
    let bounds = char_bounds(bare);
    let ranges = longest_match_ranges(bare, &bounds, 0, bounds.len() - 1, start, base).ok()?;
    Some(
        ranges
            .iter()
            .map(|&(s, e)| {
                let position = if s == 0 { start } else { Position::Continuation };
                surface.render(&bare[bounds[s]..bounds[e]], position)
            })
            .collect(),
    )
}

fn check_invariants(
    r: &AdaptationResult,
    bag: &WordBag,
    base: &Vocabulary,
    segmenter: Segmenter,
) -> Result<()> {
    let limit = r.min_fragment_score + r.margin + SCORE_EPS;
    if r.chosen.fragment_score > limit {
        return Err(Error::Invariant(format!(
            "chosen score {} exceeds minimum {} plus margin {}",
            r.chosen.fragment_score, r.min_fragment_score, r.margin
        )));
    }
    if let Some(c) = r
        .grid
        .iter()
        .find(|c| c.fragment_score <= limit && c.candidate_vocab_size < r.chosen.candidate_vocab_size)
    {
        return Err(Error::Invariant(format!(
            "cell A={} K={} is within the margin and smaller than the chosen cell",
            c.a, c.k
        )));
    }
    let added = r.adapted_vocab.len() - base.len();
    if added > base.len() {
        return Err(Error::Invariant(format!(
            "{added} added tokens exceed the base vocabulary size {}",
            base.len()
        )));
    }
    if r.adapted_vocab.len() != r.chosen.candidate_vocab_size {
        return Err(Error::Invariant(format!(
            "emitted vocabulary has {} tokens, grid accounting says {}",
            r.adapted_vocab.len(),
            r.chosen.candidate_vocab_size
        )));
    }
    let rescored = super::fragment_score(bag, &r.adapted_vocab, segmenter)?;
    if (rescored - r.chosen.fragment_score).abs() > SCORE_EPS {
        return Err(Error::Invariant(format!(
            "emitted vocabulary scores {rescored}, grid says {}",
            r.chosen.fragment_score
        )));
    }
    if rescored > r.base_fragment_score + SCORE_EPS {
        let msg = format!(
            "adapted vocabulary scores {rescored}, worse than the base score {}",
            r.base_fragment_score
        );
        match segmenter {
            Segmenter::MinPieces => return Err(Error::Invariant(msg)),
            // Greedy splits are not monotone under supersets.
            Segmenter::LongestMatch => log::warn!("{msg}"),
        }
    }
    Ok(())
}
