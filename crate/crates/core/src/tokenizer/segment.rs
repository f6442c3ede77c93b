use serde::{Deserialize, Serialize};

use super::{Position, Surface, TokenLookup};
use crate::{Error, Result};

/// A word and the pieces it was split into, markers included.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tokenization {
    pub word: String,
    pub pieces: Vec<String>,
}

impl Tokenization {
    pub fn piece_count(&self) -> usize {
        self.pieces.len()
    }
}

/// Byte offsets of every char boundary, including the end.
pub(crate) fn char_bounds(word: &str) -> Vec<usize> {
    word.char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(word.len()))
        .collect()
}

pub(crate) fn unrepresentable(word: &str, char_index: usize) -> Error {
    Error::Unrepresentable {
        word: word.to_owned(),
        position: char_index,
        ch: word.chars().nth(char_index).unwrap_or('\u{fffd}'),
    }
}

/// Greedy longest-prefix split of `word[bounds[from]..]`, returning the char
/// ranges of the pieces. `start` is the position of the first piece.
pub(crate) fn longest_match_ranges<L: TokenLookup + ?Sized>(
    word: &str,
    bounds: &[usize],
    from: usize,
    to: usize,
    start: Position,
    lookup: &L,
) -> Result<Vec<(usize, usize)>> {
    let max = lookup.max_piece_chars().max(1);
    let mut out = Vec::new();
    let mut i = from;
    while i < to {
        let position = if i == from { start } else { Position::Continuation };
        let hi = to.min(i + max);
        let end = (i + 1..=hi)
            .rev()
            .find(|&j| lookup.contains(&word[bounds[i]..bounds[j]], position))
            .ok_or_else(|| unrepresentable(word, i))?;
        out.push((i, end));
        i = end;
    }
    Ok(out)
}

/// Split `word` by repeatedly consuming the longest prefix present in `lookup`.
pub fn longest_match_segment<L: TokenLookup + ?Sized>(
    word: &str,
    lookup: &L,
    surface: &Surface,
) -> Result<Tokenization> {
    let bounds = char_bounds(word);
    let n = bounds.len() - 1;
    let ranges = longest_match_ranges(word, &bounds, 0, n, Position::Initial, lookup)?;
    let pieces = ranges
        .iter()
        .map(|&(s, e)| surface.render(&word[bounds[s]..bounds[e]], Position::at(s)))
        .collect();
    Ok(Tokenization {
        word: word.to_owned(),
        pieces,
    })
}

/// Fewest pieces any split of `word` over `lookup` can use.
///
/// Unlike greedy longest-match this is monotone: adding tokens can only lower
/// the count.
pub fn min_piece_count<L: TokenLookup + ?Sized>(word: &str, lookup: &L) -> Result<usize> {
    let bounds = char_bounds(word);
    let n = bounds.len() - 1;
    let max = lookup.max_piece_chars().max(1);
    let mut best = vec![usize::MAX; n + 1];
    best[0] = 0;
    for i in 0..n {
        if best[i] == usize::MAX {
            continue;
        }
        let position = Position::at(i);
        for j in i + 1..=n.min(i + max) {
            if best[i] + 1 < best[j] && lookup.contains(&word[bounds[i]..bounds[j]], position) {
                best[j] = best[i] + 1;
            }
        }
    }
    if best[n] == usize::MAX {
        // Report the first char no piece can start from.
        let stuck = (0..n)
            .find(|&i| best[i] != usize::MAX && best[i + 1..].iter().all(|&b| b == usize::MAX))
            .unwrap_or(0);
        return Err(unrepresentable(word, stuck));
    }
    Ok(best[n])
}

/// How fragment scores count pieces over a token set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Segmenter {
    /// Fewest pieces over the set; monotone under supersets.
    #[default]
    MinPieces,
    /// Greedy longest prefix, as a wordpiece tokenizer would split.
    LongestMatch,
}

impl Segmenter {
    pub fn count<L: TokenLookup + ?Sized>(self, word: &str, lookup: &L) -> Result<usize> {
        match self {
            Segmenter::MinPieces => min_piece_count(word, lookup),
            Segmenter::LongestMatch => {
                let bounds = char_bounds(word);
                let n = bounds.len() - 1;
                longest_match_ranges(word, &bounds, 0, n, Position::Initial, lookup).map(|r| r.len())
            }
        }
    }
}

impl std::str::FromStr for Segmenter {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "min-pieces" => Ok(Segmenter::MinPieces),
            "longest-match" => Ok(Segmenter::LongestMatch),
            other => Err(format!(
                "unknown segmenter {other:?} (expected min-pieces or longest-match)"
            )),
        }
    }
}

/// Strip markers and concatenate pieces back into a word.
pub fn detokenize<S: AsRef<str>>(pieces: &[S], surface: &Surface) -> Result<String> {
    if pieces.is_empty() {
        return Err(Error::Empty("no pieces to detokenize".into()));
    }
    let mut word = String::new();
    for (index, piece) in pieces.iter().enumerate() {
        let piece = piece.as_ref();
        let position = Position::at(index);
        let (forms, bare) = surface.classify(piece);
        if !forms.contains(position) {
            return Err(Error::IllegalMarker {
                index,
                piece: piece.to_owned(),
            });
        }
        word.push_str(bare);
    }
    Ok(word)
}
