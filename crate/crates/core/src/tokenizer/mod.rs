//! Subword vocabularies, segmentation and training.
//!
//! Every token has a surface form made of a *bare* string plus an optional
//! marker saying where in a word it may appear. Wordpiece-style vocabularies
//! mark continuation pieces (`##ing`); bpe- and unigram-style vocabularies mark
//! word-initial pieces (`▁card`). Lookups are done on the bare string together
//! with a [`Position`], so segmenters never allocate marked strings.

pub(crate) mod segment;
mod trainer;
pub(crate) mod vocab;

use std::fmt;
use std::str::FromStr;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

pub use segment::{detokenize, longest_match_segment, min_piece_count, Segmenter, Tokenization};
pub use trainer::{train_subword_vocab, TrainerConfig};
pub use vocab::{VocabMeta, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    WordPiece,
    Bpe,
    Unigram,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::WordPiece => "wordpiece",
            Family::Bpe => "bpe",
            Family::Unigram => "unigram",
        })
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "wordpiece" | "word-piece" => Ok(Family::WordPiece),
            "bpe" => Ok(Family::Bpe),
            "unigram" | "sentencepiece" => Ok(Family::Unigram),
            other => Err(format!(
                "unknown tokenizer family {other:?} (expected wordpiece, bpe or unigram)"
            )),
        }
    }
}

/// Where a piece sits inside a word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Position {
    Initial,
    Continuation,
}

impl Position {
    pub fn at(char_index: usize) -> Position {
        if char_index == 0 {
            Position::Initial
        } else {
            Position::Continuation
        }
    }
}

/// Marker conventions of a tokenizer family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Surface {
    /// Prefix on non-initial pieces (`##` for wordpiece-style).
    pub continuation_marker: String,
    /// Prefix on word-initial pieces (`▁` for bpe/unigram-style).
    pub boundary_marker: String,
}

pub const WORDPIECE_CONTINUATION: &str = "##";
pub const WORD_BOUNDARY: &str = "\u{2581}";

impl Surface {
    pub fn for_family(family: Family) -> Surface {
        match family {
            Family::WordPiece => Surface {
                continuation_marker: WORDPIECE_CONTINUATION.to_owned(),
                boundary_marker: String::new(),
            },
            Family::Bpe | Family::Unigram => Surface {
                continuation_marker: String::new(),
                boundary_marker: WORD_BOUNDARY.to_owned(),
            },
        }
    }

    /// No markers at all: a token matches at any position.
    pub fn bare() -> Surface {
        Surface {
            continuation_marker: String::new(),
            boundary_marker: String::new(),
        }
    }

    /// Split a token into the positions it may occupy and its bare string.
    ///
    /// Special tokens (`[CLS]`, `<s>`, ...) and marker-only tokens yield no
    /// positions and never take part in segmentation.
    pub fn classify<'t>(&self, token: &'t str) -> (Forms, &'t str) {
        if is_special(token) {
            return (Forms::NONE, token);
        }
        let cont = &self.continuation_marker;
        let bound = &self.boundary_marker;
        if !cont.is_empty() {
            if let Some(rest) = token.strip_prefix(cont.as_str()) {
                return if rest.is_empty() {
                    (Forms::NONE, token)
                } else {
                    (Forms::CONTINUATION, rest)
                };
            }
        }
        if !bound.is_empty() {
            if let Some(rest) = token.strip_prefix(bound.as_str()) {
                return if rest.is_empty() {
                    (Forms::NONE, token)
                } else {
                    (Forms::INITIAL, rest)
                };
            }
        }
        if token.is_empty() {
            return (Forms::NONE, token);
        }
        let mut forms = Forms::NONE;
        if bound.is_empty() {
            forms = forms | Forms::INITIAL;
        }
        if cont.is_empty() {
            forms = forms | Forms::CONTINUATION;
        }
        (forms, token)
    }

    /// Bare string of a token, markers stripped.
    pub fn strip<'t>(&self, token: &'t str) -> &'t str {
        self.classify(token).1
    }

    pub fn render(&self, bare: &str, position: Position) -> String {
        let marker = match position {
            Position::Initial => &self.boundary_marker,
            Position::Continuation => &self.continuation_marker,
        };
        let mut s = String::with_capacity(marker.len() + bare.len());
        s.push_str(marker);
        s.push_str(bare);
        s
    }
}

/// `[CLS]`, `[unused0]`, `<s>`, `<pad>` and friends.
pub fn is_special(token: &str) -> bool {
    let b = token.as_bytes();
    b.len() >= 3
        && ((b[0] == b'[' && b[b.len() - 1] == b']') || (b[0] == b'<' && b[b.len() - 1] == b'>'))
}

/// Set of positions a token may occupy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Forms(u8);

impl Forms {
    pub const NONE: Forms = Forms(0);
    pub const INITIAL: Forms = Forms(1);
    pub const CONTINUATION: Forms = Forms(2);

    pub fn contains(self, position: Position) -> bool {
        match position {
            Position::Initial => self.0 & 1 != 0,
            Position::Continuation => self.0 & 2 != 0,
        }
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

impl std::ops::BitOr for Forms {
    type Output = Forms;
    fn bitor(self, rhs: Forms) -> Forms {
        Forms(self.0 | rhs.0)
    }
}

/// Anything a segmenter can query for piece membership.
pub trait TokenLookup {
    fn contains(&self, bare: &str, position: Position) -> bool;
    /// Upper bound on the length, in chars, of any bare piece.
    fn max_piece_chars(&self) -> usize;
}

/// Map keyed by bare piece string and position.
#[derive(Debug, Clone)]
pub struct SurfaceMap<V> {
    initial: FxHashMap<Box<str>, V>,
    continuation: FxHashMap<Box<str>, V>,
    max_chars: usize,
}

impl<V> Default for SurfaceMap<V> {
    fn default() -> Self {
        SurfaceMap {
            initial: FxHashMap::default(),
            continuation: FxHashMap::default(),
            max_chars: 0,
        }
    }
}

impl<V> SurfaceMap<V> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, bare: &str, position: Position) -> Option<&V> {
        match position {
            Position::Initial => self.initial.get(bare),
            Position::Continuation => self.continuation.get(bare),
        }
    }

    pub fn max_chars(&self) -> usize {
        self.max_chars
    }

    /// Number of (bare, position) keys.
    pub fn len(&self) -> usize {
        self.initial.len() + self.continuation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Insert or update the entry for every position `token` may occupy.
    /// Returns false when the token is not matchable (special or empty).
    pub fn upsert(&mut self, surface: &Surface, token: &str, mut update: impl FnMut(&mut V)) -> bool
    where
        V: Default,
    {
        let (forms, bare) = surface.classify(token);
        if forms.is_empty() {
            return false;
        }
        for (position, map) in [
            (Position::Initial, &mut self.initial),
            (Position::Continuation, &mut self.continuation),
        ] {
            if forms.contains(position) {
                update(map.entry(bare.into()).or_default());
            }
        }
        self.max_chars = self.max_chars.max(bare.chars().count());
        true
    }
}

impl<V> TokenLookup for SurfaceMap<V> {
    fn contains(&self, bare: &str, position: Position) -> bool {
        self.get(bare, position).is_some()
    }

    fn max_piece_chars(&self) -> usize {
        self.max_chars
    }
}

/// A plain set of tokens under some surface convention.
#[derive(Debug, Clone)]
pub struct PieceSet {
    surface: Surface,
    map: SurfaceMap<()>,
}

impl PieceSet {
    pub fn new(surface: Surface) -> Self {
        PieceSet {
            surface,
            map: SurfaceMap::new(),
        }
    }

    pub fn from_tokens<I, S>(surface: Surface, tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = PieceSet::new(surface);
        set.extend(tokens);
        set
    }

    pub fn insert(&mut self, token: &str) -> bool {
        self.map.upsert(&self.surface, token, |_| {})
    }

    pub fn extend<I, S>(&mut self, tokens: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        for t in tokens {
            self.insert(t.as_ref());
        }
    }

    pub fn surface(&self) -> &Surface {
        &self.surface
    }

    pub fn contains_token(&self, token: &str) -> bool {
        let (forms, bare) = self.surface.classify(token);
        [Position::Initial, Position::Continuation]
            .into_iter()
            .any(|p| forms.contains(p) && self.map.get(bare, p).is_some())
    }
}

impl TokenLookup for PieceSet {
    fn contains(&self, bare: &str, position: Position) -> bool {
        self.map.contains(bare, position)
    }

    fn max_piece_chars(&self) -> usize {
        self.map.max_chars()
    }
}
