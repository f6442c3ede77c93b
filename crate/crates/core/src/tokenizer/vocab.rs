use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use super::segment::{char_bounds, longest_match_ranges, unrepresentable, Tokenization};
use super::{Family, Position, Surface, SurfaceMap, TokenLookup};
use crate::text::Normalizer;
use crate::{Error, Result};

/// Family, marker conventions and case policy of a vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabMeta {
    pub family: Family,
    #[serde(flatten)]
    pub surface: Surface,
    pub lowercase: bool,
}

impl VocabMeta {
    pub fn new(family: Family) -> Self {
        VocabMeta {
            family,
            surface: Surface::for_family(family),
            lowercase: true,
        }
    }

    pub fn with_surface(mut self, surface: Surface) -> Self {
        self.surface = surface;
        self
    }

    pub fn cased(mut self) -> Self {
        self.lowercase = false;
        self
    }

    pub fn normalizer(&self) -> Normalizer {
        Normalizer {
            lowercase: self.lowercase,
        }
    }
}

/// On-disk sidecar next to `vocab.txt`.
#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    #[serde(flatten)]
    meta: VocabMeta,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    base_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scores: Option<Vec<Option<f64>>>,
}

/// An ordered, immutable set of subword tokens; a token's index is its rank.
///
/// Tokens at ranks `base_len()..` are *added* tokens. Wordpiece-style
/// vocabularies treat them like any other entry. Bpe- and unigram-style
/// vocabularies match them by longest match before the base model runs, since
/// added tokens have no merge rank or piece score of their own.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    meta: VocabMeta,
    tokens: Vec<String>,
    ranks: FxHashMap<String, u32>,
    pieces: SurfaceMap<u32>,
    added: SurfaceMap<u32>,
    base_len: usize,
    merges: Vec<(String, String)>,
    // (left id, right id) -> (merge rank, result id)
    merge_table: FxHashMap<(u32, u32), (u32, u32)>,
    scores: Vec<Option<f64>>,
    unk_score: f64,
    fallback_added: usize,
}

impl Vocabulary {
    /// Build a vocabulary whose tokens all belong to the base model.
    ///
    /// Missing single-character fallback entries are appended so that every
    /// character of every token can be segmented on its own.
    pub fn new(meta: VocabMeta, tokens: Vec<String>) -> Result<Self> {
        let n = tokens.len();
        Self::build(meta, tokens, n, Vec::new(), Vec::new())
    }

    /// Attach bpe merges, in merge order.
    pub fn with_merges(self, merges: Vec<(String, String)>) -> Result<Self> {
        let Vocabulary {
            meta,
            tokens,
            base_len,
            scores,
            ..
        } = self;
        Self::build(meta, tokens, base_len, merges, scores)
    }

    /// Attach unigram log-probabilities, aligned with ranks.
    pub fn with_scores(self, scores: Vec<Option<f64>>) -> Result<Self> {
        if scores.len() != self.tokens.len() {
            return Err(Error::InvalidVocabulary(format!(
                "{} scores for {} tokens",
                scores.len(),
                self.tokens.len()
            )));
        }
        let Vocabulary {
            meta,
            tokens,
            base_len,
            merges,
            ..
        } = self;
        Self::build(meta, tokens, base_len, merges, scores)
    }

    /// A new vocabulary with `added` appended after the existing tokens.
    pub fn extended<I, S>(&self, added: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut tokens = self.tokens.clone();
        tokens.extend(added.into_iter().map(Into::into));
        let mut scores = self.scores.clone();
        if !scores.is_empty() {
            scores.resize(tokens.len(), None);
        }
        Self::build(
            self.meta.clone(),
            tokens,
            self.base_len,
            self.merges.clone(),
            scores,
        )
    }

    fn build(
        meta: VocabMeta,
        mut tokens: Vec<String>,
        base_len: usize,
        merges: Vec<(String, String)>,
        mut scores: Vec<Option<f64>>,
    ) -> Result<Self> {
        let surface = meta.surface.clone();
        let mut ranks: FxHashMap<String, u32> = FxHashMap::default();
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() {
                return Err(Error::InvalidVocabulary(format!("empty token at rank {i}")));
            }
            if ranks.insert(t.clone(), i as u32).is_some() {
                return Err(Error::InvalidVocabulary(format!("duplicate token {t:?}")));
            }
        }

        // Single-char fallbacks for every char of every base token.
        let mut missing = BTreeSet::new();
        for t in &tokens[..base_len] {
            let (forms, bare) = surface.classify(t);
            for position in [Position::Initial, Position::Continuation] {
                if !forms.contains(position) {
                    continue;
                }
                for (k, ch) in bare.chars().enumerate() {
                    let p = if k == 0 { position } else { Position::Continuation };
                    let single = surface.render(ch.encode_utf8(&mut [0; 4]), p);
                    if !ranks.contains_key(&single) {
                        missing.insert(single);
                    }
                }
            }
        }
        let fallback_added = missing.len();
        let base_len = base_len + fallback_added;
        if fallback_added > 0 {
            let tail = tokens.split_off(base_len - fallback_added);
            tokens.extend(missing);
            tokens.extend(tail);
            if !scores.is_empty() {
                let tail = scores.split_off(base_len - fallback_added);
                scores.extend(std::iter::repeat_n(None, fallback_added));
                scores.extend(tail);
            }
            ranks.clear();
            for (i, t) in tokens.iter().enumerate() {
                ranks.insert(t.clone(), i as u32);
            }
        }

        let mut pieces = SurfaceMap::new();
        let mut added = SurfaceMap::new();
        for (i, t) in tokens.iter().enumerate() {
            let rank = i as u32;
            pieces.upsert(&surface, t, |v| *v = rank);
            if i >= base_len {
                added.upsert(&surface, t, |v| *v = rank);
            }
        }

        let mut merge_table = FxHashMap::default();
        for (m, (left, right)) in merges.iter().enumerate() {
            let lookup = |s: &str| {
                ranks.get(s).copied().ok_or_else(|| {
                    Error::InvalidVocabulary(format!("merge {m} refers to unknown token {s:?}"))
                })
            };
            let l = lookup(left)?;
            let r = lookup(right)?;
            let result = lookup(&format!("{left}{right}"))?;
            merge_table.entry((l, r)).or_insert((m as u32, result));
        }

        let unk_score = scores
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let unk_score = if unk_score.is_finite() { unk_score - 10.0 } else { -10.0 };

        Ok(Vocabulary {
            meta,
            tokens,
            ranks,
            pieces,
            added,
            base_len,
            merges,
            merge_table,
            scores,
            unk_score,
            fallback_added,
        })
    }

    pub fn meta(&self) -> &VocabMeta {
        &self.meta
    }

    pub fn family(&self) -> Family {
        self.meta.family
    }

    pub fn surface(&self) -> &Surface {
        &self.meta.surface
    }

    pub fn normalizer(&self) -> Normalizer {
        self.meta.normalizer()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn rank(&self, token: &str) -> Option<usize> {
        self.ranks.get(token).map(|&r| r as usize)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.ranks.contains_key(token)
    }

    pub fn base_len(&self) -> usize {
        self.base_len
    }

    pub fn base_tokens(&self) -> &[String] {
        &self.tokens[..self.base_len]
    }

    pub fn added_tokens(&self) -> &[String] {
        &self.tokens[self.base_len..]
    }

    /// Number of single-char entries appended at construction.
    pub fn fallback_added(&self) -> usize {
        self.fallback_added
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn score(&self, token: &str) -> Option<f64> {
        self.rank(token)
            .and_then(|r| self.scores.get(r).copied().flatten())
    }

    /// Piece lookup over every token, added ones included.
    pub fn lookup(&self) -> &SurfaceMap<u32> {
        &self.pieces
    }

    /// Segment one normalized word with this vocabulary's own algorithm.
    pub fn tokenize_word(&self, word: &str) -> Result<Tokenization> {
        if word.is_empty() {
            return Err(Error::Empty("cannot tokenize an empty word".into()));
        }
        let bounds = char_bounds(word);
        let n = bounds.len() - 1;
        let ranges: Vec<(usize, usize)> = match self.meta.family {
            Family::WordPiece => {
                longest_match_ranges(word, &bounds, 0, n, Position::Initial, &self.pieces)?
            }
            Family::Bpe | Family::Unigram => self.prematch_then_base(word, &bounds)?,
        };
        let surface = &self.meta.surface;
        let pieces = ranges
            .iter()
            .map(|&(s, e)| surface.render(&word[bounds[s]..bounds[e]], Position::at(s)))
            .collect();
        Ok(Tokenization {
            word: word.to_owned(),
            pieces,
        })
    }

    fn prematch_then_base(&self, word: &str, bounds: &[usize]) -> Result<Vec<(usize, usize)>> {
        let n = bounds.len() - 1;
        let mut out = Vec::new();
        let mut segment_start = 0;
        let mut i = 0;
        let max_added = self.added.max_chars();
        while i < n {
            let hit = if self.added.is_empty() {
                None
            } else {
                (i + 1..=n.min(i + max_added))
                    .rev()
                    .find(|&j| self.added.contains(&word[bounds[i]..bounds[j]], Position::at(i)))
            };
            match hit {
                Some(j) => {
                    self.base_segment(word, bounds, segment_start, i, &mut out)?;
                    out.push((i, j));
                    i = j;
                    segment_start = j;
                }
                None => i += 1,
            }
        }
        self.base_segment(word, bounds, segment_start, n, &mut out)?;
        Ok(out)
    }

    fn base_segment(
        &self,
        word: &str,
        bounds: &[usize],
        from: usize,
        to: usize,
        out: &mut Vec<(usize, usize)>,
    ) -> Result<()> {
        if from == to {
            return Ok(());
        }
        match self.meta.family {
            Family::Bpe => self.apply_merges(word, bounds, from, to, out),
            Family::Unigram => self.viterbi(word, bounds, from, to, out),
            Family::WordPiece => {
                out.extend(longest_match_ranges(
                    word,
                    bounds,
                    from,
                    to,
                    Position::at(from),
                    &self.pieces,
                )?);
                Ok(())
            }
        }
    }

    fn base_rank(&self, bare: &str, position: Position) -> Option<u32> {
        self.pieces
            .get(bare, position)
            .copied()
            .filter(|&r| (r as usize) < self.base_len)
    }

    fn apply_merges(
        &self,
        word: &str,
        bounds: &[usize],
        from: usize,
        to: usize,
        out: &mut Vec<(usize, usize)>,
    ) -> Result<()> {
        // (token id, start char, end char)
        let mut symbols = Vec::with_capacity(to - from);
        for i in from..to {
            let id = self
                .base_rank(&word[bounds[i]..bounds[i + 1]], Position::at(i))
                .ok_or_else(|| unrepresentable(word, i))?;
            symbols.push((id, i, i + 1));
        }
        loop {
            let best = symbols
                .windows(2)
                .filter_map(|w| self.merge_table.get(&(w[0].0, w[1].0)).map(|&(m, _)| m))
                .min();
            let Some(rank) = best else { break };
            let mut merged = Vec::with_capacity(symbols.len());
            let mut k = 0;
            while k < symbols.len() {
                if k + 1 < symbols.len() {
                    if let Some(&(m, result)) =
                        self.merge_table.get(&(symbols[k].0, symbols[k + 1].0))
                    {
                        if m == rank {
                            merged.push((result, symbols[k].1, symbols[k + 1].2));
                            k += 2;
                            continue;
                        }
                    }
                }
                merged.push(symbols[k]);
                k += 1;
            }
            symbols = merged;
        }
        out.extend(symbols.iter().map(|&(_, s, e)| (s, e)));
        Ok(())
    }

    fn viterbi(
        &self,
        word: &str,
        bounds: &[usize],
        from: usize,
        to: usize,
        out: &mut Vec<(usize, usize)>,
    ) -> Result<()> {
        let len = to - from;
        let max = self.pieces.max_chars().max(1);
        let mut best = vec![f64::NEG_INFINITY; len + 1];
        let mut back = vec![usize::MAX; len + 1];
        best[0] = 0.0;
        for i in 0..len {
            if best[i] == f64::NEG_INFINITY {
                continue;
            }
            let position = Position::at(from + i);
            for j in i + 1..=len.min(i + max) {
                let bare = &word[bounds[from + i]..bounds[from + j]];
                if let Some(rank) = self.base_rank(bare, position) {
                    let s = self
                        .scores
                        .get(rank as usize)
                        .copied()
                        .flatten()
                        .unwrap_or(self.unk_score);
                    let cand = best[i] + s;
                    if cand > best[j] {
                        best[j] = cand;
                        back[j] = i;
                    }
                }
            }
        }
        if best[len] == f64::NEG_INFINITY {
            let stuck = (0..len)
                .find(|&i| best[i] != f64::NEG_INFINITY && best[i + 1..].iter().all(|b| *b == f64::NEG_INFINITY))
                .unwrap_or(0);
            return Err(unrepresentable(word, from + stuck));
        }
        let mut ranges = Vec::new();
        let mut j = len;
        while j > 0 {
            let i = back[j];
            ranges.push((from + i, from + j));
            j = i;
        }
        ranges.reverse();
        out.extend(ranges);
        Ok(())
    }

    /// Sidecar path for a vocabulary file: `vocab.txt` -> `vocab.meta.json`.
    pub fn sidecar_path(path: &Path) -> PathBuf {
        path.with_extension("meta.json")
    }

    /// Merges path for a vocabulary file: `vocab.txt` -> `vocab.merges.txt`.
    pub fn merges_path(path: &Path) -> PathBuf {
        path.with_extension("merges.txt")
    }

    /// Write `<path>`, its JSON sidecar and, for bpe, its merges file.
    pub fn save(&self, path: &Path) -> Result<Vec<PathBuf>> {
        let mut body = String::new();
        for t in &self.tokens {
            body.push_str(t);
            body.push('\n');
        }
        write_file(path, body.as_bytes())?;
        let sidecar = Sidecar {
            meta: self.meta.clone(),
            base_size: Some(self.base_len),
            scores: if self.scores.iter().any(Option::is_some) {
                Some(self.scores.clone())
            } else {
                None
            },
        };
        let side = Self::sidecar_path(path);
        let mut json = serde_json::to_string_pretty(&sidecar)?;
        json.push('\n');
        write_file(&side, json.as_bytes())?;
        let mut written = vec![path.to_owned(), side];
        if !self.merges.is_empty() {
            let mp = Self::merges_path(path);
            let mut body = String::new();
            for (l, r) in &self.merges {
                body.push_str(l);
                body.push(' ');
                body.push_str(r);
                body.push('\n');
            }
            write_file(&mp, body.as_bytes())?;
            written.push(mp);
        }
        Ok(written)
    }

    /// Load a vocabulary file, taking family and markers from its sidecar or,
    /// when there is none, from `default_meta`.
    pub fn load(path: &Path, default_meta: Option<VocabMeta>) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut tokens = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let token = line.strip_suffix('\r').unwrap_or(line);
            if token.is_empty() {
                return Err(Error::parse(path, i + 1, "empty token"));
            }
            tokens.push(token.to_owned());
        }
        let side = Self::sidecar_path(path);
        let (meta, base_size, scores) = if side.exists() {
            let raw = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
            let sc: Sidecar = serde_json::from_str(&raw)
                .map_err(|e| Error::parse(&side, e.line(), e.to_string()))?;
            (sc.meta, sc.base_size, sc.scores)
        } else if let Some(meta) = default_meta {
            (meta, None, None)
        } else {
            return Err(Error::Config(format!(
                "{} has no sidecar {}; specify the tokenizer family",
                path.display(),
                side.display()
            )));
        };
        let total = tokens.len();
        let base_len = base_size.unwrap_or(total).min(total);
        let mut merges = Vec::new();
        let mp = Self::merges_path(path);
        if meta.family == Family::Bpe && mp.exists() {
            let raw = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
            for (i, line) in raw.lines().enumerate() {
                if line.is_empty() || line.starts_with("#version") {
                    continue;
                }
                let mut parts = line.split(' ');
                match (parts.next(), parts.next(), parts.next()) {
                    (Some(l), Some(r), None) if !l.is_empty() && !r.is_empty() => {
                        merges.push((l.to_owned(), r.to_owned()))
                    }
                    _ => return Err(Error::parse(&mp, i + 1, "expected `left right`")),
                }
            }
        }
        let scores = scores.unwrap_or_default();
        if !scores.is_empty() && scores.len() != total {
            return Err(Error::InvalidVocabulary(format!(
                "{} scores for {total} tokens in {}",
                scores.len(),
                side.display()
            )));
        }
        Self::build(meta, tokens, base_len, merges, scores)
    }
}

impl TokenLookup for Vocabulary {
    fn contains(&self, bare: &str, position: Position) -> bool {
        self.pieces.contains(bare, position)
    }

    fn max_piece_chars(&self) -> usize {
        self.pieces.max_chars()
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::detokenize;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn bare_meta(family: Family) -> VocabMeta {
        VocabMeta::new(family).with_surface(Surface::bare())
    }

    #[test]
    fn whole_word_in_vocab() {
        let v = Vocabulary::new(VocabMeta::new(Family::WordPiece), strings(&["hello"])).unwrap();
        let t = v.tokenize_word("hello").unwrap();
        assert_eq!(t.pieces, ["hello"]);
        assert_eq!(t.piece_count(), 1);
    }

    #[test]
    fn wordpiece_greedy_trace() {
        let v = Vocabulary::new(
            VocabMeta::new(Family::WordPiece),
            strings(&["a", "b", "c", "d", "e", "ab", "abc", "cde", "##d", "##e"]),
        )
        .unwrap();
        let t = v.tokenize_word("abcde").unwrap();
        assert_eq!(t.pieces, ["abc", "##d", "##e"]);
        assert_eq!(t.piece_count(), 3);
    }

    #[test]
    fn bpe_applies_merges_in_order() {
        let v = Vocabulary::new(bare_meta(Family::Bpe), strings(&["a", "b", "c", "d", "ab", "cd"]))
            .unwrap()
            .with_merges(vec![("a".into(), "b".into()), ("c".into(), "d".into())])
            .unwrap();
        assert_eq!(v.tokenize_word("abcd").unwrap().pieces, ["ab", "cd"]);
    }

    #[test]
    fn bpe_with_boundary_marker() {
        let b = "\u{2581}";
        let toks = strings(&[&format!("{b}a"), "b", "c", &format!("{b}ab"), "bc"]);
        let v = Vocabulary::new(VocabMeta::new(Family::Bpe), toks)
            .unwrap()
            .with_merges(vec![(format!("{b}a"), "b".into())])
            .unwrap();
        let t = v.tokenize_word("abc").unwrap();
        assert_eq!(t.pieces, [format!("{b}ab"), "c".into()]);
        assert_eq!(detokenize(&t.pieces, v.surface()).unwrap(), "abc");
    }

    #[test]
    fn bad_merge_is_rejected() {
        let err = Vocabulary::new(bare_meta(Family::Bpe), strings(&["a", "b"]))
            .unwrap()
            .with_merges(vec![("a".into(), "b".into())])
            .unwrap_err();
        assert!(matches!(err, Error::InvalidVocabulary(_)));
    }

    #[test]
    fn unigram_viterbi_prefers_likely_split() {
        let v = Vocabulary::new(bare_meta(Family::Unigram), strings(&["a", "b", "c", "ab", "bc"]))
            .unwrap()
            .with_scores(vec![Some(-3.0), Some(-3.0), Some(-3.0), Some(-4.0), Some(-1.0)])
            .unwrap();
        // a+bc = -4 beats ab+c = -7 and a+b+c = -9.
        assert_eq!(v.tokenize_word("abc").unwrap().pieces, ["a", "bc"]);
    }

    #[test]
    fn fallback_entries_are_completed() {
        let v = Vocabulary::new(VocabMeta::new(Family::WordPiece), strings(&["xy", "##yz"])).unwrap();
        // x, ##y, ##z are needed.
        assert_eq!(v.fallback_added(), 3);
        assert_eq!(v.len(), 5);
        assert_eq!(v.tokenize_word("xyz").unwrap().pieces, ["xy", "##z"]);
        assert!(v.tokenize_word("yx").unwrap_err().to_string().contains("'y'"));
    }

    #[test]
    fn added_tokens_prematch_for_bpe() {
        let base = Vocabulary::new(bare_meta(Family::Bpe), strings(&["c", "a", "r", "d", "i", "o"]))
            .unwrap();
        let v = base.extended(["cardio"]).unwrap();
        assert_eq!(v.base_len(), 6);
        assert_eq!(v.added_tokens(), ["cardio"]);
        assert_eq!(v.tokenize_word("cardiocard").unwrap().pieces, ["cardio", "c", "a", "r", "d"]);
    }

    #[test]
    fn duplicate_tokens_rejected() {
        assert!(Vocabulary::new(VocabMeta::new(Family::WordPiece), strings(&["a", "a"])).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let v = Vocabulary::new(bare_meta(Family::Bpe), strings(&["a", "b", "ab"]))
            .unwrap()
            .with_merges(vec![("a".into(), "b".into())])
            .unwrap()
            .extended(["ba"])
            .unwrap();
        v.save(&path).unwrap();
        let back = Vocabulary::load(&path, None).unwrap();
        assert_eq!(back.tokens(), v.tokens());
        assert_eq!(back.base_len(), 3);
        assert_eq!(back.merges(), v.merges());
        assert_eq!(back.meta(), v.meta());
        assert_eq!(fs::read_to_string(&path).unwrap(), "a\nb\nab\nba\n");
    }

    #[test]
    fn load_without_sidecar_needs_default() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        fs::write(&path, "[CLS]\na\n##b\n").unwrap();
        assert!(matches!(Vocabulary::load(&path, None), Err(Error::Config(_))));
        let v = Vocabulary::load(&path, Some(VocabMeta::new(Family::WordPiece))).unwrap();
        assert_eq!(v.tokenize_word("ab").unwrap().pieces, ["a", "##b"]);
        assert_eq!(v.rank("[CLS]"), Some(0));
    }

    #[test]
    fn load_reports_empty_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        fs::write(&path, "a\n\nb\n").unwrap();
        let err = Vocabulary::load(&path, Some(VocabMeta::new(Family::WordPiece))).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }
}
