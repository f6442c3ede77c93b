//! Text normalization and the shared word definition.
//!
//! A word is a maximal run of Unicode letters or digits. Everything else is a
//! separator and is dropped. OOV statistics, frequency tables, fragment scores
//! and Rouge tokenization all go through [`words`].

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

/// Case and Unicode policy applied to all ingested text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Normalizer {
    pub lowercase: bool,
}

impl Normalizer {
    pub const UNCASED: Normalizer = Normalizer { lowercase: true };
    pub const CASED: Normalizer = Normalizer { lowercase: false };

    pub fn normalize(&self, text: &str) -> String {
        let nfc: String = text.nfc().collect();
        if self.lowercase {
            // Lowercasing can produce decomposed sequences for a few scripts.
            nfc.to_lowercase().nfc().collect()
        } else {
            nfc
        }
    }
}

impl Default for Normalizer {
    fn default() -> Self {
        Normalizer::UNCASED
    }
}

pub fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Split already-normalized text into words.
pub fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !is_word_char(c)).filter(|w| !w.is_empty())
}

/// Words joined by single spaces; the canonical form used for exact matching.
pub fn canonical(text: &str) -> String {
    words(text).collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn words_split_on_punctuation_and_space() {
        let w: Vec<_> = words("Myocardial-infarction, (MI) in 2020!").collect();
        assert_eq!(w, ["Myocardial", "infarction", "MI", "in", "2020"]);
    }

    #[test]
    fn uncased_lowercases_and_composes() {
        // "e" + combining acute composes to a single code point.
        let n = Normalizer::UNCASED.normalize("Cafe\u{301} ASPIRIN");
        assert_eq!(n, "caf\u{e9} aspirin");
        assert_eq!(words(&n).collect::<Vec<_>>(), ["caf\u{e9}", "aspirin"]);
    }

    #[test]
    fn cased_keeps_case() {
        assert_eq!(Normalizer::CASED.normalize("BRCA1 Gene"), "BRCA1 Gene");
    }

    #[test]
    fn canonical_collapses_separators() {
        assert_eq!(canonical("  a,  b\n\tc. "), "a b c");
        assert_eq!(canonical("!!"), "");
    }
}
