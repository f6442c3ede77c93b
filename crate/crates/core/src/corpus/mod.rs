//! Document collections and the statistics computed over them.

mod clean;
mod stats;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::text::{words, Normalizer};
use crate::{Error, Result};

pub use clean::{
    clean_training_split, decontaminate, CleaningCounts, Criterion, DecontamConfig, RemovalRecord,
};
pub use stats::{domain_similarity, oov_stats, DomainOverlap, OovMode, OovReport};

/// Word -> occurrence count, ordered by word.
pub type WordFreq = BTreeMap<String, u64>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    /// Normalized source document text.
    pub source: String,
    /// Normalized reference summary text.
    pub summary: String,
    /// The JSONL line this document was read from, verbatim.
    pub raw: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Source,
    Summary,
}

impl std::str::FromStr for Side {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "source" => Ok(Side::Source),
            "summary" => Ok(Side::Summary),
            other => Err(format!("unknown side {other:?} (expected source or summary)")),
        }
    }
}

/// Which JSON fields hold the id, source and summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldMap {
    /// When absent from a record the id falls back to `<corpus>:<line>`.
    pub id: String,
    pub source: String,
    pub summary: String,
}

impl Default for FieldMap {
    fn default() -> Self {
        FieldMap {
            id: "id".into(),
            source: "source".into(),
            summary: "summary".into(),
        }
    }
}

#[derive(Debug)]
pub struct Corpus {
    name: String,
    normalizer: Normalizer,
    documents: Vec<Document>,
    source_freq: OnceLock<WordFreq>,
    summary_freq: OnceLock<WordFreq>,
}

impl Clone for Corpus {
    fn clone(&self) -> Self {
        Corpus {
            name: self.name.clone(),
            normalizer: self.normalizer,
            documents: self.documents.clone(),
            source_freq: OnceLock::new(),
            summary_freq: OnceLock::new(),
        }
    }
}

impl Corpus {
    /// Build a corpus from raw texts, normalizing them.
    pub fn from_documents<I>(name: impl Into<String>, normalizer: Normalizer, docs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String, String)>,
    {
        let name = name.into();
        let mut seen = HashSet::new();
        let mut documents = Vec::new();
        for (id, source, summary) in docs {
            if !seen.insert(id.clone()) {
                return Err(Error::Config(format!("duplicate document id {id:?} in {name}")));
            }
            let source = normalizer.normalize(&source);
            let summary = normalizer.normalize(&summary);
            if source.trim().is_empty() || summary.trim().is_empty() {
                return Err(Error::Config(format!("document {id:?} in {name} has an empty field")));
            }
            documents.push(Document {
                id,
                source,
                summary,
                raw: None,
            });
        }
        Ok(Self::with_documents(name, normalizer, documents))
    }

    fn with_documents(name: String, normalizer: Normalizer, documents: Vec<Document>) -> Self {
        Corpus {
            name,
            normalizer,
            documents,
            source_freq: OnceLock::new(),
            summary_freq: OnceLock::new(),
        }
    }

    /// Read a JSONL file, one document per line; blank lines are skipped.
    pub fn load(path: &Path, fields: &FieldMap, normalizer: Normalizer) -> Result<Self> {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "corpus".into());
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut seen = HashSet::new();
        let mut documents = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let value: Value = serde_json::from_str(line)
                .map_err(|e| Error::parse(path, lineno, format!("malformed JSON: {e}")))?;
            let obj = value
                .as_object()
                .ok_or_else(|| Error::parse(path, lineno, "expected a JSON object"))?;
            let field = |key: &str| -> Result<Option<String>> {
                match obj.get(key) {
                    None | Some(Value::Null) => Ok(None),
                    Some(Value::String(s)) => Ok(Some(s.clone())),
                    Some(Value::Number(n)) => Ok(Some(n.to_string())),
                    Some(_) => Err(Error::parse(
                        path,
                        lineno,
                        format!("field `{key}` must be a string"),
                    )),
                }
            };
            let required = |key: &str| -> Result<String> {
                field(key)?.ok_or_else(|| Error::MissingField {
                    path: path.to_owned(),
                    line: lineno,
                    field: key.to_owned(),
                })
            };
            let id = field(&fields.id)?.unwrap_or_else(|| format!("{name}:{lineno}"));
            let source = normalizer.normalize(&required(&fields.source)?);
            let summary = normalizer.normalize(&required(&fields.summary)?);
            for (key, value) in [(&fields.source, &source), (&fields.summary, &summary)] {
                if value.trim().is_empty() {
                    return Err(Error::parse(path, lineno, format!("field `{key}` is empty")));
                }
            }
            if !seen.insert(id.clone()) {
                return Err(Error::parse(path, lineno, format!("duplicate id {id:?}")));
            }
            documents.push(Document {
                id,
                source,
                summary,
                raw: Some(line.to_owned()),
            });
        }
        Ok(Self::with_documents(name, normalizer, documents))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn normalizer(&self) -> Normalizer {
        self.normalizer
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// A corpus holding the documents for which `keep` returns true.
    pub fn filtered(&self, mut keep: impl FnMut(&Document) -> bool) -> Corpus {
        let documents = self.documents.iter().filter(|d| keep(d)).cloned().collect();
        Self::with_documents(self.name.clone(), self.normalizer, documents)
    }

    pub fn text(doc: &Document, side: Side) -> &str {
        match side {
            Side::Source => &doc.source,
            Side::Summary => &doc.summary,
        }
    }

    /// Word frequencies of one side, built once and cached.
    pub fn word_freq(&self, side: Side) -> &WordFreq {
        let cell = match side {
            Side::Source => &self.source_freq,
            Side::Summary => &self.summary_freq,
        };
        cell.get_or_init(|| {
            let mut freq = WordFreq::new();
            for d in &self.documents {
                for w in words(Self::text(d, side)) {
                    if let Some(c) = freq.get_mut(w) {
                        *c += 1;
                    } else {
                        freq.insert(w.to_owned(), 1);
                    }
                }
            }
            freq
        })
    }

    /// Total number of words on one side.
    pub fn word_count(&self, side: Side) -> u64 {
        self.word_freq(side).values().sum()
    }

    /// JSONL with the retained documents, reusing source lines when known.
    pub fn to_jsonl(&self, fields: &FieldMap) -> String {
        let mut out = String::new();
        for d in &self.documents {
            match &d.raw {
                Some(line) => out.push_str(line),
                None => {
                    let mut obj = serde_json::Map::new();
                    obj.insert(fields.id.clone(), Value::String(d.id.clone()));
                    obj.insert(fields.source.clone(), Value::String(d.source.clone()));
                    obj.insert(fields.summary.clone(), Value::String(d.summary.clone()));
                    out.push_str(&Value::Object(obj).to_string());
                }
            }
            out.push('\n');
        }
        out
    }
}

/// `word<TAB>count` lines sorted by descending count, then word.
pub fn freq_tsv(freq: &WordFreq) -> String {
    let mut rows: Vec<(&String, &u64)> = freq.iter().collect();
    rows.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
    let mut out = String::new();
    for (w, c) in rows {
        out.push_str(w);
        out.push('\t');
        out.push_str(&c.to_string());
        out.push('\n');
    }
    out
}
