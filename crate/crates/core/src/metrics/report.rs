use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::Value;

use super::{
    bootstrap_aggregate, concept_f1, med_rouge, rouge_l, rouge_n, rouge_su, rouge_w, Aggregate, Prf,
    ScorePair,
};
use crate::concepts::ConceptDictionary;
use crate::fixed::format6;
use crate::{Error, Result};

/// A generated summary and its reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalPair {
    pub id: String,
    pub candidate: String,
    pub reference: String,
}

/// Read `{id, candidate, reference}` JSONL. A missing id becomes the line
/// number.
pub fn load_pairs(path: &Path) -> Result<Vec<EvalPair>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut seen = HashSet::new();
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line)
            .map_err(|e| Error::parse(path, lineno, format!("malformed JSON: {e}")))?;
        let field = |key: &str| -> Result<Option<String>> {
            match value.get(key) {
                None | Some(Value::Null) => Ok(None),
                Some(Value::String(s)) => Ok(Some(s.clone())),
                Some(Value::Number(n)) => Ok(Some(n.to_string())),
                Some(_) => Err(Error::parse(path, lineno, format!("field `{key}` must be a string"))),
            }
        };
        let required = |key: &str| -> Result<String> {
            field(key)?.ok_or_else(|| Error::MissingField {
                path: path.to_owned(),
                line: lineno,
                field: key.to_owned(),
            })
        };
        let id = field("id")?.unwrap_or_else(|| lineno.to_string());
        if !seen.insert(id.clone()) {
            return Err(Error::parse(path, lineno, format!("duplicate id {id:?}")));
        }
        pairs.push(EvalPair {
            id,
            candidate: required("candidate")?,
            reference: required("reference")?,
        });
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricParams {
    pub n_max: usize,
    pub bootstrap_samples: usize,
    pub confidence: f64,
    pub w: f64,
    pub include_unigram_in_skip: bool,
    pub concept_threshold: f64,
    pub medrouge_n: Vec<usize>,
}

impl Default for MetricParams {
    fn default() -> Self {
        MetricParams {
            n_max: 4,
            bootstrap_samples: 1000,
            confidence: 95.0,
            w: 1.2,
            include_unigram_in_skip: true,
            concept_threshold: crate::concepts::DEFAULT_THRESHOLD,
            medrouge_n: vec![1, 2],
        }
    }
}

impl MetricParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_max == 0 {
            return Err(Error::Config("n_max must be at least 1".into()));
        }
        if self.bootstrap_samples == 0 {
            return Err(Error::Config("bootstrap_samples must be positive".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 100.0) {
            return Err(Error::Config(format!("confidence {} is not in (0, 100)", self.confidence)));
        }
        if !(self.w.is_finite() && self.w > 0.0) {
            return Err(Error::Config(format!("weight {} must be positive", self.w)));
        }
        if self.medrouge_n.contains(&0) {
            return Err(Error::Config("medrouge orders must be at least 1".into()));
        }
        if (1..self.medrouge_n.len()).any(|i| self.medrouge_n[..i].contains(&self.medrouge_n[i])) {
            return Err(Error::Config("medrouge orders must be distinct".into()));
        }
        Ok(())
    }

    /// Metric names in report order.
    pub fn metric_names(&self, with_concepts: bool) -> Vec<String> {
        let mut names: Vec<String> = (1..=self.n_max).map(|n| format!("rouge-{n}")).collect();
        names.push("rouge-l".into());
        names.push(format!("rouge-w-{}", self.w));
        names.push(if self.include_unigram_in_skip { "rouge-su*" } else { "rouge-s*" }.into());
        if with_concepts {
            names.extend(self.medrouge_n.iter().map(|n| format!("medrouge-{n}")));
            names.push("concept-f1".into());
        }
        names
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairScores {
    pub id: String,
    pub empty_reference: bool,
    /// Aligned with [`ScoreReport::metrics`].
    pub scores: Vec<Prf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricAggregate {
    pub precision: Aggregate,
    pub recall: Aggregate,
    pub f1: Aggregate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub params: MetricParams,
    pub seed: u64,
    pub metrics: Vec<String>,
    pub per_pair: Vec<PairScores>,
    pub aggregate: Vec<MetricAggregate>,
}

fn score_pair(pair: &EvalPair, dict: Option<&ConceptDictionary>, params: &MetricParams) -> PairScores {
    let sp = ScorePair::from_texts(&pair.candidate, &pair.reference);
    let mut scores: Vec<Prf> = (1..=params.n_max).map(|n| rouge_n(&sp, n)).collect();
    scores.push(rouge_l(&sp));
    scores.push(rouge_w(&sp, params.w));
    scores.push(rouge_su(&sp, params.include_unigram_in_skip));
    if let Some(dict) = dict {
        for &n in &params.medrouge_n {
            scores.push(med_rouge(&sp, dict, n, params.concept_threshold));
        }
        scores.push(concept_f1(&pair.candidate, &pair.reference, dict, params.concept_threshold));
    }
    PairScores {
        id: pair.id.clone(),
        empty_reference: sp.empty_reference(),
        scores,
    }
}

/// Score every pair, then bootstrap each metric's precision, recall and F1
/// with the same seed (and so the same resamples).
pub fn evaluate(
    pairs: &[EvalPair],
    dict: Option<&ConceptDictionary>,
    params: &MetricParams,
    seed: u64,
) -> Result<ScoreReport> {
    params.validate()?;
    if pairs.is_empty() {
        return Err(Error::Empty("no pairs to evaluate".into()));
    }
    let per_pair: Vec<PairScores> = pairs.par_iter().map(|p| score_pair(p, dict, params)).collect();
    let empty = per_pair.iter().filter(|p| p.empty_reference).count();
    if empty > 0 {
        log::warn!("{empty} pair(s) have an empty reference and score zero");
    }
    let metrics = params.metric_names(dict.is_some());
    let aggregate = (0..metrics.len())
        .map(|m| {
            let column = |f: fn(&Prf) -> f64| -> Aggregate {
                let values: Vec<f64> = per_pair.iter().map(|p| f(&p.scores[m])).collect();
                bootstrap_aggregate(&values, params.bootstrap_samples, params.confidence, seed)
            };
            MetricAggregate {
                precision: column(|p| p.precision),
                recall: column(|p| p.recall),
                f1: column(|p| p.f1),
            }
        })
        .collect();
    Ok(ScoreReport {
        params: params.clone(),
        seed,
        metrics,
        per_pair,
        aggregate,
    })
}

struct MetricsMap<'a>(&'a [String], &'a [MetricAggregate]);

impl Serialize for MetricsMap<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (name, agg) in self.0.iter().zip(self.1) {
            map.serialize_entry(name, agg)?;
        }
        map.end()
    }
}

#[derive(Serialize)]
struct ParamBlock<'a> {
    #[serde(flatten)]
    params: &'a MetricParams,
    skip_gap: &'static str,
    stemming: bool,
    stopword_removal: bool,
    rouge_l: &'static str,
    aggregate: &'static str,
}

#[derive(Serialize)]
struct AggregateFile<'a> {
    params: ParamBlock<'a>,
    seed: u64,
    pairs: usize,
    empty_references: usize,
    metrics: MetricsMap<'a>,
}

impl ScoreReport {
    /// `id,metric,precision,recall,f1,empty_reference`
    pub fn per_pair_csv(&self) -> String {
        let mut out = String::from("id,metric,precision,recall,f1,empty_reference\n");
        for p in &self.per_pair {
            let id = csv_field(&p.id);
            for (name, s) in self.metrics.iter().zip(&p.scores) {
                let _ = writeln!(
                    out,
                    "{id},{name},{},{},{},{}",
                    format6(s.precision),
                    format6(s.recall),
                    format6(s.f1),
                    p.empty_reference
                );
            }
        }
        out
    }

    pub fn aggregate_json(&self) -> Result<String> {
        let file = AggregateFile {
            params: ParamBlock {
                params: &self.params,
                skip_gap: "unlimited",
                stemming: false,
                stopword_removal: false,
                rouge_l: "whole-summary LCS, no sentence splitting",
                aggregate: "median and central interval of bootstrap resample means",
            },
            seed: self.seed,
            pairs: self.per_pair.len(),
            empty_references: self.per_pair.iter().filter(|p| p.empty_reference).count(),
            metrics: MetricsMap(&self.metrics, &self.aggregate),
        };
        let mut json = serde_json::to_string_pretty(&file)?;
        json.push('\n');
        Ok(json)
    }

    pub fn aggregate_for(&self, metric: &str) -> Option<&MetricAggregate> {
        self.metrics.iter().position(|m| m == metric).map(|i| &self.aggregate[i])
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}
