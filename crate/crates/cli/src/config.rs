use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use vocadapt::adapt::{AdaptationConfig, AvocadoConfig};
use vocadapt::concepts::DEFAULT_THRESHOLD;
use vocadapt::corpus::{DecontamConfig, FieldMap, OovMode, Side};
use vocadapt::metrics::MetricParams;
use vocadapt::tokenizer::Family;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub side: Side,
    pub oov_mode: OovMode,
    pub reference_side: Side,
    pub top_n: usize,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        AnalyzeConfig {
            side: Side::Summary,
            oov_mode: OovMode::Distinct,
            reference_side: Side::Source,
            top_n: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub family: Family,
    pub size: usize,
    pub side: Side,
    pub lowercase: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            family: Family::WordPiece,
            size: 30_522,
            side: Side::Source,
            lowercase: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepareConfig {
    pub decontam: DecontamConfig,
    pub clean_threshold: f64,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        PrepareConfig {
            decontam: DecontamConfig::default(),
            clean_threshold: DEFAULT_THRESHOLD,
        }
    }
}

/// Everything a run can be configured with. A `--config` file is read into
/// this, then command-line flags override individual fields.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    /// Family assumed for vocabulary files without a sidecar.
    pub family: Option<Family>,
    pub fields: FieldMap,
    pub analyze: AnalyzeConfig,
    pub adapt: AdaptationConfig,
    pub avocado: AvocadoConfig,
    pub metrics: MetricParams,
    pub prepare: PrepareConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Overwrite `slot` when the flag was given.
pub fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}
