use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

fn digest(path: &Path, label: String) -> Result<FileDigest> {
    let data = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let hash = Sha256::digest(&data);
    Ok(FileDigest {
        path: label,
        bytes: data.len() as u64,
        sha256: hash.iter().map(|b| format!("{b:02x}")).collect(),
    })
}

/// Tracks a run's inputs and the files it writes into the output directory.
pub struct Run {
    command: &'static str,
    out: PathBuf,
    started: Instant,
    inputs: Vec<FileDigest>,
    outputs: Vec<PathBuf>,
}

impl Run {
    pub fn start(command: &'static str, out: &Path) -> Result<Self> {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        Ok(Run {
            command,
            out: out.to_owned(),
            started: Instant::now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn out(&self) -> &Path {
        &self.out
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(digest(path, path.display().to_string())?);
        Ok(())
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.path(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(path);
        Ok(())
    }

    pub fn written(&mut self, paths: impl IntoIterator<Item = PathBuf>) {
        self.outputs.extend(paths);
    }

    /// Write `manifest.json` last, with digests of everything written.
    pub fn finish(mut self, config: &RunConfig) -> Result<()> {
        self.outputs.sort();
        self.outputs.dedup();
        let outputs = self
            .outputs
            .iter()
            .map(|p| {
                let label = p.strip_prefix(&self.out).unwrap_or(p).display().to_string();
                digest(p, label)
            })
            .collect::<Result<Vec<_>>>()?;

        #[derive(Serialize)]
        struct Manifest<'a> {
            command: &'a str,
            tool_version: &'a str,
            seed: Option<u64>,
            config: &'a RunConfig,
            inputs: &'a [FileDigest],
            outputs: &'a [FileDigest],
            wall_time_ms: u128,
        }
        let manifest = Manifest {
            command: self.command,
            tool_version: env!("CARGO_PKG_VERSION"),
            seed: config.seed,
            config,
            inputs: &self.inputs,
            outputs: &outputs,
            wall_time_ms: self.started.elapsed().as_millis(),
        };
        let mut json = serde_json::to_string_pretty(&manifest)?;
        json.push('\n');
        let path = self.path(MANIFEST);
        fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}
