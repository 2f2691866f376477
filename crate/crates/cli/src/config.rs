//! Run configuration: a JSON file, overridden by flags, resolved and written
//! back as `run.json` so a run can be repeated with `--config run.json`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use qfpred::model::{HeadMode, TrainConfig};
use qfpred::restore::RestoreConfig;

use crate::UsageError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Filled in on write; ignored on read.
    pub tool_version: Option<String>,
    pub command: Option<String>,
    pub manifest: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub images: Vec<PathBuf>,
    pub out: Option<PathBuf>,
    pub mode: Option<HeadMode>,
    pub channels: Option<usize>,
    pub seed: Option<u64>,
    pub patch: Option<usize>,
    pub threads: Option<usize>,
    pub train: Option<TrainConfig>,
    /// Corruption sweep, `kind:level,level,...`.
    pub sweep: Option<String>,
    /// Fixed patch locations per image for corruption sweeps.
    pub locations: Option<usize>,
    /// Random patches per image for dataset scores (whole image when unset).
    pub patches: Option<usize>,
    pub lambda: Option<Vec<f64>>,
    pub seeds: Option<Vec<u64>>,
    pub restore: Option<RestoreConfig>,
    /// Corpus generation: image count and validation count.
    pub count: Option<usize>,
    pub val_count: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        let cfg = serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())))?;
        Ok(cfg)
    }

    /// Values set in `overrides` replace those in `self`.
    pub fn merge(mut self, overrides: RunConfig) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if overrides.$f.is_some() { self.$f = overrides.$f; } )* };
        }
        take!(manifest, model, out, mode, channels, seed, patch, threads, train, sweep, locations, patches, lambda, seeds, restore, count, val_count);
        if !overrides.images.is_empty() {
            self.images = overrides.images;
        }
        self
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("qf-out"))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn threads(&self) -> usize {
        self.threads.unwrap_or(1).max(1)
    }

    pub fn require_manifest(&self) -> anyhow::Result<&Path> {
        self.manifest.as_deref().ok_or_else(|| UsageError("--manifest is required".into()).into())
    }

    pub fn require_model(&self) -> anyhow::Result<&Path> {
        self.model.as_deref().ok_or_else(|| UsageError("--model is required".into()).into())
    }

    pub fn write(&self, command: &str) -> anyhow::Result<()> {
        let mut resolved = self.clone();
        resolved.command = Some(command.to_string());
        resolved.tool_version = Some(env!("CARGO_PKG_VERSION").to_string());
        let path = self.out_dir().join("run.json");
        std::fs::write(&path, serde_json::to_string_pretty(&resolved)? + "\n")
            .map_err(|e| anyhow::anyhow!("writing {}: {e}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let file = RunConfig { seed: Some(1), patch: Some(32), ..Default::default() };
        let flags = RunConfig { seed: Some(9), ..Default::default() };
        let merged = file.merge(flags);
        assert_eq!(merged.seed, Some(9));
        assert_eq!(merged.patch, Some(32));
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = RunConfig { train: Some(TrainConfig::default()), lambda: Some(vec![0.0, 0.1]), ..Default::default() };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
        assert!(serde_json::from_str::<RunConfig>("{\"bogus\": 1}").is_err());
    }
}
