//! The `--config` file. Every key is optional and every key can be
//! overridden by the matching command-line flag.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

pub const SEED_ENV: &str = "NDL_SEED";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub detect: DetectSection,
    #[serde(default)]
    pub rank: RankSection,
    #[serde(default)]
    pub report: ReportSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub d: Option<usize>,
    pub t: Option<usize>,
    pub p: Option<usize>,
    pub n: Option<usize>,
    pub truth_seed: Option<u64>,
    pub base: Option<PathBuf>,
    pub focal_gain: Option<f64>,
    pub truth: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub omega_widths: Option<Vec<usize>>,
    pub g_widths: Option<Vec<usize>>,
    pub kernel: Option<usize>,
    pub stride: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub data: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub history: Option<PathBuf>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub omega_decay: Option<f64>,
    pub val_fraction: Option<f64>,
    pub checkpoint_every: Option<usize>,
    pub checkpoint_dir: Option<PathBuf>,
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub model: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub threshold: Option<f64>,
    pub out: Option<PathBuf>,
    pub scores: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectSection {
    pub recording: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub threshold: Option<f64>,
    pub stride: Option<usize>,
    pub eps: Option<usize>,
    pub min_pts: Option<usize>,
    pub standardize: Option<bool>,
    pub montage: Option<String>,
    pub band: Option<[f64; 2]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankSection {
    pub model: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub top: Option<usize>,
    pub out: Option<PathBuf>,
    pub freq_out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    pub history: Option<Vec<PathBuf>>,
    pub metrics: Option<Vec<PathBuf>>,
    pub scores: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Flag, then `NDL_SEED`, then the config file, then 0.
    pub fn seed(&self, flag: Option<u64>) -> Result<u64> {
        if let Some(s) = flag {
            return Ok(s);
        }
        if let Ok(v) = std::env::var(SEED_ENV) {
            return v
                .trim()
                .parse()
                .with_context(|| format!("{SEED_ENV}={v:?} is not an unsigned integer"));
        }
        Ok(self.seed.unwrap_or(0))
    }
}

/// First of `flag` and `config`, or an error naming both.
pub fn required<T>(flag: Option<T>, config: Option<T>, what: &str) -> Result<T> {
    flag.or(config)
        .with_context(|| format!("missing {what}: pass the flag or set it in the config file"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("bogus = 1").is_err());
        assert!(toml::from_str::<RunConfig>("[train]\nepochz = 3").is_err());
        let c: RunConfig = toml::from_str("seed = 4\n[train]\nepochs = 3").unwrap();
        assert_eq!(c.train.epochs, Some(3));
        assert_eq!(c.seed(Some(9)).unwrap(), 9);
    }
}
