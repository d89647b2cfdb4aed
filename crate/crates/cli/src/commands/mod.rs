use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use ndl::model::{load_model, ModelMeta, NdlParams};
use ndl::sim::TruthRecord;
use ndl::Dataset;

pub mod detect;
pub mod eval;
pub mod rank;
pub mod report;
pub mod simulate;
pub mod train;

/// Ground-truth sidecar written next to a simulated dataset.
pub fn truth_path(data: &Path) -> PathBuf {
    let mut s = data.as_os_str().to_owned();
    s.push(".truth.toml");
    PathBuf::from(s)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::load(path).with_context(|| format!("loading dataset {}", path.display()))
}

pub fn load_params(path: &Path) -> Result<(NdlParams, ModelMeta)> {
    load_model(path).with_context(|| format!("loading model {}", path.display()))
}

/// Truth from an explicit path, or the sidecar next to `data` if present.
pub fn load_truth(explicit: Option<PathBuf>, data: &Path) -> Result<Option<TruthRecord>> {
    let path = match explicit {
        Some(p) => p,
        None => {
            let p = truth_path(data);
            if !p.exists() {
                return Ok(None);
            }
            p
        }
    };
    let rec = TruthRecord::load(&path).with_context(|| format!("loading truth {}", path.display()))?;
    Ok(Some(rec))
}

pub fn check_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure!(dir.is_dir(), "output directory {} does not exist", dir.display());
    }
    Ok(())
}

pub fn check_input(path: &Path) -> Result<()> {
    ensure!(path.is_file(), "input file {} not found", path.display());
    Ok(())
}

/// Formats an optional metric; absent values stay empty.
pub fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}
