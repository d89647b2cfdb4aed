use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{Context, Result};
use ndl::detect::{annotate_recording, write_annotations, DetectConfig};
use ndl::signal::{apply_montage, bandpass_filter, read_recording, MontageSpec};

use super::{check_input, check_parent, load_params};
use crate::config::{required, RunConfig};

#[derive(clap::Args)]
pub struct Args {
    /// NDLR recording [config: detect.recording]
    #[arg(long)]
    recording: Option<PathBuf>,
    /// Trained model [config: detect.model]
    #[arg(long)]
    model: Option<PathBuf>,
    /// Annotation JSONL output [config: detect.out]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Probability threshold C, exclusive [config: detect.threshold, default 0.5]
    #[arg(long)]
    threshold: Option<f64>,
    /// Window step in samples [config: detect.stride, default 1]
    #[arg(long)]
    stride: Option<usize>,
    /// Clustering radius in samples [config: detect.eps, default (T+p)/2]
    #[arg(long)]
    eps: Option<usize>,
    /// Clustering density [config: detect.min_pts, default 1]
    #[arg(long)]
    min_pts: Option<usize>,
    /// Score raw windows instead of standardized ones [config: detect.standardize = false]
    #[arg(long)]
    no_standardize: bool,
    /// "tcp", "common_average" or a montage TOML file [config: detect.montage]
    #[arg(long)]
    montage: Option<String>,
    /// Band-pass before scanning, as LO,HI in Hz [config: detect.band]
    #[arg(long, value_delimiter = ',', num_args = 2)]
    band: Option<Vec<f64>>,
}

fn montage(spec: &str) -> Result<MontageSpec> {
    Ok(match spec {
        "tcp" => MontageSpec::tcp(),
        "common_average" => MontageSpec::common_average(),
        path => MontageSpec::load(path).with_context(|| format!("loading montage {path}"))?,
    })
}

pub fn run(a: Args, cfg: &RunConfig) -> Result<()> {
    let c = &cfg.detect;
    let rec_path = required(a.recording, c.recording.clone(), "--recording")?;
    let model_path = required(a.model, c.model.clone(), "--model")?;
    let out = required(a.out, c.out.clone(), "--out")?;
    check_input(&rec_path)?;
    check_input(&model_path)?;
    check_parent(&out)?;
    let config = DetectConfig {
        threshold: a.threshold.or(c.threshold).unwrap_or(0.5),
        stride: a.stride.or(c.stride).unwrap_or(1),
        eps: a.eps.or(c.eps),
        min_pts: a.min_pts.or(c.min_pts).unwrap_or(1),
        standardize: !a.no_standardize && c.standardize.unwrap_or(true),
    };

    let (params, _) = load_params(&model_path)?;
    let mut recording = read_recording(&rec_path)
        .with_context(|| format!("reading recording {}", rec_path.display()))?;
    if let Some(m) = a.montage.or_else(|| c.montage.clone()) {
        recording = apply_montage(&recording, &montage(&m)?)?;
    }
    if let Some([lo, hi]) = a.band.map(|b| [b[0], b[1]]).or(c.band) {
        recording = bandpass_filter(&recording, lo, hi)?;
    }
    let annotations = annotate_recording(&recording, &params, &config)?;
    let file = File::create(&out).with_context(|| format!("writing {}", out.display()))?;
    let mut w = BufWriter::new(file);
    write_annotations(&annotations, &mut w)?;
    w.flush()?;
    println!(
        "{} annotations over {:.1} s of {} channels; wrote {}",
        annotations.len(),
        recording.n_samples() as f64 / recording.fs(),
        recording.n_channels(),
        out.display()
    );
    Ok(())
}
