use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use ndl::signal::read_recording;
use ndl::sim::{build_truth, sample_dataset, to_dataset, BaseSource, SimConfig, TruthRecord};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_input, check_parent, truth_path};
use crate::config::{required, RunConfig};

#[derive(clap::Args)]
pub struct Args {
    /// Output dataset path; the truth goes to <OUT>.truth.toml [config: sim.out]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of samples [config: sim.n]
    #[arg(long)]
    n: Option<usize>,
    /// Channels [config: sim.d, default 22]
    #[arg(long)]
    d: Option<usize>,
    /// Segment length T [config: sim.t, default 64]
    #[arg(long)]
    t: Option<usize>,
    /// Context width p, even [config: sim.p, default 64]
    #[arg(long)]
    p: Option<usize>,
    /// Sample stream seed [config: seed; env NDL_SEED]
    #[arg(long)]
    seed: Option<u64>,
    /// Seed for the ground truth draw; defaults to the sample seed [config: sim.truth_seed]
    #[arg(long)]
    truth_seed: Option<u64>,
    /// Reuse the truth of an earlier simulation instead of drawing one [config: sim.truth]
    #[arg(long)]
    truth: Option<PathBuf>,
    /// NDLR recording to draw base windows from instead of the AR(2) generator [config: sim.base]
    #[arg(long)]
    base: Option<PathBuf>,
    /// Amplify one random channel per sample by this factor [config: sim.focal_gain, default 1]
    #[arg(long)]
    focal_gain: Option<f64>,
}

pub fn run(a: Args, cfg: &RunConfig) -> Result<()> {
    let s = &cfg.sim;
    let out = required(a.out, s.out.clone(), "--out")?;
    check_parent(&out)?;
    let seed = cfg.seed(a.seed)?;
    let defaults = SimConfig::default();
    let base = match a.base.or_else(|| s.base.clone()) {
        Some(path) => {
            check_input(&path)?;
            let r = read_recording(&path).with_context(|| format!("reading base {}", path.display()))?;
            BaseSource::Recording(Arc::new(r))
        }
        None => BaseSource::Synthetic,
    };
    let config = SimConfig {
        d: a.d.or(s.d).unwrap_or(defaults.d),
        t: a.t.or(s.t).unwrap_or(defaults.t),
        p: a.p.or(s.p).unwrap_or(defaults.p),
        n: required(a.n, s.n, "--n")?,
        seed,
        base,
        focal_gain: a.focal_gain.or(s.focal_gain).unwrap_or(1.0),
    };
    config.validate()?;
    let truth = match a.truth.or_else(|| s.truth.clone()) {
        Some(path) => {
            let rec = TruthRecord::load(&path).with_context(|| format!("loading truth {}", path.display()))?;
            rec.truth
        }
        None => {
            let ts = a.truth_seed.or(s.truth_seed).unwrap_or(seed);
            build_truth(&config, &mut ChaCha8Rng::seed_from_u64(ts))?
        }
    };
    let samples = sample_dataset(&config, &truth)?;
    let dataset = to_dataset(config.t, config.p, &samples)?;
    let record = TruthRecord {
        seed,
        d: config.d,
        truth,
        g_star: samples.iter().map(|s| s.g_star).collect(),
    };
    dataset.save(&out).with_context(|| format!("writing {}", out.display()))?;
    let tp = truth_path(&out);
    record.save(&tp).with_context(|| format!("writing {}", tp.display()))?;
    let pos = dataset.positives();
    println!(
        "simulated n={} d={} T={} p={} seed={seed} positives={pos} ({:.3})",
        config.n,
        config.d,
        config.t,
        config.p,
        pos as f64 / config.n as f64
    );
    println!("wrote {} and {}", out.display(), tp.display());
    Ok(())
}
