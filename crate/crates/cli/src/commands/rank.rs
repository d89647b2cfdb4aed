use std::path::PathBuf;

use anyhow::{ensure, Context, Result};
use ndl::rank::{random_baseline, rank_segments, selection_frequencies, truth_hit_rate};

use super::{check_input, check_parent, load_dataset, load_params, load_truth};
use crate::config::{required, RunConfig};

#[derive(clap::Args)]
pub struct Args {
    /// Trained model [config: rank.model]
    #[arg(long)]
    model: Option<PathBuf>,
    /// Dataset whose segments are ranked [config: rank.data]
    #[arg(long)]
    data: Option<PathBuf>,
    /// Channels kept per segment, L [config: rank.top, default 1]
    #[arg(long)]
    top: Option<usize>,
    /// Per-segment CSV [config: rank.out, default ranks.csv]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Selection-frequency CSV [config: rank.freq_out, default frequencies.csv]
    #[arg(long)]
    freq_out: Option<PathBuf>,
}

pub fn run(a: Args, cfg: &RunConfig) -> Result<()> {
    let c = &cfg.rank;
    let model_path = required(a.model, c.model.clone(), "--model")?;
    let data_path = required(a.data, c.data.clone(), "--data")?;
    check_input(&model_path)?;
    check_input(&data_path)?;
    let out = a.out.or_else(|| c.out.clone()).unwrap_or_else(|| PathBuf::from("ranks.csv"));
    let freq_out = a
        .freq_out
        .or_else(|| c.freq_out.clone())
        .unwrap_or_else(|| PathBuf::from("frequencies.csv"));
    check_parent(&out)?;
    check_parent(&freq_out)?;
    let top = a.top.or(c.top).unwrap_or(1);

    let (params, _) = load_params(&model_path)?;
    let dataset = load_dataset(&data_path)?;
    ensure!(!dataset.is_empty(), "dataset {} is empty", data_path.display());
    let d = dataset.samples[0].x.nrows();
    ensure!(
        dataset.samples.iter().all(|s| s.x.nrows() == d),
        "ranking needs a common channel count across segments"
    );
    let rankings = rank_segments(&params, &dataset.pairs(), top)?;

    let mut w = csv::Writer::from_path(&out).with_context(|| format!("writing {}", out.display()))?;
    let mut header = vec!["index".to_string(), "label".to_string(), "prob".to_string()];
    for k in 1..=top {
        header.push(format!("channel_{k}"));
        header.push(format!("importance_{k}"));
    }
    w.write_record(&header)?;
    for (i, (r, s)) in rankings.iter().zip(&dataset.samples).enumerate() {
        let mut row = vec![i.to_string(), s.y.to_string(), r.prob.to_string()];
        for (l, imp) in &r.top {
            row.push(l.to_string());
            row.push(imp.to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;

    let freq = selection_frequencies(&rankings, d)?;
    let baseline = random_baseline(top, d);
    let mut w = csv::Writer::from_path(&freq_out).with_context(|| format!("writing {}", freq_out.display()))?;
    w.write_record(["channel", "frequency", "random_baseline"])?;
    for (l, f) in freq.iter().enumerate() {
        w.write_record([l.to_string(), f.to_string(), baseline.to_string()])?;
    }
    w.flush()?;

    println!("ranked {} segments, top {top} of {d} channels; random baseline {baseline:.4}", rankings.len());
    if let Some(rec) = load_truth(None, &data_path)? {
        let alphas: Vec<_> = dataset
            .samples
            .iter()
            .map(|s| rec.truth.alpha_star(s.x.view()).into_matrix())
            .collect();
        println!("truth hit rate {:.4}", truth_hit_rate(&rankings, &alphas)?);
    }
    println!("wrote {} and {}", out.display(), freq_out.display());
    Ok(())
}
