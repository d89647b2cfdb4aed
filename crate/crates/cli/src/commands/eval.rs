use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use ndl::model::predict_batch;
use ndl::sim::recovery_errors;
use ndl::train::evaluate;

use super::{check_input, check_parent, load_dataset, load_params, load_truth, opt};
use crate::config::{required, RunConfig};

pub const METRICS_HEADER: [&str; 13] = [
    "model", "data", "n_train", "n", "threshold", "sens", "prec", "spec", "f1", "prauc", "auc", "mae_alpha", "mae_g",
];

#[derive(clap::Args)]
pub struct Args {
    /// Trained model [config: eval.model]
    #[arg(long)]
    model: Option<PathBuf>,
    /// Dataset to score [config: eval.data]
    #[arg(long)]
    data: Option<PathBuf>,
    /// Ground truth; defaults to <DATA>.truth.toml when present [config: eval.truth]
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Positive when probability >= threshold [config: eval.threshold, default 0.5]
    #[arg(long)]
    threshold: Option<f64>,
    /// Metrics CSV [config: eval.out, default metrics.csv]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-sample label,score CSV for ROC/PR reports [config: eval.scores]
    #[arg(long)]
    scores: Option<PathBuf>,
}

fn write_scores(path: &Path, labels: &[u8], scores: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["index", "label", "score"])?;
    for (i, (y, s)) in labels.iter().zip(scores).enumerate() {
        w.write_record([i.to_string(), y.to_string(), s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(a: Args, cfg: &RunConfig) -> Result<()> {
    let e = &cfg.eval;
    let model_path = required(a.model, e.model.clone(), "--model")?;
    let data_path = required(a.data, e.data.clone(), "--data")?;
    check_input(&model_path)?;
    check_input(&data_path)?;
    let out = a.out.or_else(|| e.out.clone()).unwrap_or_else(|| PathBuf::from("metrics.csv"));
    check_parent(&out)?;
    let scores_path = a.scores.or_else(|| e.scores.clone());
    if let Some(p) = &scores_path {
        check_parent(p)?;
    }
    let threshold = a.threshold.or(e.threshold).unwrap_or(0.5);
    ensure!((0.0..=1.0).contains(&threshold), "threshold must lie in [0, 1], got {threshold}");

    let (params, meta) = load_params(&model_path)?;
    let dataset = load_dataset(&data_path)?;
    let truth = load_truth(a.truth.or_else(|| e.truth.clone()), &data_path)?;
    let result = evaluate(&params, &dataset, threshold)?;
    let recovery = match &truth {
        Some(rec) => {
            let pairs = dataset.pairs();
            let preds = predict_batch(&params, &pairs)?;
            Some(recovery_errors(&rec.truth, &pairs, &preds)?)
        }
        None => None,
    };

    let r = &result.report;
    let mut w = csv::Writer::from_path(&out).with_context(|| format!("writing {}", out.display()))?;
    w.write_record(METRICS_HEADER)?;
    w.write_record([
        model_path.display().to_string(),
        data_path.display().to_string(),
        meta.n_train.to_string(),
        dataset.len().to_string(),
        threshold.to_string(),
        r.sens.to_string(),
        r.prec.to_string(),
        r.spec.to_string(),
        r.f1.to_string(),
        opt(r.prauc),
        opt(r.auc),
        opt(recovery.map(|m| m.mae_alpha)),
        opt(recovery.map(|m| m.mae_g)),
    ])?;
    w.flush()?;
    if let Some(p) = &scores_path {
        write_scores(p, &dataset.labels(), &result.scores)?;
    }

    let show = |v: Option<f64>| v.map_or_else(|| "absent".to_string(), |v| format!("{v:.4}"));
    println!("n={} positives={} threshold={threshold} loss={:.5}", dataset.len(), dataset.positives(), result.loss);
    println!("{:<10} {:>8}", "metric", "value");
    for (name, v) in [
        ("sens", Some(r.sens)),
        ("prec", Some(r.prec)),
        ("spec", Some(r.spec)),
        ("f1", Some(r.f1)),
        ("prauc", r.prauc),
        ("auc", r.auc),
        ("mae_alpha", recovery.map(|m| m.mae_alpha)),
        ("mae_g", recovery.map(|m| m.mae_g)),
    ] {
        println!("{name:<10} {:>8}", show(v));
    }
    println!("wrote {}", out.display());
    Ok(())
}
