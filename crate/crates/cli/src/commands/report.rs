use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use ndl::metrics::{pr_curve, roc_curve};

use super::check_input;
use crate::config::RunConfig;

#[derive(clap::Args)]
pub struct Args {
    /// Training history CSVs [config: report.history]
    #[arg(long, num_args = 1..)]
    history: Option<Vec<PathBuf>>,
    /// Metrics CSVs written by eval [config: report.metrics]
    #[arg(long, num_args = 1..)]
    metrics: Option<Vec<PathBuf>>,
    /// Scores CSV written by eval --scores [config: report.scores]
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Output directory [config: report.out_dir, default report]
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    check_input(path)?;
    csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .with_context(|| format!("{} has no `{name}` column", path.display()))
}

fn parse_opt(field: &str) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    let v: f64 = field.parse().with_context(|| format!("bad number {field:?}"))?;
    Ok(v.is_finite().then_some(v))
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn loss_curves(paths: &[PathBuf], out: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(out)?;
    w.write_record(["source", "epoch", "train_loss", "val_loss"])?;
    for path in paths {
        let mut r = reader(path)?;
        let h = r.headers()?.clone();
        let (e, tl, vl) = (
            column(&h, "epoch", path)?,
            column(&h, "train_loss", path)?,
            column(&h, "val_loss", path)?,
        );
        for row in r.records() {
            let row = row?;
            w.write_record([&path.display().to_string(), &row[e], &row[tl], &row[vl]])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn curves(path: &Path, dir: &Path) -> Result<()> {
    let mut r = reader(path)?;
    let h = r.headers()?.clone();
    let (li, si) = (column(&h, "label", path)?, column(&h, "score", path)?);
    let (mut labels, mut scores) = (Vec::new(), Vec::new());
    for row in r.records() {
        let row = row?;
        labels.push(row[li].parse::<u8>().context("label column")?);
        scores.push(row[si].parse::<f64>().context("score column")?);
    }
    let mut w = csv::Writer::from_path(dir.join("roc.csv"))?;
    w.write_record(["threshold", "fpr", "tpr"])?;
    for p in roc_curve(&scores, &labels)? {
        w.write_record([p.threshold.to_string(), p.fpr.to_string(), p.tpr.to_string()])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("pr.csv"))?;
    w.write_record(["threshold", "recall", "precision"])?;
    for p in pr_curve(&scores, &labels)? {
        w.write_record([p.threshold.to_string(), p.recall.to_string(), p.precision.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per training-set size with the mean and median recovery errors.
fn mae_table(paths: &[PathBuf], out: &Path) -> Result<usize> {
    let mut groups: BTreeMap<u64, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for path in paths {
        let mut r = reader(path)?;
        let h = r.headers()?.clone();
        let (ni, ai, gi) = (
            column(&h, "n_train", path)?,
            column(&h, "mae_alpha", path)?,
            column(&h, "mae_g", path)?,
        );
        for row in r.records() {
            let row = row?;
            let n: u64 = row[ni].parse().context("n_train column")?;
            if let (Some(a), Some(g)) = (parse_opt(&row[ai])?, parse_opt(&row[gi])?) {
                let e = groups.entry(n).or_default();
                e.0.push(a);
                e.1.push(g);
            }
        }
    }
    let mut w = csv::Writer::from_path(out)?;
    w.write_record([
        "n_train",
        "runs",
        "mean_mae_alpha",
        "median_mae_alpha",
        "mean_mae_g",
        "median_mae_g",
    ])?;
    for (n, (mut a, mut g)) in groups.clone() {
        let runs = a.len() as f64;
        w.write_record([
            n.to_string(),
            a.len().to_string(),
            (a.iter().sum::<f64>() / runs).to_string(),
            median(&mut a).to_string(),
            (g.iter().sum::<f64>() / runs).to_string(),
            median(&mut g).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(groups.len())
}

pub fn run(a: Args, cfg: &RunConfig) -> Result<()> {
    let c = &cfg.report;
    let history = a.history.or_else(|| c.history.clone()).unwrap_or_default();
    let metrics = a.metrics.or_else(|| c.metrics.clone()).unwrap_or_default();
    let scores = a.scores.or_else(|| c.scores.clone());
    let dir = a.out_dir.or_else(|| c.out_dir.clone()).unwrap_or_else(|| PathBuf::from("report"));
    if history.is_empty() && metrics.is_empty() && scores.is_none() {
        bail!("nothing to report: pass --history, --metrics or --scores");
    }
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    ensure!(dir.is_dir(), "{} is not a directory", dir.display());

    if !history.is_empty() {
        loss_curves(&history, &dir.join("loss_curves.csv"))?;
        println!("loss curves from {} histories", history.len());
    }
    if let Some(s) = &scores {
        curves(s, &dir)?;
        println!("ROC and PR points from {}", s.display());
    }
    if !metrics.is_empty() {
        let rows = mae_table(&metrics, &dir.join("mae_vs_n.csv"))?;
        println!("MAE table with {rows} sample sizes");
    }
    println!("wrote {}", dir.display());
    Ok(())
}
