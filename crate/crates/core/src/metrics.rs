//! Classification metrics and the simulation recovery errors.

use std::cmp::Ordering;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    /// A score at or above `threshold` is called positive.
    pub fn from_scores(scores: &[f64], labels: &[u8], threshold: f64) -> Result<Self> {
        dim_check(scores.len() == labels.len(), || {
            format!("{} scores for {} labels", scores.len(), labels.len())
        })?;
        let mut c = Self::default();
        for (&s, &y) in scores.iter().zip(labels) {
            match (s >= threshold, y == 1) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Which ratios had a zero denominator and were reported as 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UndefinedFlags {
    pub sensitivity: bool,
    pub precision: bool,
    pub specificity: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub sensitivity: f64,
    pub precision: f64,
    pub specificity: f64,
    pub f1: f64,
    pub undefined: UndefinedFlags,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn confusion_metrics(c: &ConfusionCounts) -> ConfusionMetrics {
    let (sensitivity, u_sens) = ratio(c.tp, c.tp + c.fn_);
    let (precision, u_prec) = ratio(c.tp, c.tp + c.fp);
    let (specificity, u_spec) = ratio(c.tn, c.tn + c.fp);
    let f1 = if precision + sensitivity > 0.0 {
        2.0 * precision * sensitivity / (precision + sensitivity)
    } else {
        0.0
    };
    ConfusionMetrics {
        sensitivity,
        precision,
        specificity,
        f1,
        undefined: UndefinedFlags {
            sensitivity: u_sens,
            precision: u_prec,
            specificity: u_spec,
        },
    }
}

fn class_counts(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    dim_check(scores.len() == labels.len(), || {
        format!("{} scores for {} labels", scores.len(), labels.len())
    })?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Parameter("NaN score".into()));
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    Ok((pos, labels.len() - pos))
}

/// Area under the ROC curve as the Mann–Whitney statistic
/// `P(s⁺ > s⁻) + ½ P(s⁺ = s⁻)`, using mid-ranks for ties.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = class_counts(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("ROC AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share their mean
        let mid = (i + j) as f64 / 2.0 + 1.0;
        let tied_pos = order[i..=j].iter().filter(|&&k| labels[k] == 1).count();
        rank_sum += mid * tied_pos as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

/// Cumulative (threshold, TP, FP) at every distinct score, highest first.
fn sweep(scores: &[f64], labels: &[u8]) -> Vec<(f64, usize, usize)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    let mut out: Vec<(f64, usize, usize)> = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    for (n, &k) in order.iter().enumerate() {
        if labels[k] == 1 {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_tie = n + 1 == order.len() || scores[order[n + 1]] != scores[k];
        if last_of_tie {
            out.push((scores[k], tp, fp));
        }
    }
    out
}

/// ROC curve from `(0, 0)` to `(1, 1)`, one point per distinct score.
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<Vec<RocPoint>> {
    let (pos, neg) = class_counts(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("ROC curve needs both classes".into()));
    }
    let mut out = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    out.extend(sweep(scores, labels).into_iter().map(|(threshold, tp, fp)| RocPoint {
        threshold,
        fpr: fp as f64 / neg as f64,
        tpr: tp as f64 / pos as f64,
    }));
    Ok(out)
}

/// ROC AUC by trapezoid integration of [`roc_curve`].
pub fn roc_auc_trapezoid(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let curve = roc_curve(scores, labels)?;
    Ok(curve
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum())
}

/// Precision-recall points, one per distinct score, highest first.
pub fn pr_curve(scores: &[f64], labels: &[u8]) -> Result<Vec<PrPoint>> {
    let (pos, _) = class_counts(scores, labels)?;
    if pos == 0 {
        return Err(Error::UndefinedMetric("precision-recall needs a positive".into()));
    }
    Ok(sweep(scores, labels)
        .into_iter()
        .map(|(threshold, tp, fp)| PrPoint {
            threshold,
            recall: tp as f64 / pos as f64,
            precision: tp as f64 / (tp + fp) as f64,
        })
        .collect())
}

/// Area under the precision-recall curve with step interpolation:
/// `Σ (Rᵢ − Rᵢ₋₁) Pᵢ`.
pub fn pr_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let curve = pr_curve(scores, labels)?;
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    for pt in curve {
        area += (pt.recall - prev_recall) * pt.precision;
        prev_recall = pt.recall;
    }
    Ok(area)
}

/// Mean Frobenius distance between matched weight matrices.
pub fn mae_alpha(truth: &[Array2<f64>], est: &[Array2<f64>]) -> Result<f64> {
    dim_check(truth.len() == est.len(), || {
        format!("{} true matrices, {} estimates", truth.len(), est.len())
    })?;
    if truth.is_empty() {
        return Err(Error::Parameter("no samples".into()));
    }
    let mut total = 0.0;
    for (i, (a, b)) in truth.iter().zip(est).enumerate() {
        dim_check(a.dim() == b.dim(), || format!("sample {i}: {:?} vs {:?}", a.dim(), b.dim()))?;
        let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        total += sq.sqrt();
    }
    Ok(total / truth.len() as f64)
}

pub fn mae_g(truth: &[f64], est: &[f64]) -> Result<f64> {
    dim_check(truth.len() == est.len(), || {
        format!("{} true values, {} estimates", truth.len(), est.len())
    })?;
    if truth.is_empty() {
        return Err(Error::Parameter("no samples".into()));
    }
    Ok(truth.iter().zip(est).map(|(a, b)| (a - b).abs()).sum::<f64>() / truth.len() as f64)
}

/// All reported classification metrics. AUC fields are `None` when the
/// evaluated labels contain a single class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub sens: f64,
    pub prec: f64,
    pub spec: f64,
    pub f1: f64,
    pub prauc: Option<f64>,
    pub auc: Option<f64>,
    pub counts: ConfusionCounts,
}

pub fn classification_report(scores: &[f64], labels: &[u8], threshold: f64) -> Result<MetricReport> {
    let counts = ConfusionCounts::from_scores(scores, labels, threshold)?;
    let m = confusion_metrics(&counts);
    let optional = |r: Result<f64>| match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedMetric(_)) => Ok(None),
        Err(e) => Err(e),
    };
    Ok(MetricReport {
        sens: m.sensitivity,
        prec: m.precision,
        spec: m.specificity,
        f1: m.f1,
        prauc: optional(pr_auc(scores, labels))?,
        auc: optional(roc_auc(scores, labels))?,
        counts,
    })
}
