//! Top-L channel selection from learned channel weights.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::model::{channel_importance, predict_batch, top_channels, ChannelWeights, NdlParams};

const RANK_BLOCK: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentRanking {
    pub prob: f64,
    /// `(channel, importance)`, most important first.
    pub top: Vec<(usize, f64)>,
    pub n_channels: usize,
}

/// Ranks the channels of every segment by `1ᵀα̂`.
pub fn rank_segments<'a>(
    params: &NdlParams,
    pairs: &[(ndarray::ArrayView2<'a, f64>, ndarray::ArrayView2<'a, f64>)],
    top: usize,
) -> Result<Vec<SegmentRanking>> {
    let mut out = Vec::with_capacity(pairs.len());
    for block in pairs.chunks(RANK_BLOCK) {
        for pred in predict_batch(params, block)? {
            let imp = channel_importance(&pred.alpha).to_vec();
            out.push(SegmentRanking {
                prob: pred.prob,
                top: top_channels(&imp, top)?,
                n_channels: imp.len(),
            });
        }
    }
    Ok(out)
}

/// Fraction of segments that put each channel in their top L. Every
/// segment must have `d` channels; the result sums to `L`.
pub fn selection_frequencies(rankings: &[SegmentRanking], d: usize) -> Result<Vec<f64>> {
    if rankings.is_empty() {
        return Err(Error::Data("no segments to aggregate".into()));
    }
    let mut counts = vec![0usize; d];
    for r in rankings {
        if r.n_channels != d {
            return Err(Error::Dimension(format!(
                "segment has {} channels, expected {d}",
                r.n_channels
            )));
        }
        for &(l, _) in &r.top {
            counts[l] += 1;
        }
    }
    let n = rankings.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// Selection probability of any channel under uniform random top-L picks.
pub fn random_baseline(top: usize, d: usize) -> f64 {
    top as f64 / d as f64
}

/// Mean overlap `|est ∩ truth| / L` between estimated top-L channels and
/// those of the true weights. Uniform random picks score `L/d` on average.
pub fn truth_hit_rate(rankings: &[SegmentRanking], truth: &[Array2<f64>]) -> Result<f64> {
    if rankings.len() != truth.len() || rankings.is_empty() {
        return Err(Error::Dimension(format!(
            "{} rankings against {} truth matrices",
            rankings.len(),
            truth.len()
        )));
    }
    let mut total = 0.0;
    for (r, a) in rankings.iter().zip(truth) {
        let imp = channel_importance(&ChannelWeights::from_matrix(a.clone())?).to_vec();
        let want = top_channels(&imp, r.top.len())?;
        let hits = r.top.iter().filter(|(l, _)| want.iter().any(|(m, _)| m == l)).count();
        total += hits as f64 / r.top.len() as f64;
    }
    Ok(total / rankings.len() as f64)
}
