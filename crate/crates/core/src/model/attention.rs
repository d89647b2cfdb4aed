use std::cmp::Ordering;

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{dim_check, Error, Result};

/// Softmax channel weights, `d × p`. Column `k` is a distribution over
/// channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelWeights(pub(crate) Array2<f64>);

impl ChannelWeights {
    /// Wraps a matrix whose columns already sum to one.
    pub fn from_matrix(alpha: Array2<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::Dimension("channel weights must be non-empty".into()));
        }
        if alpha.iter().any(|&a| !(0.0..=1.0).contains(&a)) {
            return Err(Error::Validation("channel weights must lie in [0, 1]".into()));
        }
        for (k, col) in alpha.columns().into_iter().enumerate() {
            let s = col.sum();
            if (s - 1.0).abs() > 1e-6 {
                return Err(Error::Validation(format!("column {k} sums to {s}, not 1")));
            }
        }
        Ok(Self(alpha))
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.0
    }

    pub fn n_channels(&self) -> usize {
        self.0.nrows()
    }

    pub fn width(&self) -> usize {
        self.0.ncols()
    }
}

/// Aggregate map `S`, `T × p` regardless of the channel count.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateMap(pub Array2<f64>);

impl AggregateMap {
    pub fn matrix(&self) -> &Array2<f64> {
        &self.0
    }
}

/// Column-wise softmax over channels, max-subtracted.
pub fn compute_alpha(omega: ArrayView2<'_, f64>) -> ChannelWeights {
    let mut alpha = omega.to_owned();
    softmax_columns(&mut alpha);
    ChannelWeights(alpha)
}

pub(crate) fn softmax_columns(m: &mut Array2<f64>) {
    for mut col in m.columns_mut() {
        let max = col.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        col.mapv_inplace(|v| (v - max).exp());
        // summing in sorted order makes the result independent of channel order
        let mut terms = col.to_vec();
        terms.sort_by(f64::total_cmp);
        let sum: f64 = terms.iter().sum();
        col.mapv_inplace(|v| v / sum);
    }
}

pub(crate) fn aggregate_raw(x: ArrayView2<'_, f64>, z: ArrayView2<'_, f64>, alpha: ArrayView2<'_, f64>) -> Array2<f64> {
    let offset = (&alpha * &z).sum();
    let mut s = x.t().dot(&alpha);
    s += offset;
    s
}

/// `S = Σ_l [ X_l α_lᵀ + (α_lᵀ Z_l) 1_T 1_pᵀ ]`.
pub fn aggregate(
    x: ArrayView2<'_, f64>,
    z: ArrayView2<'_, f64>,
    alpha: &ChannelWeights,
) -> Result<AggregateMap> {
    let a = alpha.matrix();
    dim_check(x.nrows() == a.nrows() && z.nrows() == a.nrows(), || {
        format!(
            "channel counts differ: X has {}, Z has {}, alpha has {}",
            x.nrows(),
            z.nrows(),
            a.nrows()
        )
    })?;
    dim_check(z.ncols() == a.ncols(), || {
        format!("Z has {} columns, alpha has {}", z.ncols(), a.ncols())
    })?;
    Ok(AggregateMap(aggregate_raw(x, z, a.view())))
}

/// Per-channel importance `1ᵀ α_l`; sums to `p` over channels.
pub fn channel_importance(alpha: &ChannelWeights) -> Array1<f64> {
    alpha.matrix().sum_axis(Axis(1))
}

/// The `count` most important channels, largest first; equal importances
/// go to the lower index.
pub fn top_channels(importance: &[f64], count: usize) -> Result<Vec<(usize, f64)>> {
    if count == 0 || count > importance.len() {
        return Err(Error::Parameter(format!(
            "top-L needs 1 <= L <= d = {}, got {count}",
            importance.len()
        )));
    }
    let mut idx: Vec<usize> = (0..importance.len()).collect();
    idx.sort_by(|&a, &b| {
        importance[b]
            .partial_cmp(&importance[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    Ok(idx.into_iter().take(count).map(|i| (i, importance[i])).collect())
}
