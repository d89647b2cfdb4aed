//! Cutting recordings into `(X, Z)` windows.
//!
//! A window spans `T + p` samples. `X` is the middle `T` columns and `Z`
//! joins the `p/2` columns on either side, per channel:
//!
//! ```text
//! | Z left (p/2) |        X (T)        | Z right (p/2) |
//! ```

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};

use super::{AuxContext, MultiChannelSegment, Recording};
use crate::error::{Error, Result};

/// Standard deviations below this are treated as zero.
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub segment: MultiChannelSegment,
    pub context: AuxContext,
    /// `start + (T + p) / 2`, in samples.
    pub center: usize,
}

fn check_context_len(p: usize) -> Result<()> {
    if !p.is_multiple_of(2) {
        return Err(Error::Parameter(format!("context length p must be even, got {p}")));
    }
    Ok(())
}

/// Splits a `d × (T + p)` window into `X` (`d × T`) and `Z` (`d × p`).
pub fn split_window(window: ArrayView2<'_, f64>, t: usize, p: usize) -> Result<(Array2<f64>, Array2<f64>)> {
    check_context_len(p)?;
    if window.ncols() != t + p {
        return Err(Error::Dimension(format!(
            "window has {} columns, expected T + p = {}",
            window.ncols(),
            t + p
        )));
    }
    let half = p / 2;
    let x = window.slice(s![.., half..half + t]).to_owned();
    let z = concatenate(
        Axis(1),
        &[window.slice(s![.., ..half]), window.slice(s![.., half + t..])],
    )
    .expect("flanks share the row count");
    Ok((x, z))
}

/// Slides a `T + p` window over `r` with the given stride. Windows that
/// would run past the end are dropped, so a recording shorter than
/// `T + p` yields nothing.
pub fn segment_stream(r: &Recording, t: usize, p: usize, stride: usize) -> Result<Vec<Window>> {
    check_context_len(p)?;
    if stride == 0 {
        return Err(Error::Parameter("stride must be at least 1".into()));
    }
    if t == 0 {
        return Err(Error::Parameter("segment length T must be at least 1".into()));
    }
    let width = t + p;
    let t0 = r.n_samples();
    if width > t0 {
        return Ok(Vec::new());
    }
    (0..=t0 - width)
        .step_by(stride)
        .map(|start| {
            let view = r.samples().slice(s![.., start..start + width]);
            let (x, z) = split_window(view, t, p)?;
            let center = start + width / 2;
            Ok(Window {
                segment: MultiChannelSegment {
                    x,
                    fs: r.fs(),
                    origin: Some(center),
                },
                context: AuxContext { z },
                center,
            })
        })
        .collect()
}

/// Centers each row, then divides the whole matrix by the single standard
/// deviation of its (centered) entries. A matrix whose spread is below
/// [`STD_FLOOR`] comes out as all zeros.
pub fn standardize_segment(m: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = m.to_owned();
    if out.is_empty() {
        return out;
    }
    for mut row in out.rows_mut() {
        let mean = row.sum() / row.len() as f64;
        row.mapv_inplace(|v| v - mean);
    }
    let n = out.len() as f64;
    let var = out.iter().map(|v| v * v).sum::<f64>() / n;
    let std = var.sqrt();
    if std < STD_FLOOR {
        out.fill(0.0);
    } else {
        out.mapv_inplace(|v| v / std);
    }
    out
}
