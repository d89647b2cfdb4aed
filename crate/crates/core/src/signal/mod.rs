//! Recording ingestion and preprocessing.
//!
//! A [`Recording`] is a continuous `d × T₀` signal. Preprocessing turns it
//! into model inputs: re-referencing ([`montage`]), zero-phase band-pass
//! filtering ([`filter`]), and cutting fixed windows into a segment of
//! interest `X` and its surrounding context `Z` ([`segment`]).

pub mod filter;
pub mod montage;
pub mod ndlr;
pub mod segment;

use std::collections::HashSet;

use ndarray::Array2;

use crate::error::{Error, Result};

pub use filter::bandpass_filter;
pub use montage::{apply_montage, MontageKind, MontageSpec};
pub use ndlr::{read_recording, write_recording};
pub use segment::{segment_stream, split_window, standardize_segment, Window};

/// A continuous multichannel recording, channel-major (`d × T₀`).
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    samples: Array2<f64>,
    fs: f64,
    channel_names: Vec<String>,
}

impl Recording {
    pub fn new(samples: Array2<f64>, fs: f64, channel_names: Vec<String>) -> Result<Self> {
        let (d, t0) = samples.dim();
        if d == 0 || t0 == 0 {
            return Err(Error::Validation(format!(
                "recording must have at least one channel and one sample, got {d}x{t0}"
            )));
        }
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::Validation(format!("sampling rate must be positive, got {fs}")));
        }
        if channel_names.len() != d {
            return Err(Error::Validation(format!(
                "{} channel names for {d} channels",
                channel_names.len()
            )));
        }
        let mut seen = HashSet::with_capacity(d);
        for name in &channel_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Validation(format!("duplicate channel name {name:?}")));
            }
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("recording contains non-finite samples".into()));
        }
        Ok(Self {
            samples,
            fs,
            channel_names,
        })
    }

    /// Builds a recording with generated names `CH0`, `CH1`, ...
    pub fn with_default_names(samples: Array2<f64>, fs: f64) -> Result<Self> {
        let names = (0..samples.nrows()).map(|i| format!("CH{i}")).collect();
        Self::new(samples, fs, names)
    }

    pub fn samples(&self) -> &Array2<f64> {
        &self.samples
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn n_channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.ncols()
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channel_names.iter().position(|n| n == name)
    }

    pub fn into_parts(self) -> (Array2<f64>, f64, Vec<String>) {
        (self.samples, self.fs, self.channel_names)
    }
}

/// The `d × T` window of interest.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelSegment {
    pub x: Array2<f64>,
    pub fs: f64,
    /// Sample index of the window center in the source recording.
    pub origin: Option<usize>,
}

/// The `d × p` context surrounding a segment.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxContext {
    pub z: Array2<f64>,
}
