//! Zero-phase Butterworth band-pass.
//!
//! The band-pass is a 4th-order Butterworth high-pass at `lo` cascaded
//! with a 4th-order Butterworth low-pass at `hi`, each realized as two
//! bilinear-transform biquads. The cascade is run forward then backward
//! over an odd-reflected, padded copy of each channel, with the filter
//! state initialized to its step-response steady state so that a constant
//! input produces no edge transient.

use std::f64::consts::PI;

use ndarray::Array2;

use super::Recording;
use crate::error::{Error, Result};

/// Pole-pair quality factors of a 4th-order Butterworth prototype.
const BUTTER4_Q: [f64; 2] = [0.541_196_100_146_197, 1.306_562_964_876_376_5];

#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a1: f64,
    a2: f64,
}

impl Biquad {
    fn lowpass(f0: f64, fs: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * f0 / fs;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * q);
        let a0 = 1.0 + alpha;
        let b1 = (1.0 - cos) / a0;
        Self {
            b: [b1 / 2.0, b1, b1 / 2.0],
            a1: -2.0 * cos / a0,
            a2: (1.0 - alpha) / a0,
        }
    }

    fn highpass(f0: f64, fs: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * f0 / fs;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * q);
        let a0 = 1.0 + alpha;
        let b1 = (1.0 + cos) / a0;
        Self {
            b: [b1 / 2.0, -b1, b1 / 2.0],
            a1: -2.0 * cos / a0,
            a2: (1.0 - alpha) / a0,
        }
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a1 + self.a2)
    }

    /// Transposed direct-form II state for a unit step held forever.
    fn step_state(&self) -> [f64; 2] {
        let y = self.dc_gain();
        let z2 = self.b[2] - self.a2 * y;
        let z1 = self.b[1] - self.a1 * y + z2;
        [z1, z2]
    }

    fn run(&self, data: &mut [f64], mut z: [f64; 2]) {
        for v in data.iter_mut() {
            let x = *v;
            let y = self.b[0] * x + z[0];
            z[0] = self.b[1] * x - self.a1 * y + z[1];
            z[1] = self.b[2] * x - self.a2 * y;
            *v = y;
        }
    }
}

fn run_cascade(sections: &[Biquad], data: &mut [f64]) {
    let Some(&first) = data.first() else { return };
    let mut level = first;
    for s in sections {
        let zi = s.step_state();
        s.run(data, [zi[0] * level, zi[1] * level]);
        level *= s.dc_gain();
    }
}

fn filtfilt(sections: &[Biquad], x: &[f64], padlen: usize) -> Vec<f64> {
    let n = x.len();
    let pad = padlen.min(n.saturating_sub(1));
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

    run_cascade(sections, &mut ext);
    ext.reverse();
    run_cascade(sections, &mut ext);
    ext.reverse();
    ext[pad..pad + n].to_vec()
}

/// Band-pass every channel to `[lo, hi]` Hz without phase distortion.
pub fn bandpass_filter(r: &Recording, lo: f64, hi: f64) -> Result<Recording> {
    let fs = r.fs();
    let nyquist = fs / 2.0;
    if !(lo > 0.0 && lo < hi && hi < nyquist) {
        return Err(Error::Parameter(format!(
            "band-pass needs 0 < lo < hi < fs/2, got lo={lo}, hi={hi}, fs={fs}"
        )));
    }
    let mut sections = Vec::with_capacity(4);
    for q in BUTTER4_Q {
        sections.push(Biquad::highpass(lo, fs, q));
    }
    for q in BUTTER4_Q {
        sections.push(Biquad::lowpass(hi, fs, q));
    }
    // Long enough for the high-pass transient to decay.
    let padlen = (3.0 * fs / lo).ceil() as usize;

    let (d, t0) = r.samples().dim();
    let mut out = Array2::zeros((d, t0));
    for (src, mut dst) in r.samples().rows().into_iter().zip(out.rows_mut()) {
        let row: Vec<f64> = src.to_vec();
        let filtered = filtfilt(&sections, &row, padlen);
        dst.iter_mut().zip(filtered).for_each(|(o, v)| *o = v);
    }
    Recording::new(out, fs, r.channel_names().to_vec())
}
