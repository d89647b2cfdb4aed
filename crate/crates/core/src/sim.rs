//! Simulation with known ground truth.
//!
//! Each sample starts from a `d × (T + p)` base matrix that is
//! standardized and split into `X` (middle `T` columns) and `Z` (flanks).
//! The true weights are a channel softmax of hand-picked statistics
//! `ω*_k(X_l)`, drawn from an eight-function bank, and the true outcome
//! probability is `g*(S) = sigmoid(β₁ᵀ S β₂ + β₀)` with `S` aggregated
//! under the true weights.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use ndarray::{s, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::metrics::{mae_alpha, mae_g};
use crate::model::{aggregate, sigmoid, AggregateMap, ChannelWeights, Prediction};
use crate::signal::{split_window, standardize_segment, Recording};

/// Floor for arguments of `ln` in the statistic bank.
pub const LN_FLOOR: f64 = 1e-12;
pub const BANK_SIZE: usize = 8;
/// AR(2) coefficients of the synthetic base signal.
pub const AR_COEFFS: [f64; 2] = [1.3, -0.4];
const AR_BURN_IN: usize = 200;

#[derive(Debug, Clone)]
pub enum BaseSource {
    /// Independent AR(2) channels with unit-variance innovations.
    Synthetic,
    /// Random windows of the first `d` channels of a recording.
    Recording(Arc<Recording>),
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub d: usize,
    pub t: usize,
    pub p: usize,
    pub n: usize,
    /// Seeds the per-sample random streams.
    pub seed: u64,
    pub base: BaseSource,
    /// When not 1, one random channel of every base matrix is scaled by
    /// this factor before standardization.
    pub focal_gain: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            d: 22,
            t: 64,
            p: 64,
            n: 2048,
            seed: 0,
            base: BaseSource::Synthetic,
            focal_gain: 1.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.t == 0 || self.p == 0 {
            return Err(Error::Parameter("d, T and p must be positive".into()));
        }
        if !self.p.is_multiple_of(2) {
            return Err(Error::Parameter(format!("p must be even, got {}", self.p)));
        }
        if self.n == 0 {
            return Err(Error::Parameter("sample count n must be at least 1".into()));
        }
        if !(self.focal_gain.is_finite() && self.focal_gain > 0.0) {
            return Err(Error::Parameter("focal_gain must be positive".into()));
        }
        if let BaseSource::Recording(r) = &self.base {
            if r.n_channels() < self.d {
                return Err(Error::Data(format!(
                    "base recording has {} channels, simulation needs {}",
                    r.n_channels(),
                    self.d
                )));
            }
            if r.n_samples() < self.t + self.p {
                return Err(Error::Data(format!(
                    "base recording has {} samples, windows need {}",
                    r.n_samples(),
                    self.t + self.p
                )));
            }
        }
        Ok(())
    }
}

/// Ground truth shared by every sample of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTruth {
    /// Bank index of `ω*_k`, one per `k = 0..p`.
    pub omega_choice: Vec<usize>,
    pub beta0: f64,
    /// Length `T`.
    pub beta1: Vec<f64>,
    /// Length `p`.
    pub beta2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSample {
    pub sample: Sample,
    pub alpha_star: Array2<f64>,
    pub g_star: f64,
}

fn ar2_channel(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    let [a1, a2] = AR_COEFFS;
    let (mut prev1, mut prev2) = (0.0, 0.0);
    let mut out = Vec::with_capacity(len);
    for i in 0..AR_BURN_IN + len {
        let e: f64 = rng.sample(StandardNormal);
        let v = a1 * prev1 + a2 * prev2 + e;
        prev2 = prev1;
        prev1 = v;
        if i >= AR_BURN_IN {
            out.push(v);
        }
    }
    out
}

/// One long synthetic AR(2) channel; exposed for texture checks.
pub fn synthetic_channel(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    ar2_channel(len, rng)
}

/// A standardized `d × (T + p)` base matrix.
pub fn gen_base_matrix(config: &SimConfig, rng: &mut impl Rng) -> Result<Array2<f64>> {
    config.validate()?;
    let width = config.t + config.p;
    let mut m = match &config.base {
        BaseSource::Synthetic => {
            let mut m = Array2::zeros((config.d, width));
            for mut row in m.rows_mut() {
                for (dst, v) in row.iter_mut().zip(ar2_channel(width, rng)) {
                    *dst = v;
                }
            }
            m
        }
        BaseSource::Recording(r) => {
            let start = rng.gen_range(0..=r.n_samples() - width);
            r.samples()
                .slice(s![..config.d, start..start + width])
                .to_owned()
        }
    };
    if config.focal_gain != 1.0 {
        let c = rng.gen_range(0..config.d);
        m.row_mut(c).mapv_inplace(|v| v * config.focal_gain);
    }
    Ok(standardize_segment(m.view()))
}

/// Evaluates bank function `index` on one channel:
///
/// 0. `ln σ²`, 1. `−ln σ²`, 2. skewness `Σz³/T`, 3. its negative,
/// 4. excess kurtosis `Σz⁴/T − 3`, 5. its negative,
/// 6. `ln Σ|x sin x|`, 7. `ln Σ|x cos x|`,
///
/// with population moments and `ln` arguments floored at [`LN_FLOOR`].
pub fn omega_star(index: usize, x: &[f64]) -> Result<f64> {
    if index >= BANK_SIZE {
        return Err(Error::Parameter(format!("bank index {index} out of range 0..{BANK_SIZE}")));
    }
    Ok(bank_stats(x)[index])
}

fn bank_stats(x: &[f64]) -> [f64; BANK_SIZE] {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| v * v).sum::<f64>() / n - mean * mean;
    let sd = var.max(LN_FLOOR).sqrt();
    let (mut m3, mut m4, mut sin_sum, mut cos_sum) = (0.0, 0.0, 0.0, 0.0);
    for &v in x {
        let z = (v - mean) / sd;
        let z2 = z * z;
        m3 += z2 * z;
        m4 += z2 * z2;
        sin_sum += (v * v.sin()).abs();
        cos_sum += (v * v.cos()).abs();
    }
    let log_var = var.max(LN_FLOOR).ln();
    let skew = m3 / n;
    let kurt = m4 / n - 3.0;
    [
        log_var,
        -log_var,
        skew,
        -skew,
        kurt,
        -kurt,
        sin_sum.max(LN_FLOOR).ln(),
        cos_sum.max(LN_FLOOR).ln(),
    ]
}

/// Draws the bank choices and coefficients. Draw order: `p` bank
/// indices, then `β₁`, `β₂`, `β₀`.
pub fn build_truth(config: &SimConfig, rng: &mut impl Rng) -> Result<SimTruth> {
    config.validate()?;
    let omega_choice = (0..config.p).map(|_| rng.gen_range(0..BANK_SIZE)).collect();
    let beta1 = (0..config.t).map(|_| rng.sample(StandardNormal)).collect();
    let beta2 = (0..config.p).map(|_| rng.sample(StandardNormal)).collect();
    let beta0 = rng.sample(StandardNormal);
    Ok(SimTruth {
        omega_choice,
        beta0,
        beta1,
        beta2,
    })
}

impl SimTruth {
    pub fn p(&self) -> usize {
        self.omega_choice.len()
    }

    pub fn t(&self) -> usize {
        self.beta1.len()
    }

    /// `ω*` values, `d × p`.
    pub fn omega_values(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let stats: Vec<[f64; BANK_SIZE]> = x
            .rows()
            .into_iter()
            .map(|row| bank_stats(&row.to_vec()))
            .collect();
        Array2::from_shape_fn((x.nrows(), self.p()), |(l, k)| stats[l][self.omega_choice[k]])
    }

    pub fn alpha_star(&self, x: ArrayView2<'_, f64>) -> ChannelWeights {
        crate::model::compute_alpha(self.omega_values(x).view())
    }

    /// `β₁ᵀ S β₂ + β₀`.
    pub fn logit(&self, s: &AggregateMap) -> Result<f64> {
        let m = s.matrix();
        if m.dim() != (self.t(), self.p()) {
            return Err(Error::Dimension(format!(
                "S is {:?}, truth expects {}x{}",
                m.dim(),
                self.t(),
                self.p()
            )));
        }
        let b1 = ndarray::ArrayView1::from(&self.beta1[..]);
        let b2 = ndarray::ArrayView1::from(&self.beta2[..]);
        Ok(b1.dot(&m.dot(&b2)) + self.beta0)
    }

    /// `g*(S)`, kept strictly inside `(0, 1)`.
    pub fn g_star(&self, s: &AggregateMap) -> Result<f64> {
        Ok(sigmoid(self.logit(s)?).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
    }
}

fn sample_one(config: &SimConfig, truth: &SimTruth, index: usize) -> Result<SimSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    let mut base = gen_base_matrix(config, &mut rng)?;
    // stored datasets are f32; quantize now so persisted data reproduces the truth exactly
    base.mapv_inplace(|v| v as f32 as f64);
    let (x, z) = split_window(base.view(), config.t, config.p)?;
    let alpha = truth.alpha_star(x.view());
    let s = aggregate(x.view(), z.view(), &alpha)?;
    let g_star = truth.g_star(&s)?;
    let y = u8::from(rng.gen::<f64>() < g_star);
    Ok(SimSample {
        sample: Sample { x, z, y },
        alpha_star: alpha.into_matrix(),
        g_star,
    })
}

/// Generates `config.n` samples. Sample `i` draws from its own stream
/// `(config.seed, i)`, so the output does not depend on thread count.
pub fn sample_dataset(config: &SimConfig, truth: &SimTruth) -> Result<Vec<SimSample>> {
    config.validate()?;
    if truth.t() != config.t || truth.p() != config.p {
        return Err(Error::Dimension(format!(
            "truth is for T={}, p={}, config has T={}, p={}",
            truth.t(),
            truth.p(),
            config.t,
            config.p
        )));
    }
    (0..config.n)
        .into_par_iter()
        .map(|i| sample_one(config, truth, i))
        .collect()
}

/// `MAE(α*)` and `MAE(g*)`, the latter comparing `g*` and `ĝ` at the
/// estimated aggregate `S(α̂)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryErrors {
    pub mae_alpha: f64,
    pub mae_g: f64,
}

pub fn recovery_errors(
    truth: &SimTruth,
    pairs: &[(ArrayView2<'_, f64>, ArrayView2<'_, f64>)],
    preds: &[Prediction],
) -> Result<RecoveryErrors> {
    if pairs.len() != preds.len() {
        return Err(Error::Dimension(format!(
            "{} segments but {} predictions",
            pairs.len(),
            preds.len()
        )));
    }
    let mut alpha_true = Vec::with_capacity(pairs.len());
    let mut alpha_est = Vec::with_capacity(pairs.len());
    let mut g_true = Vec::with_capacity(pairs.len());
    for ((x, z), pred) in pairs.iter().zip(preds) {
        alpha_true.push(truth.alpha_star(*x).into_matrix());
        alpha_est.push(pred.alpha.matrix().clone());
        g_true.push(truth.g_star(&aggregate(*x, *z, &pred.alpha)?)?);
    }
    let g_est: Vec<f64> = preds.iter().map(|p| p.prob).collect();
    Ok(RecoveryErrors {
        mae_alpha: mae_alpha(&alpha_true, &alpha_est)?,
        mae_g: mae_g(&g_true, &g_est)?,
    })
}

pub fn to_dataset(t: usize, p: usize, samples: &[SimSample]) -> Result<Dataset> {
    Dataset::new(t, p, samples.iter().map(|s| s.sample.clone()).collect())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TruthFile {
    seed: u64,
    d: usize,
    t: usize,
    p: usize,
    omega_choice: Vec<usize>,
    /// Base64 of little-endian f64 values.
    beta0: String,
    beta1: String,
    beta2: String,
    g_star: String,
}

fn f64s_to_b64(v: &[f64]) -> String {
    let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
    B64.encode(bytes)
}

fn b64_to_f64s(s: &str, what: &str) -> Result<Vec<f64>> {
    let bytes = B64
        .decode(s)
        .map_err(|e| Error::Corrupt(format!("truth {what}: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Corrupt(format!("truth {what}: length {} not a multiple of 8", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Truth sidecar contents.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthRecord {
    pub seed: u64,
    pub d: usize,
    pub truth: SimTruth,
    pub g_star: Vec<f64>,
}

impl TruthRecord {
    pub fn to_toml(&self) -> Result<String> {
        let file = TruthFile {
            seed: self.seed,
            d: self.d,
            t: self.truth.t(),
            p: self.truth.p(),
            omega_choice: self.truth.omega_choice.clone(),
            beta0: f64s_to_b64(&[self.truth.beta0]),
            beta1: f64s_to_b64(&self.truth.beta1),
            beta2: f64s_to_b64(&self.truth.beta2),
            g_star: f64s_to_b64(&self.g_star),
        };
        toml::to_string(&file).map_err(|e| Error::Config(format!("truth sidecar: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let f: TruthFile =
            toml::from_str(text).map_err(|e| Error::Corrupt(format!("truth sidecar: {e}")))?;
        let beta0 = b64_to_f64s(&f.beta0, "beta0")?;
        let truth = SimTruth {
            omega_choice: f.omega_choice,
            beta0: *beta0
                .first()
                .ok_or_else(|| Error::Corrupt("truth beta0 is empty".into()))?,
            beta1: b64_to_f64s(&f.beta1, "beta1")?,
            beta2: b64_to_f64s(&f.beta2, "beta2")?,
        };
        if truth.t() != f.t || truth.p() != f.p || truth.beta2.len() != f.p {
            return Err(Error::Corrupt("truth vector lengths disagree with T and p".into()));
        }
        if truth.omega_choice.iter().any(|&i| i >= BANK_SIZE) {
            return Err(Error::Corrupt("truth bank index out of range".into()));
        }
        Ok(Self {
            seed: f.seed,
            d: f.d,
            truth,
            g_star: b64_to_f64s(&f.g_star, "g_star")?,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small() -> SimConfig {
        SimConfig {
            d: 4,
            t: 8,
            p: 4,
            n: 16,
            seed: 3,
            ..SimConfig::default()
        }
    }

    #[test]
    fn bank_examples() {
        let x = [-1.0, 1.0, -1.0, 1.0];
        assert_abs_diff_eq!(omega_star(2, &x).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(omega_star(4, &x).unwrap(), -2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(omega_star(5, &x).unwrap(), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(omega_star(0, &x).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(omega_star(6, &[1.0, 1.0]).unwrap(), 0.520_543, epsilon = 1e-6);
        assert_abs_diff_eq!(
            omega_star(7, &[1.0, 1.0]).unwrap(),
            (2.0 * 1f64.cos()).ln(),
            epsilon = 1e-15
        );
        assert!(omega_star(8, &x).is_err());
    }

    #[test]
    fn bank_handles_constant_input() {
        for i in 0..BANK_SIZE {
            assert!(omega_star(i, &[0.0; 6]).unwrap().is_finite());
        }
    }

    #[test]
    fn base_matrix_is_reproducible_and_centered() {
        let c = small();
        let a = gen_base_matrix(&c, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = gen_base_matrix(&c, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), (4, 12));
        for row in a.rows() {
            assert!(row.mean().unwrap().abs() < 1e-9);
        }
    }

    #[test]
    fn truth_shapes_and_determinism() {
        let c = SimConfig::default();
        let t1 = build_truth(&c, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let t2 = build_truth(&c, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(t1.omega_choice.len(), 64);
        assert_eq!(t1.beta1.len(), 64);
        assert!(t1.omega_choice.iter().all(|&i| i < BANK_SIZE));
    }

    #[test]
    fn single_function_truth_is_softmax_of_that_statistic() {
        let truth = SimTruth {
            omega_choice: vec![0],
            beta0: 0.0,
            beta1: vec![0.0; 4],
            beta2: vec![0.0],
        };
        let x = ndarray::array![[1.0, -1.0, 1.0, -1.0], [2.0, -2.0, 2.0, -2.0]];
        let a = truth.alpha_star(x.view());
        // variances 1 and 4
        assert_abs_diff_eq!(a.matrix()[[0, 0]], 1.0 / 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a.matrix()[[1, 0]], 4.0 / 5.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_coefficients_give_half() {
        let c = small();
        let truth = SimTruth {
            omega_choice: vec![0, 2, 4, 6],
            beta0: 0.0,
            beta1: vec![0.0; 8],
            beta2: vec![0.0; 4],
        };
        let data = sample_dataset(&c, &truth).unwrap();
        assert!(data.iter().all(|s| s.g_star == 0.5));
    }

    #[test]
    fn dataset_is_bitwise_reproducible() {
        let c = small();
        let truth = build_truth(&c, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let a = sample_dataset(&c, &truth).unwrap();
        let b = sample_dataset(&c, &truth).unwrap();
        assert_eq!(a, b);
        for s in &a {
            assert!(s.g_star > 0.0 && s.g_star < 1.0);
            for col in s.alpha_star.columns() {
                assert!((col.sum() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn synthetic_lag1_autocorrelation() {
        let x = synthetic_channel(100_000, &mut ChaCha8Rng::seed_from_u64(17));
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let c0: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
        let c1: f64 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
        // Yule-Walker: ρ₁ = a₁ / (1 − a₂)
        let expected = AR_COEFFS[0] / (1.0 - AR_COEFFS[1]);
        assert!((c1 / c0 - expected).abs() < 0.02, "{} vs {expected}", c1 / c0);
    }

    #[test]
    fn label_mean_tracks_g_star() {
        let c = SimConfig {
            d: 4,
            t: 16,
            p: 16,
            n: 10_000,
            seed: 21,
            ..SimConfig::default()
        };
        let truth = build_truth(&c, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let data = sample_dataset(&c, &truth).unwrap();
        let n = data.len() as f64;
        let mean_y = data.iter().map(|s| s.sample.y as f64).sum::<f64>() / n;
        let mean_g = data.iter().map(|s| s.g_star).sum::<f64>() / n;
        assert!((mean_y - mean_g).abs() < 3.0 * (0.25 / n).sqrt());
    }

    #[test]
    fn truth_sidecar_roundtrip() {
        let c = small();
        let truth = build_truth(&c, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let rec = TruthRecord {
            seed: 2,
            d: 4,
            truth,
            g_star: vec![0.25, 1e-300, 0.999_999_999],
        };
        assert_eq!(TruthRecord::from_toml(&rec.to_toml().unwrap()).unwrap(), rec);
    }

    #[test]
    fn invalid_configs() {
        assert!(SimConfig { n: 0, ..small() }.validate().is_err());
        assert!(SimConfig { p: 3, ..small() }.validate().is_err());
        let short = Recording::with_default_names(Array2::zeros((4, 5)), 100.0).unwrap();
        let c = SimConfig {
            base: BaseSource::Recording(Arc::new(short)),
            ..small()
        };
        assert!(matches!(c.validate(), Err(Error::Data(_))));
    }

    #[test]
    fn recording_source_slices_windows() {
        let rec = Recording::with_default_names(
            Array2::from_shape_fn((5, 100), |(l, t)| ((l + 1) * t) as f64),
            100.0,
        )
        .unwrap();
        let c = SimConfig {
            base: BaseSource::Recording(Arc::new(rec)),
            ..small()
        };
        let m = gen_base_matrix(&c, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(m.dim(), (4, 12));
    }
}
