//! Minibatch training of [`NdlParams`] on the negative log-likelihood.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{classification_report, MetricReport};
use crate::model::{loss_and_grad, ConvNet, nll_loss, predict_batch, save_model, Hyper, ModelMeta, NdlParams};

pub const HISTORY_HEADER: &str = "epoch,train_loss,val_loss,sens,prec,f1,prauc,auc";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub val_fraction: f64,
    /// Save a checkpoint every this many epochs; 0 disables checkpoints.
    pub checkpoint_every: usize,
    /// L2 penalty on the channel-weight network parameters.
    pub omega_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 0,
            val_fraction: 0.2,
            checkpoint_every: 0,
            omega_decay: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Parameter("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch_size must be at least 1".into()));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Parameter(format!(
                "val_fraction must lie in (0, 1), got {}",
                self.val_fraction
            )));
        }
        if !(self.omega_decay.is_finite() && self.omega_decay >= 0.0) {
            return Err(Error::Parameter("omega_decay must be finite and non-negative".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Parameter("learning_rate must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical TOML form.
    pub fn digest(&self) -> String {
        let text = toml::to_string(self).expect("plain struct serializes");
        let hash = Sha256::digest(text.as_bytes());
        hash.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

/// Adam with the usual defaults. Parameters are rounded to `f32` after
/// every step so that saved models reload bit for bit.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn step(&mut self, params: &mut NdlParams, grads: &mut NdlParams) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let mut k = 0;
        for (ps, gs) in params.slices_mut().into_iter().zip(grads.slices_mut()) {
            for (p, &g) in ps.iter_mut().zip(gs.iter()) {
                let m = &mut self.m[k];
                let v = &mut self.v[k];
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let update = self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
                *p = ((*p - update) as f32) as f64;
                k += 1;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val: MetricReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub initial_train_loss: f64,
    pub initial_val_loss: f64,
    pub records: Vec<EpochRecord>,
    /// Epoch whose parameters were returned; the start epoch means the
    /// initial ones.
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

impl TrainHistory {
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "{HISTORY_HEADER}")?;
        let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |v| v.to_string());
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.epoch,
                r.train_loss,
                r.val_loss,
                r.val.sens,
                r.val.prec,
                r.val.f1,
                opt(r.val.prauc),
                opt(r.val.auc)
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    /// Where periodic checkpoints go; `None` disables them.
    pub checkpoint_dir: Option<PathBuf>,
    /// Epochs already behind the initial parameters; numbering continues
    /// from here.
    pub start_epoch: usize,
}

/// Starting point for [`fit`].
#[derive(Debug, Clone)]
pub enum Init {
    Seed { hyper: Hyper, seed: u64 },
    Params(Box<NdlParams>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub scores: Vec<f64>,
    pub report: MetricReport,
}

/// Scores `dataset` and computes every classification metric.
pub fn evaluate(params: &NdlParams, dataset: &Dataset, threshold: f64) -> Result<Evaluation> {
    if dataset.is_empty() {
        return Err(Error::Data("cannot evaluate on an empty dataset".into()));
    }
    let pairs = dataset.pairs();
    let labels = dataset.labels();
    let preds = predict_batch(params, &pairs)?;
    let scores: Vec<f64> = preds.iter().map(|p| p.prob).collect();
    let loss = nll_loss(params, &pairs, &labels)?;
    let report = classification_report(&scores, &labels, threshold)?;
    Ok(Evaluation { loss, scores, report })
}

/// Seeded train/validation index split; validation gets
/// `round(val_fraction · n)` samples, at least one and leaving at least one.
pub fn split_indices(n: usize, val_fraction: f64, rng: &mut ChaCha8Rng) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::Data(format!("need at least 2 samples to split, got {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let n_val = ((val_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let train = idx.split_off(n_val);
    Ok((train, idx))
}

pub struct FitOutput {
    /// Parameters of the best epoch by validation loss.
    pub params: NdlParams,
    /// Parameters after the last epoch.
    pub final_params: NdlParams,
    pub history: TrainHistory,
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
}

fn add_decay(grads: &mut ConvNet, params: &ConvNet, lambda: f64) {
    let values: Vec<Vec<f64>> = params.tensors("").into_iter().map(|(_, _, v)| v.to_vec()).collect();
    for (g, p) in grads.slices_mut().into_iter().zip(values) {
        for (g, p) in g.iter_mut().zip(p) {
            *g += lambda * p;
        }
    }
}

pub fn checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("checkpoint-{epoch:04}.ndlm"))
}

/// Trains from `init` and returns the parameters with the lowest
/// validation loss seen, including the starting point.
pub fn fit(
    dataset: &Dataset,
    config: &TrainConfig,
    init: Init,
    options: &FitOptions,
) -> Result<FitOutput> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Data("training dataset is empty".into()));
    }
    let mut params = match init {
        Init::Seed { hyper, seed } => NdlParams::init(hyper, seed)?,
        Init::Params(p) => *p,
    };
    if params.t() != dataset.t || params.p() != dataset.p {
        return Err(Error::Dimension(format!(
            "model has T={}, p={}, dataset has T={}, p={}",
            params.t(),
            params.p(),
            dataset.t,
            dataset.p
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (train_idx, val_idx) = split_indices(dataset.len(), config.val_fraction, &mut rng)?;
    let train = dataset.subset(&train_idx);
    let val = dataset.subset(&val_idx);
    let pos = train.positives();
    if pos == 0 || pos == train.len() {
        return Err(Error::Validation(format!(
            "training split has a single class ({pos} positives of {})",
            train.len()
        )));
    }
    let train_pairs = train.pairs();
    let train_labels = train.labels();

    let initial_train_loss = nll_loss(&params, &train_pairs, &train_labels)?;
    let initial_val_loss = evaluate(&params, &val, 0.5)?.loss;
    let first = options.start_epoch;
    let mut best = (first, initial_val_loss, params.clone());
    let mut adam = Adam::new(params.n_params(), config.learning_rate);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut records = Vec::with_capacity(config.epochs);

    for epoch in first + 1..=first + config.epochs {
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<_> = chunk.iter().map(|&i| train_pairs[i]).collect();
            let labels: Vec<u8> = chunk.iter().map(|&i| train_labels[i]).collect();
            let (loss, mut grads) = loss_and_grad(&params, &batch, &labels)?;
            if config.omega_decay > 0.0 {
                add_decay(&mut grads.omega, &params.omega, config.omega_decay);
            }
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("minibatch loss is {loss}"),
                });
            }
            weighted += loss * chunk.len() as f64;
            adam.step(&mut params, &mut grads);
        }
        if !params.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: "parameters became non-finite".into(),
            });
        }
        let eval = evaluate(&params, &val, 0.5)?;
        if !eval.loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: format!("validation loss is {}", eval.loss),
            });
        }
        if eval.loss < best.1 {
            best = (epoch, eval.loss, params.clone());
        }
        records.push(EpochRecord {
            epoch,
            train_loss: weighted / train.len() as f64,
            val_loss: eval.loss,
            val: eval.report,
        });
        if let Some(dir) = &options.checkpoint_dir {
            if config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0 {
                let mut meta = ModelMeta::new(params.hyper.clone());
                meta.epochs_completed = epoch;
                meta.n_train = train.len();
                meta.train_config_digest = config.digest();
                save_model(&params, &meta, checkpoint_path(dir, epoch))?;
            }
        }
    }

    let (best_epoch, best_val_loss, best_params) = best;
    Ok(FitOutput {
        params: best_params,
        final_params: params,
        history: TrainHistory {
            initial_train_loss,
            initial_val_loss,
            records,
            best_epoch,
            best_val_loss,
        },
        train_idx,
        val_idx,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Sample;
    use crate::model::NetSpec;
    use ndarray::Array2;
    use rand::Rng;

    fn tiny_hyper() -> Hyper {
        let mut h = Hyper::new(8, 4);
        h.omega = NetSpec::new(&[4], 3, 2);
        h.g = NetSpec::new(&[4], 3, 2);
        h
    }

    /// Positives carry a larger-amplitude segment.
    fn separable(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..n)
            .map(|i| {
                let y = (i % 2) as u8;
                let scale = if y == 1 { 2.0 } else { 0.5 };
                Sample {
                    x: Array2::from_shape_simple_fn((3, 8), || scale * rng.gen_range(-1.0..1.0)),
                    z: Array2::from_shape_simple_fn((3, 4), || rng.gen_range(-1.0..1.0)),
                    y,
                }
            })
            .collect();
        Dataset::new(8, 4, samples).unwrap()
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let data = separable(20, 1);
        let init = NdlParams::init(tiny_hyper(), 4).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 4,
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let out = fit(&data, &cfg, Init::Params(Box::new(init.clone())), &FitOptions::default()).unwrap();
        assert_eq!(out.params, init);
    }

    #[test]
    fn separable_data_loss_decreases() {
        let data = separable(200, 2);
        let cfg = TrainConfig {
            epochs: 20,
            batch_size: 16,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        };
        let out = fit(&data, &cfg, Init::Seed { hyper: tiny_hyper(), seed: 0 }, &FitOptions::default()).unwrap();
        let h = &out.history;
        assert_eq!(h.records.len(), 20);
        assert!(h.records.last().unwrap().train_loss < h.initial_train_loss);
        assert!(h.best_val_loss <= h.initial_val_loss);
    }

    #[test]
    fn deterministic_history() {
        let data = separable(40, 3);
        let cfg = TrainConfig {
            epochs: 4,
            batch_size: 8,
            seed: 11,
            ..TrainConfig::default()
        };
        let run = || fit(&data, &cfg, Init::Seed { hyper: tiny_hyper(), seed: 1 }, &FitOptions::default()).unwrap();
        let (a, b) = (run(), run());
        assert_eq!(a.history, b.history);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn history_matches_evaluate() {
        let data = separable(40, 5);
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let out = fit(&data, &cfg, Init::Seed { hyper: tiny_hyper(), seed: 2 }, &FitOptions::default()).unwrap();
        assert_eq!(out.history.best_epoch, 1);
        let eval = evaluate(&out.params, &data.subset(&out.val_idx), 0.5).unwrap();
        let rec = &out.history.records[0];
        assert!((eval.loss - rec.val_loss).abs() <= 1e-9);
        assert_eq!(eval.report, rec.val);
    }

    #[test]
    fn single_class_split_rejected() {
        let mut data = separable(10, 4);
        for s in &mut data.samples {
            s.y = 0;
        }
        let r = fit(&data, &TrainConfig::default(), Init::Seed { hyper: tiny_hyper(), seed: 0 }, &FitOptions::default());
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn config_checks_and_digest() {
        assert!(TrainConfig { epochs: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { val_fraction: 1.0, ..TrainConfig::default() }.validate().is_err());
        let a = TrainConfig::default().digest();
        assert_eq!(a.len(), 64);
        assert_ne!(a, TrainConfig { seed: 1, ..TrainConfig::default() }.digest());
    }

    #[test]
    fn overfits_eight_samples() {
        let data = separable(8, 6);
        let mut params = NdlParams::init(tiny_hyper(), 0).unwrap();
        let mut adam = Adam::new(params.n_params(), 1e-2);
        let pairs = data.pairs();
        let labels = data.labels();
        let mut loss = f64::INFINITY;
        for _ in 0..500 {
            let (l, mut g) = loss_and_grad(&params, &pairs, &labels).unwrap();
            loss = l;
            if loss < 0.05 {
                break;
            }
            adam.step(&mut params, &mut g);
        }
        assert!(loss < 0.05, "loss {loss}");
    }

    #[test]
    fn writes_checkpoints_and_csv() {
        let dir = tempfile::tempdir().unwrap();
        let data = separable(20, 7);
        let cfg = TrainConfig {
            epochs: 4,
            batch_size: 5,
            checkpoint_every: 2,
            ..TrainConfig::default()
        };
        let out = fit(&data, &cfg, Init::Seed { hyper: tiny_hyper(), seed: 0 }, &FitOptions { checkpoint_dir: Some(dir.path().to_path_buf()), start_epoch: 0 }).unwrap();
        assert!(checkpoint_path(dir.path(), 2).exists());
        assert!(checkpoint_path(dir.path(), 4).exists());
        let mut buf = Vec::new();
        out.history.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(HISTORY_HEADER));
        assert_eq!(text.lines().count(), 5);
    }
}
