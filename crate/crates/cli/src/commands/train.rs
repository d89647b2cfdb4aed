use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::{ensure, Context, Result};
use ndl::model::{save_model, Hyper, ModelMeta, NetSpec};
use ndl::train::{fit, FitOptions, Init, TrainConfig};

use super::{check_input, check_parent, load_dataset, load_params};
use crate::config::{required, RunConfig};

#[derive(clap::Args)]
pub struct Args {
    /// Training dataset [config: train.data]
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output model path; hyperparameters go to <MODEL>.toml [config: train.model]
    #[arg(long)]
    model: Option<PathBuf>,
    /// History CSV [config: train.history, default <MODEL>.history.csv]
    #[arg(long)]
    history: Option<PathBuf>,
    /// [config: train.epochs, default 100]
    #[arg(long)]
    epochs: Option<usize>,
    /// [config: train.batch_size, default 64]
    #[arg(long)]
    batch_size: Option<usize>,
    /// Adam step size [config: train.learning_rate, default 1e-3]
    #[arg(long)]
    learning_rate: Option<f64>,
    /// L2 penalty on the channel-weight network [config: train.omega_decay, default 0]
    #[arg(long)]
    omega_decay: Option<f64>,
    /// Held-out share for validation [config: train.val_fraction, default 0.2]
    #[arg(long)]
    val_fraction: Option<f64>,
    /// Split, shuffling and initialization seed [config: seed; env NDL_SEED]
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint period in epochs, 0 for none [config: train.checkpoint_every]
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// [config: train.checkpoint_dir, default the model's directory]
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
    /// Continue from a saved model or checkpoint [config: train.resume]
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Conv widths of the channel-weight network, comma separated [config: model.omega_widths]
    #[arg(long, value_delimiter = ',')]
    omega_widths: Option<Vec<usize>>,
    /// Conv widths of the outcome network; empty for a linear read-out [config: model.g_widths]
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    g_widths: Option<Vec<usize>>,
    /// [config: model.kernel, default 3]
    #[arg(long)]
    kernel: Option<usize>,
    /// [config: model.stride, default 2]
    #[arg(long)]
    stride: Option<usize>,
}

pub fn run(a: Args, cfg: &RunConfig) -> Result<()> {
    let s = &cfg.train;
    let m = &cfg.model;
    let data_path = required(a.data, s.data.clone(), "--data")?;
    let model_path = required(a.model, s.model.clone(), "--model")?;
    check_input(&data_path)?;
    check_parent(&model_path)?;
    let history_path = a.history.or_else(|| s.history.clone()).unwrap_or_else(|| {
        let mut p = model_path.as_os_str().to_owned();
        p.push(".history.csv");
        PathBuf::from(p)
    });
    check_parent(&history_path)?;
    let defaults = TrainConfig::default();
    let config = TrainConfig {
        epochs: a.epochs.or(s.epochs).unwrap_or(defaults.epochs),
        batch_size: a.batch_size.or(s.batch_size).unwrap_or(defaults.batch_size),
        learning_rate: a.learning_rate.or(s.learning_rate).unwrap_or(defaults.learning_rate),
        omega_decay: a.omega_decay.or(s.omega_decay).unwrap_or(defaults.omega_decay),
        seed: cfg.seed(a.seed)?,
        val_fraction: a.val_fraction.or(s.val_fraction).unwrap_or(defaults.val_fraction),
        checkpoint_every: a.checkpoint_every.or(s.checkpoint_every).unwrap_or(0),
    };
    let checkpoint_dir = a.checkpoint_dir.or_else(|| s.checkpoint_dir.clone()).unwrap_or_else(|| {
        model_path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("."))
    });
    if config.checkpoint_every > 0 {
        ensure!(checkpoint_dir.is_dir(), "checkpoint directory {} does not exist", checkpoint_dir.display());
    }
    let dataset = load_dataset(&data_path)?;

    let (init, start_epoch) = match a.resume.or_else(|| s.resume.clone()) {
        Some(path) => {
            let (params, meta) = load_params(&path)?;
            (Init::Params(Box::new(params)), meta.epochs_completed)
        }
        None => {
            let base = NetSpec::default();
            let spec = |widths: Option<Vec<usize>>| NetSpec {
                widths: widths.unwrap_or_else(|| base.widths.clone()),
                kernel: a.kernel.or(m.kernel).unwrap_or(base.kernel),
                stride: a.stride.or(m.stride).unwrap_or(base.stride),
            };
            let mut hyper = Hyper::new(dataset.t, dataset.p);
            hyper.omega = spec(a.omega_widths.or_else(|| m.omega_widths.clone()));
            hyper.g = spec(a.g_widths.or_else(|| m.g_widths.clone()));
            (Init::Seed { hyper, seed: config.seed }, 0)
        }
    };
    let options = FitOptions {
        checkpoint_dir: (config.checkpoint_every > 0).then_some(checkpoint_dir),
        start_epoch,
    };
    let out = fit(&dataset, &config, init, &options)?;

    let mut meta = ModelMeta::new(out.params.hyper.clone());
    meta.epochs_completed = start_epoch + out.history.records.len();
    meta.n_train = out.train_idx.len();
    meta.train_config_digest = config.digest();
    save_model(&out.params, &meta, &model_path)
        .with_context(|| format!("writing model {}", model_path.display()))?;
    let file = File::create(&history_path)
        .with_context(|| format!("writing history {}", history_path.display()))?;
    out.history.write_csv(&mut BufWriter::new(file))?;

    let last = out.history.records.last().expect("at least one epoch");
    println!(
        "trained {} epochs on {} samples ({} validation); best epoch {} val_loss {:.5}; last train_loss {:.5}",
        out.history.records.len(),
        out.train_idx.len(),
        out.val_idx.len(),
        out.history.best_epoch,
        out.history.best_val_loss,
        last.train_loss
    );
    println!("wrote {} and {}", model_path.display(), history_path.display());
    Ok(())
}
