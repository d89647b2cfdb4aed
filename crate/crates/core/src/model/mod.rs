//! The nested channel-attention model.
//!
//! Every channel `l` of a segment `X` (`d × T`) is mapped by a shared
//! network to `p` scores `ω(X_l)`. A softmax across channels turns each of
//! the `p` score columns into channel weights `α` that sum to one, and the
//! weighted aggregate
//!
//! ```text
//! S = Σ_l [ X_l α_lᵀ + (α_lᵀ Z_l) 1_T 1_pᵀ ]          (T × p)
//! ```
//!
//! is the only thing the outcome network `g` sees. The logit `g(S)` gives
//! the spike probability `sigmoid(g(S))`. Because `S` is a sum over
//! channels and `ω` is shared, the model accepts any channel count and
//! ignores channel order.

mod attention;
mod forward;
pub mod io;
pub mod net;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use attention::{
    aggregate, channel_importance, compute_alpha, top_channels, AggregateMap, ChannelWeights,
};
pub use forward::{
    g_forward, loss_and_grad, nll_loss, omega_forward, predict_batch, predict_proba, sigmoid,
    softplus, Prediction,
};
pub use io::{load_model, save_model, ModelMeta};
pub use net::{ConvNet, NetSpec};

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyper {
    /// Segment length.
    pub t: usize,
    /// Context length, also the number of weight functions.
    pub p: usize,
    pub omega: NetSpec,
    pub g: NetSpec,
}

impl Hyper {
    pub fn new(t: usize, p: usize) -> Self {
        Self {
            t,
            p,
            omega: NetSpec::default(),
            g: NetSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t == 0 || self.p == 0 {
            return Err(Error::Parameter(format!(
                "T and p must be positive, got T={}, p={}",
                self.t, self.p
            )));
        }
        for (name, spec) in [("omega", &self.omega), ("g", &self.g)] {
            if spec.kernel == 0 || spec.stride == 0 || spec.widths.contains(&0) {
                return Err(Error::Parameter(format!(
                    "{name} network needs positive kernel, stride and widths"
                )));
            }
        }
        Ok(())
    }
}

/// All learnable parameters. The `ω` network sees one channel at a time
/// (length `T`, one feature) and emits `p` scores; the `g` network reads
/// `S` as a length-`T` sequence of `p` features and emits one logit.
#[derive(Debug, Clone, PartialEq)]
pub struct NdlParams {
    pub hyper: Hyper,
    pub omega: ConvNet,
    pub g: ConvNet,
}

impl NdlParams {
    /// Seeded initialization. Values are rounded to `f32` so they survive
    /// serialization unchanged.
    pub fn init(hyper: Hyper, seed: u64) -> Result<Self> {
        hyper.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let omega = ConvNet::init(&hyper.omega, hyper.t, 1, hyper.p, &mut rng);
        let g = ConvNet::init(&hyper.g, hyper.t, hyper.p, 1, &mut rng);
        Ok(Self { hyper, omega, g })
    }

    pub fn zeros(hyper: Hyper) -> Result<Self> {
        hyper.validate()?;
        let omega = ConvNet::zeros(&hyper.omega, hyper.t, 1, hyper.p);
        let g = ConvNet::zeros(&hyper.g, hyper.t, hyper.p, 1);
        Ok(Self { hyper, omega, g })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            hyper: self.hyper.clone(),
            omega: self.omega.zeros_like(),
            g: self.g.zeros_like(),
        }
    }

    pub fn t(&self) -> usize {
        self.hyper.t
    }

    pub fn p(&self) -> usize {
        self.hyper.p
    }

    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = self.omega.tensors("omega");
        out.extend(self.g.tensors("g"));
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.omega.slices_mut();
        out.extend(self.g.slices_mut());
        out
    }

    pub fn n_params(&self) -> usize {
        self.omega.n_params() + self.g.n_params()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, _, v)| v.iter().all(|x| x.is_finite()))
    }

    /// Rounds every parameter to the nearest `f32`.
    pub fn round_to_f32(&mut self) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }
}
