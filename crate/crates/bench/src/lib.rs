//! Shared fixtures for the benchmarks.

use ndarray::Array2;
use ndl::model::{Hyper, NdlParams};
use ndl::Recording;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Default-architecture parameters for `T = p = 64`.
pub fn default_params(seed: u64) -> NdlParams {
    NdlParams::init(Hyper::new(64, 64), seed).expect("default hyperparameters are valid")
}

/// Uniform noise matrix, reproducible from `seed`.
pub fn noise(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-1.0..1.0))
}

pub fn noise_recording(channels: usize, samples: usize, seed: u64) -> Recording {
    Recording::with_default_names(noise(channels, samples, seed), 250.0).expect("noise is finite")
}

/// Scores in `[0, 1)` with roughly balanced labels.
pub fn scored_labels(n: usize, seed: u64) -> (Vec<f64>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
    let scores = labels.iter().map(|&y| 0.3 * y as f64 + 0.7 * rng.gen::<f64>()).collect();
    (scores, labels)
}
