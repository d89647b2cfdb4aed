use ndarray::{s, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use super::attention::{aggregate_raw, softmax_columns, AggregateMap, ChannelWeights};
use super::net::NetCache;
use super::NdlParams;
use crate::error::{dim_check, Error, Result};

/// Largest batch pushed through the networks at once during inference.
const INFER_CHUNK: usize = 128;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eˣ)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Probability kept strictly inside `(0, 1)`.
fn probability(logit: f64) -> f64 {
    sigmoid(logit).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub logit: f64,
    pub prob: f64,
    pub alpha: ChannelWeights,
}

type Pair<'a> = (ArrayView2<'a, f64>, ArrayView2<'a, f64>);

struct BatchForward {
    logits: Vec<f64>,
    alphas: Vec<Array2<f64>>,
    offsets: Vec<usize>,
    caches: Option<(NetCache, NetCache)>,
}

fn check_input(params: &NdlParams, x: ArrayView2<'_, f64>, z: ArrayView2<'_, f64>) -> Result<()> {
    let (t, p) = (params.t(), params.p());
    dim_check(x.nrows() >= 1, || "segment has no channels".into())?;
    dim_check(x.ncols() == t, || format!("segment has {} columns, model expects T = {t}", x.ncols()))?;
    dim_check(z.ncols() == p, || format!("context has {} columns, model expects p = {p}", z.ncols()))?;
    dim_check(z.nrows() == x.nrows(), || {
        format!("segment has {} channels, context has {}", x.nrows(), z.nrows())
    })
}

fn run_forward(params: &NdlParams, batch: &[Pair<'_>], keep_cache: bool) -> Result<BatchForward> {
    if batch.is_empty() {
        return Err(Error::Parameter("empty batch".into()));
    }
    let (t, p) = (params.t(), params.p());
    let mut offsets = Vec::with_capacity(batch.len() + 1);
    offsets.push(0);
    for (x, z) in batch {
        check_input(params, *x, *z)?;
        offsets.push(offsets.last().unwrap() + x.nrows());
    }
    let total = *offsets.last().unwrap();

    let mut omega_in = Array2::zeros((total * t, 1));
    for (i, (x, _)) in batch.iter().enumerate() {
        let rows = offsets[i] * t..offsets[i + 1] * t;
        let flat = x.as_standard_layout();
        omega_in
            .slice_mut(s![rows, 0])
            .assign(&ndarray::ArrayView1::from(flat.as_slice().expect("standard layout")));
    }
    let (omega_out, omega_cache) = params.omega.forward_cached(omega_in.view());

    let mut alphas = Vec::with_capacity(batch.len());
    let mut s_all = Array2::zeros((batch.len() * t, p));
    for (i, (x, z)) in batch.iter().enumerate() {
        let mut alpha = omega_out.slice(s![offsets[i]..offsets[i + 1], ..]).to_owned();
        softmax_columns(&mut alpha);
        let s = aggregate_raw(*x, *z, alpha.view());
        s_all.slice_mut(s![i * t..(i + 1) * t, ..]).assign(&s);
        alphas.push(alpha);
    }
    let (g_out, g_cache) = params.g.forward_cached(s_all.view());
    Ok(BatchForward {
        logits: g_out.column(0).to_vec(),
        alphas,
        offsets,
        caches: keep_cache.then_some((omega_cache, g_cache)),
    })
}

/// The `ω` scores of every channel, `d × p`.
pub fn omega_forward(x: ArrayView2<'_, f64>, params: &NdlParams) -> Result<Array2<f64>> {
    let t = params.t();
    dim_check(x.ncols() == t, || format!("segment has {} columns, model expects T = {t}", x.ncols()))?;
    dim_check(x.nrows() >= 1, || "segment has no channels".into())?;
    let flat = x.as_standard_layout().to_owned();
    let input = flat
        .into_shape_with_order((x.nrows() * t, 1))
        .expect("contiguous");
    Ok(params.omega.forward(input.view()))
}

/// The logit `g(S)`.
pub fn g_forward(s: &AggregateMap, params: &NdlParams) -> Result<f64> {
    let m = s.matrix();
    dim_check(m.dim() == (params.t(), params.p()), || {
        format!("S is {:?}, model expects {}x{}", m.dim(), params.t(), params.p())
    })?;
    Ok(params.g.forward(m.view())[[0, 0]])
}

pub fn predict_proba<'a>(x: ArrayView2<'a, f64>, z: ArrayView2<'a, f64>, params: &NdlParams) -> Result<f64> {
    let fwd = run_forward(params, &[(x, z)], false)?;
    Ok(probability(fwd.logits[0]))
}

/// Predictions for many segments, evaluated in fixed-size chunks.
pub fn predict_batch(params: &NdlParams, batch: &[Pair<'_>]) -> Result<Vec<Prediction>> {
    let chunks: Vec<Result<Vec<Prediction>>> = batch
        .par_chunks(INFER_CHUNK)
        .map(|chunk| {
            let fwd = run_forward(params, chunk, false)?;
            Ok(fwd
                .logits
                .into_iter()
                .zip(fwd.alphas)
                .map(|(logit, alpha)| Prediction {
                    logit,
                    prob: probability(logit),
                    alpha: ChannelWeights(alpha),
                })
                .collect())
        })
        .collect();
    let mut out = Vec::with_capacity(batch.len());
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

fn check_labels(labels: &[u8], n: usize) -> Result<()> {
    dim_check(labels.len() == n, || format!("{} labels for {n} segments", labels.len()))?;
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::Parameter("labels must be 0 or 1".into()));
    }
    Ok(())
}

fn mean_nll(logits: &[f64], labels: &[u8]) -> f64 {
    let sum: f64 = logits
        .iter()
        .zip(labels)
        .map(|(&g, &y)| softplus(g) - y as f64 * g)
        .sum();
    sum / logits.len() as f64
}

/// Mean negative Bernoulli log-likelihood, `-(1/n) Σ [y g - ln(1 + eᵍ)]`.
pub fn nll_loss(params: &NdlParams, batch: &[Pair<'_>], labels: &[u8]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Parameter("empty batch".into()));
    }
    check_labels(labels, batch.len())?;
    let fwd = run_forward(params, batch, false)?;
    Ok(mean_nll(&fwd.logits, labels))
}

/// Loss and its gradient with respect to every parameter.
pub fn loss_and_grad(params: &NdlParams, batch: &[Pair<'_>], labels: &[u8]) -> Result<(f64, NdlParams)> {
    if batch.is_empty() {
        return Err(Error::Parameter("empty batch".into()));
    }
    check_labels(labels, batch.len())?;
    let fwd = run_forward(params, batch, true)?;
    let (omega_cache, g_cache) = fwd.caches.expect("cache requested");
    let n = batch.len() as f64;
    let loss = mean_nll(&fwd.logits, labels);

    let dlogits = Array2::from_shape_fn((batch.len(), 1), |(i, _)| {
        (sigmoid(fwd.logits[i]) - labels[i] as f64) / n
    });
    let mut grads = params.zeros_like();
    let ds_all = params
        .g
        .backward(&g_cache, dlogits.view(), &mut grads.g, true)
        .expect("input gradient requested");

    let t = params.t();
    let total = *fwd.offsets.last().unwrap();
    let mut domega = Array2::zeros((total, params.p()));
    for (i, (x, z)) in batch.iter().enumerate() {
        let ds = ds_all.slice(s![i * t..(i + 1) * t, ..]);
        let alpha = &fwd.alphas[i];
        // S = Xᵀα + (Σ α∘Z) ⇒ dα = X·dS + (Σ dS) Z
        let mut dalpha = x.dot(&ds);
        dalpha.scaled_add(ds.sum(), z);
        // softmax backward, per column
        let inner = (alpha * &dalpha).sum_axis(Axis(0));
        let mut dw = dalpha - &inner;
        dw *= alpha;
        domega
            .slice_mut(s![fwd.offsets[i]..fwd.offsets[i + 1], ..])
            .assign(&dw);
    }
    params.omega.backward(&omega_cache, domega.view(), &mut grads.omega, false);
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{aggregate, compute_alpha, Hyper, NetSpec};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_params(seed: u64) -> NdlParams {
        let mut h = Hyper::new(16, 8);
        h.omega = NetSpec::new(&[4, 8], 3, 2);
        h.g = NetSpec::new(&[4, 8], 3, 2);
        NdlParams::init(h, seed).unwrap()
    }

    fn random(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
        Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-2.0..2.0))
    }

    #[test]
    fn link_functions() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_abs_diff_eq!(sigmoid(3f64.ln()), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(sigmoid(-(9f64.ln())), 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(softplus(0.0), std::f64::consts::LN_2, epsilon = 1e-15);
        assert!(softplus(1000.0).is_finite());
        assert!(softplus(50.0) - 50.0 < 1e-20);
    }

    #[test]
    fn loss_at_zero_logit_is_ln2() {
        assert_abs_diff_eq!(mean_nll(&[0.0], &[1]), std::f64::consts::LN_2, epsilon = 1e-15);
        assert_abs_diff_eq!(mean_nll(&[0.0], &[0]), std::f64::consts::LN_2, epsilon = 1e-15);
        assert!(mean_nll(&[50.0], &[1]) < 1e-20);
        assert!(mean_nll(&[-800.0], &[0]) >= 0.0);
    }

    #[test]
    fn weight_sharing_across_channels() {
        let params = small_params(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let row = random(1, 16, &mut rng);
        let x = ndarray::concatenate(Axis(0), &[row.view(), row.view()]).unwrap();
        let w = omega_forward(x.view(), &params).unwrap();
        assert_eq!(w.row(0), w.row(1));
        assert_eq!(w, omega_forward(x.view(), &params).unwrap());
    }

    #[test]
    fn channel_permutation_permutes_omega() {
        let params = small_params(1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(3, 16, &mut rng);
        let perm = [2, 0, 1];
        let xp = x.select(Axis(0), &perm);
        let w = omega_forward(x.view(), &params).unwrap();
        let wp = omega_forward(xp.view(), &params).unwrap();
        assert_eq!(wp, w.select(Axis(0), &perm));
    }

    #[test]
    fn zero_network_gives_zero_logit() {
        let params = NdlParams::zeros(Hyper::new(16, 8)).unwrap();
        let s = AggregateMap(Array2::zeros((16, 8)));
        assert_eq!(g_forward(&s, &params).unwrap(), 0.0);
        let x = Array2::zeros((3, 16));
        let z = Array2::zeros((3, 8));
        assert_eq!(predict_proba(x.view(), z.view(), &params).unwrap(), 0.5);
    }

    #[test]
    fn pipeline_matches_composition() {
        let params = small_params(9);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = random(5, 16, &mut rng);
        let z = random(5, 8, &mut rng);
        let omega = omega_forward(x.view(), &params).unwrap();
        let alpha = compute_alpha(omega.view());
        let s = aggregate(x.view(), z.view(), &alpha).unwrap();
        let logit = g_forward(&s, &params).unwrap();
        let p = predict_proba(x.view(), z.view(), &params).unwrap();
        assert_abs_diff_eq!(p, sigmoid(logit), epsilon = 1e-12);

        let preds = predict_batch(&params, &[(x.view(), z.view())]).unwrap();
        assert_abs_diff_eq!(preds[0].logit, logit, epsilon = 1e-12);
    }

    #[test]
    fn shape_errors() {
        let params = small_params(1);
        let x = Array2::zeros((2, 15));
        let z = Array2::zeros((2, 8));
        assert!(matches!(predict_proba(x.view(), z.view(), &params), Err(Error::Dimension(_))));
        let x = Array2::zeros((2, 16));
        let z = Array2::zeros((3, 8));
        assert!(matches!(predict_proba(x.view(), z.view(), &params), Err(Error::Dimension(_))));
        assert!(matches!(
            g_forward(&AggregateMap(Array2::zeros((8, 16))), &params),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(nll_loss(&params, &[], &[]), Err(Error::Parameter(_))));
    }

    #[test]
    fn mixed_channel_counts_in_one_batch() {
        let params = small_params(4);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = (random(2, 16, &mut rng), random(2, 8, &mut rng));
        let b = (random(7, 16, &mut rng), random(7, 8, &mut rng));
        let batch = [(a.0.view(), a.1.view()), (b.0.view(), b.1.view())];
        let joint = predict_batch(&params, &batch).unwrap();
        let pa = predict_proba(a.0.view(), a.1.view(), &params).unwrap();
        let pb = predict_proba(b.0.view(), b.1.view(), &params).unwrap();
        assert_abs_diff_eq!(joint[0].prob, pa, epsilon = 1e-12);
        assert_abs_diff_eq!(joint[1].prob, pb, epsilon = 1e-12);
    }

    #[test]
    fn gradient_of_loss_matches_finite_differences_on_sample_params() {
        let params = small_params(11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let data: Vec<(Array2<f64>, Array2<f64>)> =
            (0..3).map(|_| (random(3, 16, &mut rng), random(3, 8, &mut rng))).collect();
        let batch: Vec<Pair> = data.iter().map(|(x, z)| (x.view(), z.view())).collect();
        let labels = [1, 0, 1];
        let (_, grads) = loss_and_grad(&params, &batch, &labels).unwrap();
        let h = 1e-5;
        let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.2.to_vec()).collect();
        for (ti, tensor) in analytic.iter().enumerate() {
            for j in [0, tensor.len() / 2, tensor.len() - 1] {
                let mut plus = params.clone();
                plus.slices_mut()[ti][j] += h;
                let mut minus = params.clone();
                minus.slices_mut()[ti][j] -= h;
                let fd = (nll_loss(&plus, &batch, &labels).unwrap()
                    - nll_loss(&minus, &batch, &labels).unwrap())
                    / (2.0 * h);
                let a = tensor[j];
                assert!(
                    (fd - a).abs() <= 1e-6 + 1e-4 * fd.abs().max(a.abs()),
                    "tensor {ti} entry {j}: fd {fd} vs analytic {a}"
                );
            }
        }
    }
}
