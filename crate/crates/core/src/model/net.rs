//! Strided 1-D convolution stacks with a fully connected head.
//!
//! Activations are channels-last: a batch of `B` sequences of length `L`
//! with `C` features is a `(B·L) × C` matrix, so sequence `b` occupies
//! rows `b·L .. (b+1)·L`. Each conv block computes
//! `relu(conv(x) - shift)`, with "same" padding of `kernel / 2` and the
//! given stride. The head flattens the last activation per sequence and
//! applies `W·x + b`.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Shape of one network: conv feature widths, kernel size and stride.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSpec {
    pub widths: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
}

impl NetSpec {
    pub fn new(widths: &[usize], kernel: usize, stride: usize) -> Self {
        Self {
            widths: widths.to_vec(),
            kernel,
            stride,
        }
    }
}

impl Default for NetSpec {
    fn default() -> Self {
        Self::new(&[16, 32, 64], 3, 2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub in_len: usize,
    pub out_len: usize,
    /// `out_ch × (kernel · in_ch)`, tap-major within a row.
    pub weight: Array2<f64>,
    pub shift: Array1<f64>,
}

impl ConvLayer {
    fn pad(&self) -> usize {
        self.kernel / 2
    }

    fn im2col(&self, input: ArrayView2<'_, f64>, batch: usize) -> Array2<f64> {
        let (c, k, pad) = (self.in_ch, self.kernel, self.pad());
        let mut cols = Array2::zeros((batch * self.out_len, k * c));
        let src = input.as_standard_layout();
        let src = src.as_slice().expect("standard layout");
        let dst = cols.as_slice_mut().expect("fresh array");
        for b in 0..batch {
            for t in 0..self.out_len {
                let row = (b * self.out_len + t) * k * c;
                for tap in 0..k {
                    let pos = (t * self.stride + tap) as isize - pad as isize;
                    if pos < 0 || pos as usize >= self.in_len {
                        continue;
                    }
                    let from = (b * self.in_len + pos as usize) * c;
                    dst[row + tap * c..row + (tap + 1) * c].copy_from_slice(&src[from..from + c]);
                }
            }
        }
        cols
    }

    fn col2im(&self, dcols: &Array2<f64>, batch: usize) -> Array2<f64> {
        let (c, k, pad) = (self.in_ch, self.kernel, self.pad());
        let mut out = Array2::zeros((batch * self.in_len, c));
        let src = dcols.as_slice().expect("standard layout");
        let dst = out.as_slice_mut().expect("fresh array");
        for b in 0..batch {
            for t in 0..self.out_len {
                let row = (b * self.out_len + t) * k * c;
                for tap in 0..k {
                    let pos = (t * self.stride + tap) as isize - pad as isize;
                    if pos < 0 || pos as usize >= self.in_len {
                        continue;
                    }
                    let to = (b * self.in_len + pos as usize) * c;
                    for j in 0..c {
                        dst[to + j] += src[row + tap * c + j];
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out × in`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvNet {
    pub in_len: usize,
    pub in_ch: usize,
    pub convs: Vec<ConvLayer>,
    pub fc: Dense,
}

/// Intermediate values kept for the backward pass.
pub struct NetCache {
    batch: usize,
    cols: Vec<Array2<f64>>,
    /// `conv(x) - shift`, before rectification.
    pre: Vec<Array2<f64>>,
    flat: Array2<f64>,
}

fn uniform(rng: &mut impl Rng, shape: (usize, usize), fan_in: usize) -> Array2<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Array2::from_shape_simple_fn(shape, || rng.gen_range(-bound..bound) as f32 as f64)
}

impl ConvNet {
    /// Fan-in scaled uniform weights, zero shifts and biases.
    pub fn init(spec: &NetSpec, in_len: usize, in_ch: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let mut net = Self::zeros(spec, in_len, in_ch, out_dim);
        for layer in &mut net.convs {
            let fan_in = layer.kernel * layer.in_ch;
            layer.weight = uniform(rng, layer.weight.dim(), fan_in);
        }
        let fan_in = net.fc.weight.ncols();
        net.fc.weight = uniform(rng, net.fc.weight.dim(), fan_in);
        net
    }

    pub fn zeros(spec: &NetSpec, in_len: usize, in_ch: usize, out_dim: usize) -> Self {
        assert!(spec.kernel >= 1 && spec.stride >= 1, "kernel and stride must be positive");
        let mut convs = Vec::with_capacity(spec.widths.len());
        let (mut len, mut ch) = (in_len, in_ch);
        for &width in &spec.widths {
            let pad = spec.kernel / 2;
            let out_len = (len + 2 * pad).saturating_sub(spec.kernel) / spec.stride + 1;
            convs.push(ConvLayer {
                in_ch: ch,
                out_ch: width,
                kernel: spec.kernel,
                stride: spec.stride,
                in_len: len,
                out_len,
                weight: Array2::zeros((width, spec.kernel * ch)),
                shift: Array1::zeros(width),
            });
            len = out_len;
            ch = width;
        }
        Self {
            in_len,
            in_ch,
            convs,
            fc: Dense {
                weight: Array2::zeros((out_dim, len * ch)),
                bias: Array1::zeros(out_dim),
            },
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for s in out.slices_mut() {
            s.fill(0.0);
        }
        out
    }

    pub fn out_dim(&self) -> usize {
        self.fc.bias.len()
    }

    /// `input` is `(B · in_len) × in_ch`; returns `B × out_dim`.
    pub fn forward(&self, input: ArrayView2<'_, f64>) -> Array2<f64> {
        self.forward_cached(input).0
    }

    pub fn forward_cached(&self, input: ArrayView2<'_, f64>) -> (Array2<f64>, NetCache) {
        assert_eq!(input.ncols(), self.in_ch, "input feature count");
        assert_eq!(input.nrows() % self.in_len, 0, "input rows not a multiple of the sequence length");
        let batch = input.nrows() / self.in_len;
        let mut cols_cache = Vec::with_capacity(self.convs.len());
        let mut pre_cache = Vec::with_capacity(self.convs.len());
        let mut act = input.to_owned();
        for layer in &self.convs {
            let cols = layer.im2col(act.view(), batch);
            let mut pre = cols.dot(&layer.weight.t());
            pre -= &layer.shift;
            act = pre.mapv(|v| v.max(0.0));
            cols_cache.push(cols);
            pre_cache.push(pre);
        }
        let flat_dim = act.len() / batch;
        let flat = act
            .into_shape_with_order((batch, flat_dim))
            .expect("contiguous activations");
        let mut out = flat.dot(&self.fc.weight.t());
        out += &self.fc.bias;
        (
            out,
            NetCache {
                batch,
                cols: cols_cache,
                pre: pre_cache,
                flat,
            },
        )
    }

    /// Accumulates parameter gradients into `grads` and, if asked, returns
    /// the gradient with respect to the network input.
    pub fn backward(
        &self,
        cache: &NetCache,
        dout: ArrayView2<'_, f64>,
        grads: &mut ConvNet,
        input_grad: bool,
    ) -> Option<Array2<f64>> {
        let batch = cache.batch;
        general_mat_mul(1.0, &dout.t(), &cache.flat, 1.0, &mut grads.fc.weight);
        grads.fc.bias += &dout.sum_axis(Axis(0));
        let dflat = dout.dot(&self.fc.weight);

        if self.convs.is_empty() {
            return input_grad.then_some(
                dflat
                    .into_shape_with_order((batch * self.in_len, self.in_ch))
                    .expect("contiguous"),
            );
        }

        let last = self.convs.last().expect("non-empty");
        let mut dact = dflat
            .into_shape_with_order((batch * last.out_len, last.out_ch))
            .expect("contiguous");
        for (i, layer) in self.convs.iter().enumerate().rev() {
            let pre = &cache.pre[i];
            let mut dpre = dact;
            dpre.zip_mut_with(pre, |g, &z| {
                if z <= 0.0 {
                    *g = 0.0
                }
            });
            grads.convs[i].shift -= &dpre.sum_axis(Axis(0));
            general_mat_mul(1.0, &dpre.t(), &cache.cols[i], 1.0, &mut grads.convs[i].weight);
            if i == 0 && !input_grad {
                return None;
            }
            let dcols = dpre.dot(&layer.weight);
            dact = layer.col2im(&dcols, batch);
        }
        Some(dact)
    }

    /// Every parameter tensor with its serialized name and shape.
    pub fn tensors(&self, prefix: &str) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::with_capacity(2 * self.convs.len() + 2);
        for (i, l) in self.convs.iter().enumerate() {
            out.push((
                format!("{prefix}.conv{i}.weight"),
                vec![l.out_ch, l.kernel, l.in_ch],
                l.weight.as_slice().expect("standard layout"),
            ));
            out.push((
                format!("{prefix}.conv{i}.shift"),
                vec![l.out_ch],
                l.shift.as_slice().expect("standard layout"),
            ));
        }
        let (o, i) = self.fc.weight.dim();
        out.push((
            format!("{prefix}.fc.weight"),
            vec![o, i],
            self.fc.weight.as_slice().expect("standard layout"),
        ));
        out.push((
            format!("{prefix}.fc.bias"),
            vec![o],
            self.fc.bias.as_slice().expect("standard layout"),
        ));
        out
    }

    /// Mutable views of the tensors, in [`ConvNet::tensors`] order.
    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(2 * self.convs.len() + 2);
        for l in &mut self.convs {
            out.push(l.weight.as_slice_mut().expect("standard layout"));
            out.push(l.shift.as_slice_mut().expect("standard layout"));
        }
        out.push(self.fc.weight.as_slice_mut().expect("standard layout"));
        out.push(self.fc.bias.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors("").iter().map(|t| t.2.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn output_lengths_halve() {
        let net = ConvNet::zeros(&NetSpec::default(), 64, 1, 64);
        let lens: Vec<usize> = net.convs.iter().map(|c| c.out_len).collect();
        assert_eq!(lens, [32, 16, 8]);
        assert_eq!(net.fc.weight.dim(), (64, 8 * 64));
    }

    #[test]
    fn no_conv_blocks_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = ConvNet::init(&NetSpec::new(&[], 3, 2), 4, 2, 1, &mut rng);
        let x = Array2::from_shape_fn((4, 2), |(i, j)| (i * 2 + j) as f64);
        let y = net.forward(x.view())[[0, 0]];
        let flat = x.into_shape_with_order(8).unwrap();
        let expected = net.fc.weight.row(0).dot(&flat) + net.fc.bias[0];
        assert!((y - expected).abs() < 1e-12);
    }

    #[test]
    fn im2col_pads_edges() {
        let layer = ConvNet::zeros(&NetSpec::new(&[1], 3, 2), 4, 1, 1).convs[0].clone();
        let x = Array2::from_shape_vec((4, 1), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let cols = layer.im2col(x.view(), 1);
        assert_eq!(cols, ndarray::array![[0.0, 1.0, 2.0], [2.0, 3.0, 4.0]]);
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = ConvNet::init(&NetSpec::new(&[3, 4], 3, 2), 8, 2, 2, &mut rng);
        let x = Array2::from_shape_fn((16, 2), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 5.0 - 1.0);
        let w = ndarray::array![[0.3, -1.2], [0.7, 0.1]];
        let loss = |x: &Array2<f64>| (net.forward(x.view()) * &w).sum();
        let (_, cache) = net.forward_cached(x.view());
        let mut grads = net.zeros_like();
        let dx = net.backward(&cache, w.view(), &mut grads, true).unwrap();
        let h = 1e-6;
        for idx in [(0, 0), (3, 1), (9, 0), (15, 1)] {
            let mut xp = x.clone();
            xp[idx] += h;
            let mut xm = x.clone();
            xm[idx] -= h;
            let fd = (loss(&xp) - loss(&xm)) / (2.0 * h);
            assert!((fd - dx[idx]).abs() < 1e-6, "{idx:?}: {fd} vs {}", dx[idx]);
        }
    }
}
