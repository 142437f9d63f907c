//! Fully connected network with tanh hidden layers and a linear output,
//! stored as one flat parameter vector so the optimizer and the weights file
//! can treat it as a single tensor.

use rand_distr::{Distribution, Uniform};

use crate::SimRng;

/// Layer-major flat layout: for each layer, the `out x in` weight matrix
/// (row-major) followed by the `out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations recorded by [`Mlp::forward_trace`] for backpropagation.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    acts: Vec<Vec<f64>>,
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0));
        Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; param_count(sizes)],
        }
    }

    /// Glorot-uniform weights and zero biases; the output layer is scaled by
    /// `out_gain`.
    pub fn init(sizes: &[usize], out_gain: f64, rng: &mut SimRng) -> Self {
        let mut net = Self::zeros(sizes);
        let last = sizes.len() - 2;
        let mut off = 0;
        for (l, w) in sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let mut limit = (6.0 / (n_in + n_out) as f64).sqrt();
            if l == last {
                limit *= out_gain;
            }
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
            for p in &mut net.params[off..off + n_in * n_out] {
                *p = dist.sample(rng);
            }
            off += n_in * n_out + n_out;
        }
        net
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Option<Self> {
        (sizes.len() >= 2 && sizes.iter().all(|&s| s > 0) && params.len() == param_count(sizes))
            .then(|| Self {
                sizes: sizes.to_vec(),
                params,
            })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn output_bias_mut(&mut self) -> &mut [f64] {
        let n_out = *self.sizes.last().unwrap();
        let len = self.params.len();
        &mut self.params[len - n_out..]
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let mut trace = Trace::default();
        self.forward_trace(input, &mut trace).to_vec()
    }

    pub fn forward_trace<'t>(&self, input: &[f64], trace: &'t mut Trace) -> &'t [f64] {
        debug_assert_eq!(input.len(), self.sizes[0]);
        let n_layers = self.sizes.len() - 1;
        trace.acts.resize_with(n_layers + 1, Vec::new);
        trace.acts[0].clear();
        trace.acts[0].extend_from_slice(input);
        let mut off = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let (prev, rest) = trace.acts.split_at_mut(l + 1);
            let x = &prev[l];
            let y = &mut rest[0];
            y.clear();
            for (row, bias) in w.chunks_exact(n_in).zip(b) {
                let z = bias + dot(row, x);
                y.push(if l + 1 < n_layers { z.tanh() } else { z });
            }
        }
        &trace.acts[n_layers]
    }

    /// Accumulates `d(out . dout)/d(params)` into `grad`.
    pub fn backward(&self, trace: &Trace, dout: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let n_layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        let mut delta = dout.to_vec();
        let mut next_delta = Vec::new();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let x = &trace.acts[l];
            let (gw, gb) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for ((grow, gbias), d) in gw.chunks_exact_mut(n_in).zip(gb.iter_mut()).zip(&delta) {
                *gbias += d;
                for (g, xi) in grow.iter_mut().zip(x) {
                    *g += d * xi;
                }
            }
            if l > 0 {
                let w = &self.params[off..off + n_in * n_out];
                next_delta.clear();
                next_delta.resize(n_in, 0.0);
                for (row, d) in w.chunks_exact(n_in).zip(&delta) {
                    for (nd, wi) in next_delta.iter_mut().zip(row) {
                        *nd += d * wi;
                    }
                }
                // x holds tanh outputs of layer l
                for (nd, a) in next_delta.iter_mut().zip(x) {
                    *nd *= 1.0 - a * a;
                }
                std::mem::swap(&mut delta, &mut next_delta);
            }
        }
    }
}

/// Dot product with four independent accumulators so the adds pipeline.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}
