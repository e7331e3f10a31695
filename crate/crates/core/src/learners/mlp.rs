//! Fully connected network: ReLU hidden layers, softmax output, Adam.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{bad_model_file, present_classes, softmax_inplace};
use crate::error::Result;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpParams {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden: vec![8, 12],
            learning_rate: 0.001,
            max_epochs: 200,
            batch_size: 32,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Layer sizes and offsets into the flat parameter vector. Layer `l` stores a
/// row-major `sizes[l] × sizes[l+1]` weight block followed by its bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Architecture {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    n_params: usize,
}

impl Architecture {
    pub fn new(sizes: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut at = 0;
        for w in sizes.windows(2) {
            offsets.push(at);
            at += w[0] * w[1] + w[1];
        }
        Self {
            sizes,
            offsets,
            n_params: at,
        }
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    #[inline]
    fn weights<'a>(&self, params: &'a [f64], l: usize) -> (&'a [f64], &'a [f64]) {
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let start = self.offsets[l];
        params[start..start + i * o + o].split_at(i * o)
    }
}

/// Per-layer activations of one sample; `acts[0]` is the input, the last
/// entry the softmax output. Hidden entries hold post-ReLU values.
struct Forward {
    acts: Vec<Vec<f64>>,
}

impl Forward {
    fn new(arch: &Architecture) -> Self {
        Self {
            acts: arch.sizes.iter().map(|&s| vec![0.0; s]).collect(),
        }
    }

    fn run(&mut self, arch: &Architecture, params: &[f64], x: &[f64]) {
        self.acts[0].copy_from_slice(x);
        let last = arch.n_layers() - 1;
        for l in 0..arch.n_layers() {
            let (w, b) = arch.weights(params, l);
            let o = arch.sizes[l + 1];
            let (head, tail) = self.acts.split_at_mut(l + 1);
            let input = &head[l];
            let out = &mut tail[0];
            out.copy_from_slice(b);
            for (i, &xi) in input.iter().enumerate() {
                if xi != 0.0 {
                    let row = &w[i * o..(i + 1) * o];
                    for (v, &wij) in out.iter_mut().zip(row) {
                        *v += xi * wij;
                    }
                }
            }
            if l == last {
                softmax_inplace(out);
            } else {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
    }
}

/// Adds the gradient of `-log p(label)` for one sample to `grad`.
fn backward(arch: &Architecture, params: &[f64], fwd: &Forward, label: usize, grad: &mut [f64], delta: &mut [Vec<f64>]) {
    let nl = arch.n_layers();
    let out = &fwd.acts[nl];
    delta[nl].copy_from_slice(out);
    delta[nl][label] -= 1.0;
    for l in (0..nl).rev() {
        let (i_sz, o_sz) = (arch.sizes[l], arch.sizes[l + 1]);
        let start = arch.offsets[l];
        let input = &fwd.acts[l];
        let (lower, upper) = delta.split_at_mut(l + 1);
        let d_out = &upper[0];
        {
            let g = &mut grad[start..start + i_sz * o_sz + o_sz];
            let (gw, gb) = g.split_at_mut(i_sz * o_sz);
            for (i, &xi) in input.iter().enumerate() {
                if xi != 0.0 {
                    let row = &mut gw[i * o_sz..(i + 1) * o_sz];
                    for (gv, &dv) in row.iter_mut().zip(d_out) {
                        *gv += xi * dv;
                    }
                }
            }
            for (gv, &dv) in gb.iter_mut().zip(d_out) {
                *gv += dv;
            }
        }
        if l > 0 {
            let (w, _) = arch.weights(params, l);
            let d_in = &mut lower[l];
            for (i, di) in d_in.iter_mut().enumerate() {
                // ReLU derivative: zero where the activation was clipped.
                if input[i] > 0.0 {
                    let row = &w[i * o_sz..(i + 1) * o_sz];
                    *di = row.iter().zip(d_out).map(|(a, b)| a * b).sum();
                } else {
                    *di = 0.0;
                }
            }
        }
    }
}

/// Mean cross-entropy over `rows` and its gradient.
fn batch_objective(
    arch: &Architecture,
    params: &[f64],
    x: &Array2<f64>,
    labels: &[usize],
    rows: &[usize],
    fwd: &mut Forward,
    delta: &mut [Vec<f64>],
    grad: &mut [f64],
) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut loss = 0.0;
    for &r in rows {
        let xr = x.row(r);
        fwd.run(arch, params, xr.as_slice().expect("standard layout"));
        loss -= fwd.acts[arch.n_layers()][labels[r]].max(f64::MIN_POSITIVE).ln();
        backward(arch, params, fwd, labels[r], grad, delta);
    }
    let inv = 1.0 / rows.len() as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    loss * inv
}

/// Mean cross-entropy over all rows of `x` and its gradient with respect to
/// the flat parameters of `arch`; exposed for gradient verification.
pub fn objective_flat(arch: &Architecture, params: &[f64], x: &Array2<f64>, labels: &[usize]) -> (f64, Vec<f64>) {
    let x = x.as_standard_layout().into_owned();
    let mut fwd = Forward::new(arch);
    let mut delta: Vec<Vec<f64>> = arch.sizes.iter().map(|&s| vec![0.0; s]).collect();
    let mut grad = vec![0.0; arch.n_params];
    let rows: Vec<usize> = (0..x.nrows()).collect();
    let loss = batch_objective(arch, params, &x, labels, &rows, &mut fwd, &mut delta, &mut grad);
    (loss, grad)
}

/// He-uniform weights (limit `sqrt(6 / fan_in)`), zero biases.
pub fn init_params(arch: &Architecture, rng: &mut impl Rng) -> Vec<f64> {
    let mut params = vec![0.0; arch.n_params];
    for l in 0..arch.n_layers() {
        let (i, o) = (arch.sizes[l], arch.sizes[l + 1]);
        let limit = (6.0 / i as f64).sqrt();
        let start = arch.offsets[l];
        for w in &mut params[start..start + i * o] {
            *w = rng.random_range(-limit..limit);
        }
    }
    params
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    sizes: Vec<usize>,
    params: Vec<f64>,
    pub training_seed: u64,
}

impl MlpModel {
    pub fn fit(p: &MlpParams, x: &Array2<f64>, labels: &[usize], n_classes: usize, seed: u64) -> Self {
        let x = x.as_standard_layout().into_owned();
        let mut sizes = vec![x.ncols()];
        sizes.extend(&p.hidden);
        sizes.push(n_classes);
        let arch = Architecture::new(sizes.clone());

        let mut rng = rng::stream(seed, &[]);
        let mut params = init_params(&arch, &mut rng);

        // Output units of classes without training samples keep their
        // initial weights.
        let present = present_classes(labels, n_classes);
        let out_layer = arch.n_layers() - 1;
        let h = arch.sizes[out_layer];
        let out_start = arch.offsets[out_layer];
        let frozen: Vec<usize> = (0..n_classes).filter(|&c| !present[c]).collect();

        let n = x.nrows();
        let batch = p.batch_size.min(n).max(1);
        let mut order: Vec<usize> = (0..n).collect();
        let mut m = vec![0.0; arch.n_params];
        let mut v = vec![0.0; arch.n_params];
        let mut grad = vec![0.0; arch.n_params];
        let mut fwd = Forward::new(&arch);
        let mut delta: Vec<Vec<f64>> = arch.sizes.iter().map(|&s| vec![0.0; s]).collect();
        let (mut b1t, mut b2t) = (1.0, 1.0);
        for _ in 0..p.max_epochs {
            order.shuffle(&mut rng);
            for rows in order.chunks(batch) {
                batch_objective(&arch, &params, &x, labels, rows, &mut fwd, &mut delta, &mut grad);
                for &c in &frozen {
                    for j in 0..h {
                        grad[out_start + j * n_classes + c] = 0.0;
                    }
                    grad[out_start + h * n_classes + c] = 0.0;
                }
                b1t *= p.beta1;
                b2t *= p.beta2;
                let step = p.learning_rate * (1.0 - b2t).sqrt() / (1.0 - b1t);
                for k in 0..arch.n_params {
                    let g = grad[k];
                    m[k] = p.beta1 * m[k] + (1.0 - p.beta1) * g;
                    v[k] = p.beta2 * v[k] + (1.0 - p.beta2) * g * g;
                    params[k] -= step * m[k] / (v[k].sqrt() + p.epsilon);
                }
            }
        }
        Self {
            sizes,
            params,
            training_seed: seed,
        }
    }

    fn arch(&self) -> Architecture {
        Architecture::new(self.sizes.clone())
    }

    pub fn n_features(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_classes(&self) -> usize {
        *self.sizes.last().expect("output layer")
    }

    pub fn embedding_dimension(&self) -> usize {
        self.sizes[self.sizes.len() - 2]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    fn map_rows(&self, x: &Array2<f64>, layer: usize) -> Array2<f64> {
        let arch = self.arch();
        let x = x.as_standard_layout();
        let mut fwd = Forward::new(&arch);
        let mut out = Array2::zeros((x.nrows(), arch.sizes[layer]));
        for (row, mut o) in x.rows().into_iter().zip(out.rows_mut()) {
            fwd.run(&arch, &self.params, row.as_slice().expect("standard layout"));
            o.iter_mut().zip(&fwd.acts[layer]).for_each(|(o, &v)| *o = v);
        }
        out
    }

    pub fn predict_proba(&self, x: &Array2<f64>) -> Array2<f64> {
        self.map_rows(x, self.sizes.len() - 1)
    }

    /// Activations of the hidden layer closest to the output.
    pub fn embed(&self, x: &Array2<f64>) -> Array2<f64> {
        self.map_rows(x, self.sizes.len() - 2)
    }

    pub(crate) fn flatten(&self) -> (serde_json::Value, Vec<f64>) {
        (
            json!({
                "layer_sizes": self.sizes,
                "activation": "relu",
                "output": "softmax",
                "training_seed": self.training_seed,
            }),
            self.params.clone(),
        )
    }

    pub(crate) fn unflatten(arch: &serde_json::Value, params: &[f64]) -> Result<Self> {
        let sizes: Vec<usize> = arch
            .get("layer_sizes")
            .and_then(|v| serde_json::from_value(v.clone()).ok())
            .ok_or_else(|| bad_model_file("layer_sizes"))?;
        if sizes.len() < 3 || Architecture::new(sizes.clone()).n_params != params.len() {
            return Err(bad_model_file("parameter count"));
        }
        let training_seed = arch
            .get("training_seed")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| bad_model_file("training_seed"))?;
        Ok(Self {
            sizes,
            params: params.to_vec(),
            training_seed,
        })
    }
}
