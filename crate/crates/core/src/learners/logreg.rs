//! Multinomial L2-regularised logistic regression, full-batch gradient descent.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{bad_model_file, present_classes, softmax_inplace};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogRegParams {
    /// Inverse regularisation strength (`C` in the usual convention).
    pub l2_inverse_strength: f64,
    pub max_epochs: usize,
    pub learning_rate: f64,
}

impl Default for LogRegParams {
    fn default() -> Self {
        Self {
            l2_inverse_strength: 5.0,
            max_epochs: 100,
            learning_rate: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    /// `n_features × n_classes`, row-major.
    weights: Vec<f64>,
    bias: Vec<f64>,
    n_features: usize,
    n_classes: usize,
    pub training_seed: u64,
}

/// Per-sample-averaged objective
/// `(Σ_n -log p(y_n | x_n) + ‖W‖² / (2 C)) / N` and its gradient with respect
/// to `params = [W (row-major), b]`. Gradient entries for classes in
/// `frozen` are zeroed.
fn objective(
    params: &[f64],
    x: &Array2<f64>,
    labels: &[usize],
    n_classes: usize,
    inverse_strength: f64,
    frozen: &[bool],
) -> (f64, Vec<f64>) {
    let (n, f) = x.dim();
    let c = n_classes;
    let (w, b) = params.split_at(f * c);
    let mut grad = vec![0.0; params.len()];
    let (gw, gb) = grad.split_at_mut(f * c);
    let mut loss = 0.0;
    let mut z = vec![0.0; c];
    for (row, &y) in x.rows().into_iter().zip(labels) {
        z.copy_from_slice(b);
        for (j, &xj) in row.iter().enumerate() {
            if xj != 0.0 {
                for k in 0..c {
                    z[k] += xj * w[j * c + k];
                }
            }
        }
        softmax_inplace(&mut z);
        loss -= z[y].max(f64::MIN_POSITIVE).ln();
        z[y] -= 1.0;
        for (j, &xj) in row.iter().enumerate() {
            for k in 0..c {
                gw[j * c + k] += xj * z[k];
            }
        }
        for k in 0..c {
            gb[k] += z[k];
        }
    }
    let lambda = 1.0 / inverse_strength;
    loss += 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>();
    for (g, &wv) in gw.iter_mut().zip(w) {
        *g += lambda * wv;
    }
    let inv_n = 1.0 / n as f64;
    grad.iter_mut().for_each(|g| *g *= inv_n);
    for k in (0..c).filter(|&k| frozen[k]) {
        for j in 0..f {
            grad[j * c + k] = 0.0;
        }
        grad[f * c + k] = 0.0;
    }
    (loss * inv_n, grad)
}

/// Objective and gradient over flat `[W, b]` parameters with every class
/// trainable; exposed for gradient verification.
pub fn objective_flat(
    params: &[f64],
    x: &Array2<f64>,
    labels: &[usize],
    n_classes: usize,
    inverse_strength: f64,
) -> (f64, Vec<f64>) {
    objective(params, x, labels, n_classes, inverse_strength, &vec![false; n_classes])
}

impl LogRegModel {
    pub fn fit(p: &LogRegParams, x: &Array2<f64>, labels: &[usize], n_classes: usize, seed: u64) -> Self {
        Self::fit_traced(p, x, labels, n_classes, seed).0
    }

    /// Fits and returns the objective value before every epoch's update.
    ///
    /// Weights start at zero; parameters of classes absent from `labels`
    /// stay there.
    pub fn fit_traced(
        p: &LogRegParams,
        x: &Array2<f64>,
        labels: &[usize],
        n_classes: usize,
        seed: u64,
    ) -> (Self, Vec<f64>) {
        let f = x.ncols();
        let frozen: Vec<bool> = present_classes(labels, n_classes).iter().map(|&p| !p).collect();
        let mut params = vec![0.0; f * n_classes + n_classes];
        let mut history = Vec::with_capacity(p.max_epochs);
        for _ in 0..p.max_epochs {
            let (loss, grad) = objective(&params, x, labels, n_classes, p.l2_inverse_strength, &frozen);
            history.push(loss);
            for (w, g) in params.iter_mut().zip(&grad) {
                *w -= p.learning_rate * g;
            }
        }
        let bias = params.split_off(f * n_classes);
        (
            Self {
                weights: params,
                bias,
                n_features: f,
                n_classes,
                training_seed: seed,
            },
            history,
        )
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn predict_proba(&self, x: &Array2<f64>) -> Array2<f64> {
        let c = self.n_classes;
        let mut out = Array2::zeros((x.nrows(), c));
        let mut z = vec![0.0; c];
        for (row, mut o) in x.rows().into_iter().zip(out.rows_mut()) {
            z.copy_from_slice(&self.bias);
            for (j, &xj) in row.iter().enumerate() {
                for k in 0..c {
                    z[k] += xj * self.weights[j * c + k];
                }
            }
            softmax_inplace(&mut z);
            o.iter_mut().zip(&z).for_each(|(o, &v)| *o = v);
        }
        out
    }

    pub(crate) fn flatten(&self) -> (serde_json::Value, Vec<f64>) {
        let mut params = self.weights.clone();
        params.extend(&self.bias);
        (
            json!({
                "n_features": self.n_features,
                "n_classes": self.n_classes,
                "training_seed": self.training_seed,
            }),
            params,
        )
    }

    pub(crate) fn unflatten(arch: &serde_json::Value, params: &[f64]) -> Result<Self> {
        let get = |k: &str| arch.get(k).and_then(|v| v.as_u64()).ok_or_else(|| bad_model_file(k));
        let f = get("n_features")? as usize;
        let c = get("n_classes")? as usize;
        if params.len() != f * c + c {
            return Err(bad_model_file("parameter count"));
        }
        Ok(Self {
            weights: params[..f * c].to_vec(),
            bias: params[f * c..].to_vec(),
            n_features: f,
            n_classes: c,
            training_seed: get("training_seed")?,
        })
    }

    #[cfg(test)]
    pub(crate) fn zeros(n_features: usize, n_classes: usize) -> Self {
        Self {
            weights: vec![0.0; n_features * n_classes],
            bias: vec![0.0; n_classes],
            n_features,
            n_classes,
            training_seed: 0,
        }
    }
}
