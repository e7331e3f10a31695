//! Seeded Gaussian blob mixtures.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// One isotropic Gaussian component. `center` is padded with zeros up to the
/// feature count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub class: usize,
    /// Relative share of the samples.
    pub weight: f64,
    pub center: Vec<f64>,
    pub stdev: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobConfig {
    pub n_samples: usize,
    pub n_features: usize,
    pub blobs: Vec<Blob>,
    pub seed: u64,
}

impl BlobConfig {
    /// Two classes, each a tight minority blob and a diffuse majority blob,
    /// 2000 samples in 10 dimensions.
    pub fn two_by_two(seed: u64) -> Self {
        let blob = |class, weight, center: &[f64], stdev| Blob {
            class,
            weight,
            center: center.to_vec(),
            stdev,
        };
        Self {
            n_samples: 2000,
            n_features: 10,
            blobs: vec![
                blob(0, 0.15, &[-1.0, 0.0], 0.3),
                blob(0, 0.85, &[-1.0, 3.0], 1.5),
                blob(1, 0.15, &[1.0, 0.0], 0.3),
                blob(1, 0.85, &[5.0, 3.0], 1.5),
            ],
            seed,
        }
    }

    fn validate(&self) -> Result<usize> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n_features == 0 || self.n_samples == 0 {
            return bad("blob data needs at least one sample and one feature".into());
        }
        if self.blobs.is_empty() {
            return bad("blob data needs at least one blob".into());
        }
        for b in &self.blobs {
            if b.center.len() > self.n_features {
                return bad(format!("blob center has {} coordinates for {} features", b.center.len(), self.n_features));
            }
            if !(b.weight > 0.0 && b.weight.is_finite()) || !(b.stdev >= 0.0 && b.stdev.is_finite()) {
                return bad("blob weights must be positive and stdevs non-negative".into());
            }
        }
        let n_classes = self.blobs.iter().map(|b| b.class).max().expect("blobs") + 1;
        if n_classes < 2 {
            return Err(Error::TooFewClasses(n_classes));
        }
        Ok(n_classes)
    }
}

/// Samples `cfg.n_samples` points. Blob sizes follow the weights (largest
/// remainders get the leftover samples) and rows are grouped by blob.
pub fn gaussian_blobs(cfg: &BlobConfig) -> Result<Dataset> {
    let n_classes = cfg.validate()?;
    let total_weight: f64 = cfg.blobs.iter().map(|b| b.weight).sum();
    let exact: Vec<f64> = cfg.blobs.iter().map(|b| cfg.n_samples as f64 * b.weight / total_weight).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let short = cfg.n_samples - sizes.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        sizes[i] += 1;
    }

    let f = cfg.n_features;
    let mut values = Vec::with_capacity(cfg.n_samples * f);
    let mut labels = Vec::with_capacity(cfg.n_samples);
    for (bi, (blob, &size)) in cfg.blobs.iter().zip(&sizes).enumerate() {
        let mut rng = rng::stream(cfg.seed, &[tag::SYNTH, bi as u64]);
        for _ in 0..size {
            for j in 0..f {
                let z: f64 = StandardNormal.sample(&mut rng);
                values.push(blob.center.get(j).copied().unwrap_or(0.0) + blob.stdev * z);
            }
            labels.push(blob.class);
        }
    }
    let features = ndarray::Array2::from_shape_vec((cfg.n_samples, f), values).expect("shape");
    Dataset::new(
        features,
        labels,
        (0..f).map(|j| format!("x{j}")).collect(),
        (0..n_classes).map(|c| format!("class{c}")).collect(),
    )
}
