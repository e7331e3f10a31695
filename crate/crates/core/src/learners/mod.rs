//! Base learners behind a uniform fit / predict-proba / embed contract.
//!
//! | kind     | embedding used for diversity                 |
//! |----------|----------------------------------------------|
//! | `logreg` | the input features, unchanged                |
//! | `mlp`    | activations of the last (12-unit) hidden layer |
//! | `forest` | one-hot leaf membership across all trees     |

pub mod forest;
pub mod logreg;
pub mod mlp;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use forest::{ForestModel, ForestParams};
pub use logreg::{LogRegModel, LogRegParams};
pub use mlp::{MlpModel, MlpParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[serde(rename = "logreg")]
    LogReg,
    Mlp,
    Forest,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::LogReg => "logreg",
            ModelKind::Mlp => "mlp",
            ModelKind::Forest => "forest",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logreg" | "lr" => Ok(ModelKind::LogReg),
            "mlp" | "nn" => Ok(ModelKind::Mlp),
            "forest" | "rf" => Ok(ModelKind::Forest),
            other => Err(Error::InvalidParameter(format!("unknown model kind `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    #[serde(rename = "logreg")]
    LogReg(LogRegParams),
    Mlp(MlpParams),
    Forest(ForestParams),
}

impl ModelSpec {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::LogReg => ModelSpec::LogReg(LogRegParams::default()),
            ModelKind::Mlp => ModelSpec::Mlp(MlpParams::default()),
            ModelKind::Forest => ModelSpec::Forest(ForestParams::default()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::LogReg(_) => ModelKind::LogReg,
            ModelSpec::Mlp(_) => ModelKind::Mlp,
            ModelSpec::Forest(_) => ModelKind::Forest,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedModel {
    #[serde(rename = "logreg")]
    LogReg(LogRegModel),
    Mlp(MlpModel),
    Forest(ForestModel),
}

pub(crate) fn check_training_inputs(x: &Array2<f64>, labels: &[usize], n_classes: usize) -> Result<()> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::Training("empty training matrix".into()));
    }
    if labels.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: labels.len(),
        });
    }
    if n_classes < 2 {
        return Err(Error::TooFewClasses(n_classes));
    }
    if labels.iter().any(|&c| c >= n_classes) {
        return Err(Error::Training("label index out of range".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Training("non-finite training features".into()));
    }
    Ok(())
}

/// Classes that occur in `labels`.
pub(crate) fn present_classes(labels: &[usize], n_classes: usize) -> Vec<bool> {
    let mut present = vec![false; n_classes];
    labels.iter().for_each(|&c| present[c] = true);
    present
}

/// Trains a model of the given spec. Deterministic in `seed`.
pub fn fit(spec: &ModelSpec, x: &Array2<f64>, labels: &[usize], n_classes: usize, seed: u64) -> Result<TrainedModel> {
    check_training_inputs(x, labels, n_classes)?;
    Ok(match spec {
        ModelSpec::LogReg(p) => TrainedModel::LogReg(LogRegModel::fit(p, x, labels, n_classes, seed)),
        ModelSpec::Mlp(p) => TrainedModel::Mlp(MlpModel::fit(p, x, labels, n_classes, seed)),
        ModelSpec::Forest(p) => TrainedModel::Forest(ForestModel::fit(p, x, labels, n_classes, seed)),
    })
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::LogReg(_) => ModelKind::LogReg,
            TrainedModel::Mlp(_) => ModelKind::Mlp,
            TrainedModel::Forest(_) => ModelKind::Forest,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            TrainedModel::LogReg(m) => m.n_features(),
            TrainedModel::Mlp(m) => m.n_features(),
            TrainedModel::Forest(m) => m.n_features(),
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            TrainedModel::LogReg(m) => m.n_classes(),
            TrainedModel::Mlp(m) => m.n_classes(),
            TrainedModel::Forest(m) => m.n_classes(),
        }
    }

    pub fn training_seed(&self) -> u64 {
        match self {
            TrainedModel::LogReg(m) => m.training_seed,
            TrainedModel::Mlp(m) => m.training_seed,
            TrainedModel::Forest(m) => m.training_seed,
        }
    }

    pub fn embedding_dimension(&self) -> usize {
        match self {
            TrainedModel::LogReg(m) => m.n_features(),
            TrainedModel::Mlp(m) => m.embedding_dimension(),
            TrainedModel::Forest(m) => m.total_leaves(),
        }
    }

    /// True when [`TrainedModel::embed`] yields a model-derived representation
    /// rather than the raw features.
    pub fn has_discriminative_embedding(&self) -> bool {
        !matches!(self, TrainedModel::LogReg(_))
    }

    fn check_dim(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                found: x.ncols(),
            });
        }
        Ok(())
    }

    /// Row-stochastic class probabilities.
    pub fn predict_proba(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_dim(x)?;
        Ok(match self {
            TrainedModel::LogReg(m) => m.predict_proba(x),
            TrainedModel::Mlp(m) => m.predict_proba(x),
            TrainedModel::Forest(m) => m.predict_proba(x),
        })
    }

    pub fn embed(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_dim(x)?;
        Ok(match self {
            TrainedModel::LogReg(_) => x.clone(),
            TrainedModel::Mlp(m) => m.embed(x),
            TrainedModel::Forest(m) => m.embed(x),
        })
    }

    pub fn predict(&self, x: &Array2<f64>) -> Result<Vec<usize>> {
        let p = self.predict_proba(x)?;
        Ok(p.rows().into_iter().map(|r| argmax(r.as_slice().expect("contiguous"))).collect())
    }

    /// Fraction of rows whose arg-max probability hits the label.
    pub fn accuracy(&self, x: &Array2<f64>, labels: &[usize]) -> Result<f64> {
        if labels.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                found: labels.len(),
            });
        }
        let p = self.predict_proba(x)?;
        Ok(accuracy_from_proba(&p, labels))
    }
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn accuracy_from_proba(p: &Array2<f64>, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = p
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(r, &y)| argmax(r.as_slice().expect("contiguous")) == y)
        .count();
    hits as f64 / labels.len() as f64
}

/// In-place numerically stable softmax.
pub(crate) fn softmax_inplace(z: &mut [f64]) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    z.iter_mut().for_each(|v| *v /= s);
}

/// Versioned model file: architecture JSON plus one flat parameter array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub kind: ModelKind,
    pub architecture: serde_json::Value,
    pub parameters: Vec<f64>,
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

impl TrainedModel {
    pub fn to_file(&self) -> ModelFile {
        let (architecture, parameters) = match self {
            TrainedModel::LogReg(m) => m.flatten(),
            TrainedModel::Mlp(m) => m.flatten(),
            TrainedModel::Forest(m) => m.flatten(),
        };
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            kind: self.kind(),
            architecture,
            parameters,
        }
    }

    pub fn from_file(file: &ModelFile) -> Result<Self> {
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidParameter(format!(
                "unsupported model format version {}",
                file.format_version
            )));
        }
        Ok(match file.kind {
            ModelKind::LogReg => TrainedModel::LogReg(LogRegModel::unflatten(&file.architecture, &file.parameters)?),
            ModelKind::Mlp => TrainedModel::Mlp(MlpModel::unflatten(&file.architecture, &file.parameters)?),
            ModelKind::Forest => TrainedModel::Forest(ForestModel::unflatten(&file.architecture, &file.parameters)?),
        })
    }
}

pub(crate) fn bad_model_file(what: &str) -> Error {
    Error::InvalidParameter(format!("malformed model file: {what}"))
}
