//! Shift tests, paired comparisons and the benchmarking protocol.

pub mod benchmark;
pub mod ks;
pub mod wilcoxon;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::learners::{self, ModelSpec, TrainedModel};
use crate::selftrain::{self, SelfTrainConfig, SelfTrainTrace};

pub use benchmark::{run_benchmark, BenchmarkConfig, RunReport};
pub use ks::{ks_two_sample, KsResult};
pub use wilcoxon::{wilcoxon_one_sided, Alternative};

/// How a model is obtained from one run's data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Strategy {
    /// Supervised fit on the full, unbiased labeled set.
    SupervisedNoBias,
    /// Supervised fit on the biased labeled set.
    SupervisedBias,
    /// Conventional self-training.
    SelfTraining,
    /// Class-aware self-training.
    Cast,
    /// Class-aware self-training with diversity strength `d`.
    Dcast(usize),
}

impl Strategy {
    pub fn is_self_training(&self) -> bool {
        matches!(self, Strategy::SelfTraining | Strategy::Cast | Strategy::Dcast(_))
    }

    pub fn uses_bias(&self) -> bool {
        *self != Strategy::SupervisedNoBias
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Strategy::SupervisedNoBias => f.write_str("supervised_no_bias"),
            Strategy::SupervisedBias => f.write_str("supervised_bias"),
            Strategy::SelfTraining => f.write_str("st"),
            Strategy::Cast => f.write_str("cast"),
            Strategy::Dcast(d) => write!(f, "dcast_d{d}"),
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "supervised_no_bias" => Ok(Strategy::SupervisedNoBias),
            "supervised_bias" | "supervised" => Ok(Strategy::SupervisedBias),
            "st" => Ok(Strategy::SelfTraining),
            "cast" => Ok(Strategy::Cast),
            other => other
                .strip_prefix("dcast_d")
                .and_then(|d| d.parse().ok())
                .filter(|&d| d >= 1)
                .map(Strategy::Dcast)
                .ok_or_else(|| Error::InvalidParameter(format!("unknown strategy `{other}`"))),
        }
    }
}

impl From<Strategy> for String {
    fn from(s: Strategy) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for Strategy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Trains `strategy` on `labeled` (already biased or not, as the strategy
/// requires) with `unlabeled` as the self-training pool.
///
/// Supervised strategies fit on the same rows a self-training run starts
/// from, i.e. `labeled` minus its validation slice, with the same seed, so
/// a self-training run that never improves on its first model returns
/// exactly the supervised model.
pub fn train_strategy(
    strategy: Strategy,
    spec: &ModelSpec,
    cfg: &SelfTrainConfig,
    labeled: &Dataset,
    unlabeled: &Array2<f64>,
    seed: u64,
) -> Result<(TrainedModel, Option<SelfTrainTrace>)> {
    match strategy {
        Strategy::SupervisedNoBias | Strategy::SupervisedBias => {
            cfg.validate(labeled.n_classes())?;
            let (rows, _) = selftrain::validation_split(labeled, cfg.validation_fraction, selftrain::validation_seed(seed));
            let train = labeled.subset(&rows);
            let model = learners::fit(
                spec,
                train.features(),
                train.labels(),
                train.n_classes(),
                selftrain::model_seed(seed),
            )?;
            Ok((model, None))
        }
        Strategy::SelfTraining => {
            let out = selftrain::conventional_st(spec, cfg, labeled, unlabeled, seed)?;
            Ok((out.model, Some(out.trace)))
        }
        Strategy::Cast | Strategy::Dcast(_) => {
            let diversity = match strategy {
                Strategy::Dcast(d) => d,
                _ => 1,
            };
            let cfg = SelfTrainConfig {
                diversity,
                ..cfg.clone()
            };
            let out = selftrain::dcast(spec, &cfg, labeled, unlabeled, seed)?;
            Ok((out.model, Some(out.trace)))
        }
    }
}

/// Median of the values; the mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}
