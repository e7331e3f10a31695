//! Flag and config-file settings, and their resolution into a full config.

use std::path::{Path, PathBuf};

use biasbench_core::bias::{BiasKind, BiasSpec};
use biasbench_core::data::SplitPlan;
use biasbench_core::eval::Strategy;
use biasbench_core::learners::{ModelKind, ModelSpec};
use biasbench_core::selftrain::{ClassRatioMode, SelfTrainConfig};
use biasbench_core::Error;
use clap::Args;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Every option, as given on the command line or in a JSON config file.
/// Unset fields fall back to the config file, then to built-in defaults.
#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Settings {
    /// CSV file with a header row, or `synth` for the built-in blob data.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub label_col: Option<String>,
    /// Categorical columns to one-hot encode.
    #[arg(long, value_delimiter = ',')]
    pub categorical: Option<Vec<String>>,
    /// Seed of the built-in blob data.
    #[arg(long)]
    pub synth_seed: Option<u64>,

    #[arg(long)]
    pub bias: Option<BiasKind>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub n_total: Option<usize>,

    /// supervised, supervised_no_bias, st, cast, dcast or dcast_d<N>;
    /// a comma-separated list for `benchmark`.
    #[arg(long, value_delimiter = ',')]
    pub strategy: Option<Vec<String>>,
    /// logreg, mlp or forest; a comma-separated list for `benchmark`.
    #[arg(long, value_delimiter = ',')]
    pub model: Option<Vec<ModelKind>>,
    /// Diversity strength for `dcast`.
    #[arg(long)]
    pub d: Option<usize>,
    /// Pseudo-labels per iteration (default 3 x classes).
    #[arg(long)]
    pub s: Option<usize>,
    /// Confidence threshold.
    #[arg(long)]
    pub t: Option<f64>,
    /// Maximum self-training iterations.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub equal_class_ratio: Option<bool>,
    #[arg(long)]
    pub validation_fraction: Option<f64>,
    #[arg(long)]
    pub rf_percentile: Option<f64>,

    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub labeled_fraction: Option<f64>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Run index used by `train`.
    #[arg(long)]
    pub run: Option<usize>,
    #[arg(long, env = "BIASBENCH_SEED")]
    pub seed: Option<u64>,

    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for `benchmark` (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Also write every self-training trace (`benchmark`).
    #[arg(long)]
    pub keep_traces: Option<bool>,
}

macro_rules! overlay {
    ($hi:expr, $lo:expr, $($f:ident),+) => {
        Settings { $($f: $hi.$f.or($lo.$f)),+ }
    };
}

impl Settings {
    pub fn from_file(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        serde_json::from_str(&text)
            .map_err(|e| Error::InvalidParameter(format!("config file {}: {e}", path.display())))
    }

    /// Fields set in `self` win over those in `lower`.
    pub fn over(self, lower: Settings) -> Settings {
        overlay!(
            self, lower, dataset, label_col, categorical, synth_seed, bias, k, b, n_total, strategy, model, d, s, t, m,
            patience, equal_class_ratio, validation_fraction, rf_percentile, test_fraction, labeled_fraction, runs,
            seeds, run, seed, out, threads, keep_traces
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSource {
    Synth { seed: u64 },
    Csv { path: String, label_col: String, categorical: Vec<String> },
}

impl DatasetSource {
    pub fn id(&self) -> String {
        match self {
            DatasetSource::Synth { seed } => format!("synth-{seed}"),
            DatasetSource::Csv { path, .. } => Path::new(path)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.clone()),
        }
    }
}

/// Every setting with defaults filled in; hashed and embedded in outputs.
/// Output location and thread count do not affect results and are left out.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Resolved {
    pub command: String,
    pub dataset: DatasetSource,
    pub bias: BiasSpec,
    pub plan: SplitPlan,
    pub strategies: Vec<Strategy>,
    pub models: Vec<ModelSpec>,
    pub self_training: SelfTrainConfig,
    pub seeds_per_run: usize,
    pub run: usize,
}

impl Resolved {
    /// First 16 hex digits of the SHA-256 of the canonical JSON.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("serialisable config");
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }
}

fn parse_strategy(name: &str, d: usize) -> Result<Strategy, Error> {
    match name {
        "dcast" => Ok(Strategy::Dcast(d)),
        other => other.parse(),
    }
}

pub fn resolve(command: &str, s: &Settings) -> Result<Resolved, Error> {
    let seed = s.seed.unwrap_or(0);
    let dataset = match s.dataset.as_deref().unwrap_or("synth") {
        "synth" => DatasetSource::Synth {
            seed: s.synth_seed.unwrap_or(0),
        },
        path => DatasetSource::Csv {
            path: path.to_string(),
            label_col: s
                .label_col
                .clone()
                .ok_or_else(|| Error::InvalidParameter("--label-col is required for CSV datasets".into()))?,
            categorical: s.categorical.clone().unwrap_or_default(),
        },
    };
    let kind = s.bias.unwrap_or(BiasKind::Hierarchy);
    let bias = BiasSpec {
        kind,
        k: s.k.unwrap_or(30),
        b: s.b.unwrap_or(if kind == BiasKind::Hierarchy { 0.9 } else { 0.0 }),
        n_total: s.n_total.unwrap_or(if kind == BiasKind::Dirichlet { 60 } else { 0 }),
        seed,
    };
    let plan = SplitPlan {
        test_fraction: s.test_fraction.unwrap_or(0.2),
        labeled_fraction: s.labeled_fraction.unwrap_or(0.3),
        n_runs: s.runs.unwrap_or(30),
        seed,
    };
    let d = s.d.unwrap_or(10);
    let default_strategies: Vec<String> = if command == "benchmark" {
        ["supervised_no_bias", "supervised_bias", "st", "cast", "dcast"].map(String::from).to_vec()
    } else {
        vec!["dcast".into()]
    };
    let strategies = s
        .strategy
        .clone()
        .unwrap_or(default_strategies)
        .iter()
        .map(|n| parse_strategy(n.trim(), d))
        .collect::<Result<Vec<_>, _>>()?;
    let models = s
        .model
        .clone()
        .unwrap_or_else(|| vec![ModelKind::Mlp])
        .into_iter()
        .map(ModelSpec::default_for)
        .collect();
    let self_training = SelfTrainConfig {
        max_iterations: s.m.unwrap_or(100),
        samples_per_iteration: s.s,
        confidence_threshold: s.t.unwrap_or(0.9),
        diversity: d,
        class_ratio_mode: if s.equal_class_ratio.unwrap_or(false) {
            ClassRatioMode::EqualPerClass
        } else {
            ClassRatioMode::PreserveLabeledRatios
        },
        rf_threshold_percentile: s.rf_percentile,
        patience: s.patience.unwrap_or(5),
        validation_fraction: s.validation_fraction.unwrap_or(0.2),
    };
    Ok(Resolved {
        command: command.to_string(),
        dataset,
        bias,
        plan,
        strategies,
        models,
        self_training,
        seeds_per_run: s.seeds.unwrap_or(10),
        run: s.run.unwrap_or(0),
    })
}
