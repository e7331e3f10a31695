//! Runs × seeds × strategies benchmarking.
//!
//! The test split is drawn once. Each run draws its own labeled/unlabeled
//! partition, biases the labeled part and trains every (strategy, model)
//! pair with `seeds_per_run` seeds. Accuracies are reduced to a per-run
//! median over seeds, then compared across runs. Cells are independent and
//! may run on a worker pool; assembly follows cell order, so the report does
//! not depend on scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ks::{ks_two_sample, KsResult};
use super::wilcoxon::{wilcoxon_one_sided, Alternative};
use super::{median, train_strategy, Strategy};
use crate::bias::{self, BiasSpec, Selection};
use crate::data::{make_runs, standardize, test_split, Dataset, RunSplit, SplitPlan};
use crate::error::{Error, Result};
use crate::learners::{ModelKind, ModelSpec};
use crate::rng::{self, tag};
use crate::selftrain::{check_trace, SelfTrainConfig, SelfTrainTrace};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub plan: SplitPlan,
    pub bias: BiasSpec,
    pub strategies: Vec<Strategy>,
    pub models: Vec<ModelSpec>,
    pub self_training: SelfTrainConfig,
    pub seeds_per_run: usize,
}

impl BenchmarkConfig {
    pub fn validate(&self, n_classes: usize) -> Result<()> {
        self.plan.validate()?;
        self.bias.validate()?;
        self.self_training.validate(n_classes)?;
        if self.strategies.is_empty() || self.models.is_empty() {
            return Err(Error::InvalidParameter("benchmark needs at least one strategy and one model".into()));
        }
        if self.seeds_per_run == 0 {
            return Err(Error::InvalidParameter("seeds_per_run must be positive".into()));
        }
        Ok(())
    }

    /// Bias seed of one run.
    pub fn bias_seed(&self, run: usize) -> u64 {
        rng::derive(self.bias.seed, &[tag::BIAS, run as u64])
    }

    /// Training seed of one (run, seed) cell; shared by all strategies so
    /// comparisons are paired.
    pub fn cell_seed(&self, run: usize, seed_index: usize) -> u64 {
        rng::derive(self.plan.seed, &[tag::MODEL, run as u64, seed_index as u64])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassKs {
    pub class: usize,
    pub ks: KsResult,
}

/// Distribution shift of one run's biased selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunShift {
    pub run: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    pub per_class_counts: Vec<usize>,
    pub classes: Vec<ClassKs>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub run: usize,
    pub seed_index: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedTest {
    /// One-sided p-value for "strategy beats the biased supervised baseline".
    pub p_value: f64,
    pub n_pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyResult {
    pub strategy: Strategy,
    pub model: ModelKind,
    /// Median test accuracy over seeds, per run; `None` when every seed failed.
    pub median_accuracy: Vec<Option<f64>>,
    pub overall_median: Option<f64>,
    pub failed_cells: usize,
    pub failures: Vec<CellFailure>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub vs_supervised_bias: Option<PairedTest>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellTrace {
    pub run: usize,
    pub seed_index: usize,
    pub strategy: Strategy,
    pub model: ModelKind,
    pub trace: SelfTrainTrace,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    pub config: BenchmarkConfig,
    pub n_runs: usize,
    pub seeds_per_run: usize,
    pub shift: Vec<RunShift>,
    pub results: Vec<StrategyResult>,
    /// Structural problems found when replaying self-training traces.
    pub trace_violations: Vec<String>,
    pub traced_runs: usize,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub traces: Vec<CellTrace>,
}

impl RunReport {
    pub fn result(&self, strategy: Strategy, model: ModelKind) -> Option<&StrategyResult> {
        self.results.iter().find(|r| r.strategy == strategy && r.model == model)
    }

    pub fn total_cells(&self) -> usize {
        self.results.len() * self.n_runs * self.seeds_per_run
    }

    pub fn failed_cells(&self) -> usize {
        self.results.iter().map(|r| r.failed_cells).sum()
    }

    pub fn all_failed(&self) -> bool {
        self.failed_cells() == self.total_cells()
    }

    /// Flat per-run table: one row per (strategy, model, run).
    pub fn to_csv(&self, config_hash: &str) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["dataset", "bias", "strategy", "model", "run", "median_accuracy", "config_hash"])?;
        let bias = self.config.bias.kind.to_string();
        for r in &self.results {
            let strategy = r.strategy.to_string();
            let model = r.model.to_string();
            for (run, acc) in r.median_accuracy.iter().enumerate() {
                let acc = acc.map(|a| a.to_string()).unwrap_or_default();
                w.write_record([&self.dataset, &bias, &strategy, &model, &run.to_string(), &acc, config_hash])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

struct RunData {
    split: RunSplit,
    biased: std::result::Result<Dataset, String>,
}

struct Cell {
    run: usize,
    strategy: usize,
    model: usize,
    seed_index: usize,
}

struct CellOutcome {
    accuracy: std::result::Result<f64, String>,
    violations: Vec<String>,
    trace: Option<SelfTrainTrace>,
}

fn selection_ks(labeled: &Dataset, sel: &Selection) -> Vec<ClassKs> {
    bias::selection_shift(labeled, sel)
        .into_iter()
        .filter_map(|s| ks_two_sample(&s.selected, &s.all).ok().map(|ks| ClassKs { class: s.class, ks }))
        .collect()
}

/// Runs the full protocol on `dataset`. `threads` caps the worker pool
/// (`None` uses rayon's default); the result is identical for any value.
pub fn run_benchmark(
    dataset: &Dataset,
    dataset_id: &str,
    cfg: &BenchmarkConfig,
    threads: Option<usize>,
    keep_traces: bool,
) -> Result<RunReport> {
    cfg.validate(dataset.n_classes())?;
    let plan = &cfg.plan;
    let (train, test, _) = test_split(dataset, plan)?;
    let (train, others, _) = standardize(&train, &[test]);
    let test = others.into_iter().next().expect("test set");
    let splits = make_runs(&train, plan)?;

    let mut shift = Vec::with_capacity(plan.n_runs);
    let mut runs = Vec::with_capacity(plan.n_runs);
    for (r, split) in splits.into_iter().enumerate() {
        let spec = cfg.bias.reseeded(cfg.bias_seed(r));
        let (biased, run_shift) = match bias::induce(&split.labeled, &spec) {
            Ok(sel) => (
                Ok(split.labeled.subset(&sel.indices)),
                RunShift {
                    run: r,
                    error: None,
                    per_class_counts: sel.per_class_counts.clone(),
                    classes: selection_ks(&split.labeled, &sel),
                },
            ),
            Err(e) => (
                Err(e.to_string()),
                RunShift {
                    run: r,
                    error: Some(e.to_string()),
                    per_class_counts: Vec::new(),
                    classes: Vec::new(),
                },
            ),
        };
        shift.push(run_shift);
        runs.push(RunData { split, biased });
    }

    let mut cells = Vec::new();
    for run in 0..plan.n_runs {
        for strategy in 0..cfg.strategies.len() {
            for model in 0..cfg.models.len() {
                for seed_index in 0..cfg.seeds_per_run {
                    cells.push(Cell {
                        run,
                        strategy,
                        model,
                        seed_index,
                    });
                }
            }
        }
    }

    let evaluate = |cell: &Cell| -> CellOutcome {
        let data = &runs[cell.run];
        let strategy = cfg.strategies[cell.strategy];
        let spec = &cfg.models[cell.model];
        let labeled = if strategy.uses_bias() {
            match &data.biased {
                Ok(b) => b,
                Err(e) => {
                    return CellOutcome {
                        accuracy: Err(format!("bias induction failed: {e}")),
                        violations: Vec::new(),
                        trace: None,
                    }
                }
            }
        } else {
            &data.split.labeled
        };
        let seed = cfg.cell_seed(cell.run, cell.seed_index);
        let trained = train_strategy(strategy, spec, &cfg.self_training, labeled, data.split.unlabeled.features(), seed);
        match trained.and_then(|(model, trace)| Ok((model.accuracy(test.features(), test.labels())?, trace))) {
            Ok((acc, trace)) => {
                let violations = trace
                    .as_ref()
                    .map(|t| {
                        check_trace(t, &cfg.self_training, dataset.n_classes(), strategy != Strategy::SelfTraining)
                            .into_iter()
                            .map(|v| format!("run {} seed {} {strategy}/{}: {v}", cell.run, cell.seed_index, spec.kind()))
                            .collect()
                    })
                    .unwrap_or_default();
                CellOutcome {
                    accuracy: Ok(acc),
                    violations,
                    trace: if keep_traces { trace } else { None },
                }
            }
            Err(e) => CellOutcome {
                accuracy: Err(e.to_string()),
                violations: Vec::new(),
                trace: None,
            },
        }
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot build worker pool: {e}")))?;
    let outcomes: Vec<CellOutcome> = pool.install(|| cells.par_iter().map(evaluate).collect());

    let n_models = cfg.models.len();
    let n_seeds = cfg.seeds_per_run;
    let mut results = Vec::new();
    let mut trace_violations = Vec::new();
    let mut traces = Vec::new();
    let mut traced_runs = 0;
    for (si, &strategy) in cfg.strategies.iter().enumerate() {
        for (mi, spec) in cfg.models.iter().enumerate() {
            let mut medians = Vec::with_capacity(plan.n_runs);
            let mut failures = Vec::new();
            for run in 0..plan.n_runs {
                let mut accs = Vec::with_capacity(n_seeds);
                for seed_index in 0..n_seeds {
                    let at = ((run * cfg.strategies.len() + si) * n_models + mi) * n_seeds + seed_index;
                    let out = &outcomes[at];
                    match &out.accuracy {
                        Ok(a) => accs.push(*a),
                        Err(message) => failures.push(CellFailure {
                            run,
                            seed_index,
                            message: message.clone(),
                        }),
                    }
                    trace_violations.extend(out.violations.iter().cloned());
                    if strategy.is_self_training() && out.accuracy.is_ok() {
                        traced_runs += 1;
                    }
                    if let Some(trace) = &out.trace {
                        traces.push(CellTrace {
                            run,
                            seed_index,
                            strategy,
                            model: spec.kind(),
                            trace: trace.clone(),
                        });
                    }
                }
                medians.push(median(&accs));
            }
            let present: Vec<f64> = medians.iter().flatten().copied().collect();
            results.push(StrategyResult {
                strategy,
                model: spec.kind(),
                overall_median: median(&present),
                failed_cells: failures.len(),
                failures,
                median_accuracy: medians,
                vs_supervised_bias: None,
            });
        }
    }

    let baselines: Vec<(ModelKind, Vec<Option<f64>>)> = results
        .iter()
        .filter(|r| r.strategy == Strategy::SupervisedBias)
        .map(|r| (r.model, r.median_accuracy.clone()))
        .collect();
    for r in results.iter_mut().filter(|r| r.strategy != Strategy::SupervisedBias) {
        let Some((_, base)) = baselines.iter().find(|(m, _)| *m == r.model) else {
            continue;
        };
        let (x, y): (Vec<f64>, Vec<f64>) = r
            .median_accuracy
            .iter()
            .zip(base)
            .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
            .unzip();
        if x.is_empty() {
            continue;
        }
        r.vs_supervised_bias = Some(PairedTest {
            p_value: wilcoxon_one_sided(&x, &y, Alternative::Greater)?,
            n_pairs: x.len(),
        });
    }

    Ok(RunReport {
        dataset: dataset_id.to_string(),
        config: cfg.clone(),
        n_runs: plan.n_runs,
        seeds_per_run: n_seeds,
        shift,
        results,
        trace_violations,
        traced_runs,
        traces,
    })
}
