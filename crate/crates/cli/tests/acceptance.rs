//! End-to-end acceptance checks, one PASS/FAIL line each.
//!
//! Run with `cargo test -p biasbench-cli --test acceptance`.

#[path = "../../core/tests/common/mod.rs"]
mod oracles;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use biasbench_core::bias::{self, BiasSpec};
use biasbench_core::cluster::{agglomerate, pairwise_euclidean, Linkage};
use biasbench_core::data::{make_runs, standardize, test_split, Dataset, SplitPlan, Standardizer};
use biasbench_core::eval::{
    ks_two_sample, median, run_benchmark, wilcoxon_one_sided, Alternative, BenchmarkConfig, RunReport, Strategy,
};
use biasbench_core::learners::mlp::{self, Architecture};
use biasbench_core::learners::{logreg, ModelKind, ModelSpec};
use biasbench_core::selftrain::SelfTrainConfig;
use biasbench_core::synth::{gaussian_blobs, BlobConfig};
use ndarray::Array2;
use oracles::{OracleLinkage, TraceLimits};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fixture() -> Dataset {
    gaussian_blobs(&BlobConfig::two_by_two(0)).unwrap()
}

fn plan(n_runs: usize) -> SplitPlan {
    SplitPlan {
        test_fraction: 0.2,
        labeled_fraction: 0.3,
        n_runs,
        seed: 0,
    }
}

fn clustering_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    for case in 0..200 {
        let n = rng.random_range(3..=64);
        let dim = rng.random_range(1..=5);
        let points: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random_range(-10.0..10.0)).collect()).collect();
        let dist = pairwise_euclidean(&oracles::to_array(&points)).unwrap();
        for (linkage, oracle) in [(Linkage::Single, OracleLinkage::Single), (Linkage::Ward, OracleLinkage::Ward)] {
            let merges: Vec<(usize, usize)> =
                agglomerate(&dist, linkage).unwrap().merges().iter().map(|m| (m.left, m.right)).collect();
            ensure(
                oracles::partitions_from_merges(n, &merges) == oracles::naive_partitions(&points, oracle),
                || format!("instance {case} (n = {n}, {linkage:?}) differs from the oracle"),
            )?;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:.1?}"))?;
    Ok("200 instances x 2 linkages identical".into())
}

fn ks_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..500 {
        let (n1, n2) = (rng.random_range(1..60), rng.random_range(1..60));
        // Coarse values force ties within and across samples.
        let coarse = rng.random_bool(0.5);
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| if coarse { rng.random_range(0..8) as f64 } else { rng.random_range(-3.0..3.0) })
                .collect()
        };
        let (a, b) = (draw(n1), draw(n2));
        let got = ks_two_sample(&a, &b).unwrap().statistic;
        let want = oracles::brute_force_ks(&a, &b);
        ensure(got == want, || format!("case {case}: {got} != {want}"))?;
    }
    let worked = ks_two_sample(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap().statistic;
    ensure(worked == 1.0 / 3.0, || format!("[1,2,3] vs [2,3,4] gave {worked}"))?;
    Ok("500 pairs exact; [1,2,3] vs [2,3,4] = 1/3".into())
}

fn gradients() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for case in 0..20 {
        let (n, f, c) = (rng.random_range(2..10), rng.random_range(1..6), rng.random_range(2..5));
        let x = Array2::from_shape_fn((n, f), |_| rng.random_range(-2.0..2.0));
        let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();

        let w: Vec<f64> = (0..f * c + c).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, analytic) = logreg::objective_flat(&w, &x, &y, c, 1.0);
        let numeric = oracles::finite_difference(|p| logreg::objective_flat(p, &x, &y, c, 1.0).0, &w, 1e-5);
        let e_lr = oracles::max_relative_error(&analytic, &numeric, 1e-5);

        let arch = Architecture::new(vec![f, 8, 12, c]);
        // Random biases keep every ReLU pre-activation off its kink.
        let p: Vec<f64> = (0..arch.n_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, analytic) = mlp::objective_flat(&arch, &p, &x, &y);
        let numeric = oracles::finite_difference(|q| mlp::objective_flat(&arch, q, &x, &y).0, &p, 1e-5);
        let e_mlp = oracles::max_relative_error(&analytic, &numeric, 1e-5);

        ensure(e_lr < 1e-4 && e_mlp < 1e-4, || format!("batch {case}: logreg {e_lr:.2e}, mlp {e_mlp:.2e}"))?;
        worst = worst.max(e_lr).max(e_mlp);
    }
    Ok(format!("20 batches, max relative error {worst:.2e}"))
}

fn hierarchy_shift() -> Check {
    let start = Instant::now();
    let d = fixture();
    let plan = plan(30);
    let cfg = BenchmarkConfig {
        plan: plan.clone(),
        bias: BiasSpec::hierarchy(30, 0.9, 0),
        strategies: vec![Strategy::SupervisedBias],
        models: vec![ModelSpec::default_for(ModelKind::Mlp)],
        self_training: SelfTrainConfig::default(),
        seeds_per_run: 1,
    };
    let (train, _, _) = test_split(&d, &plan).unwrap();
    let (train, _, _) = standardize(&train, &[]);
    let runs = make_runs(&train, &plan).unwrap();

    let mut strong = [0usize; 2];
    let mut ks = BTreeMap::<(&str, usize), Vec<f64>>::new();
    for (r, run) in runs.iter().enumerate() {
        for (name, spec) in [("hierarchy", cfg.bias.reseeded(cfg.bias_seed(r))), ("random", BiasSpec::random(30, cfg.bias_seed(r)))] {
            let sel = bias::induce(&run.labeled, &spec).map_err(|e| format!("run {r} {name}: {e}"))?;
            for shift in bias::selection_shift(&run.labeled, &sel) {
                let res = ks_two_sample(&shift.selected, &shift.all).unwrap();
                let brute = oracles::brute_force_ks(&shift.selected, &shift.all);
                ensure(res.statistic == brute, || format!("run {r}: KS {} vs brute force {brute}", res.statistic))?;
                if name == "hierarchy" && res.statistic > 0.65 && res.p_value < 0.05 {
                    strong[shift.class] += 1;
                }
                ks.entry((name, shift.class)).or_default().push(res.statistic);
            }
        }
    }
    let mut detail = Vec::new();
    for c in 0..2 {
        let h = median(&ks[&("hierarchy", c)]).unwrap();
        let r = median(&ks[&("random", c)]).unwrap();
        detail.push(format!("class {c}: {}/30 strong, median KS {h:.3} vs random {r:.3}", strong[c]));
        ensure(strong[c] * 10 >= 30 * 9, || detail.join("; "))?;
        ensure(h > r, || detail.join("; "))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(120), || format!("took {elapsed:.1?}"))?;
    Ok(detail.join("; "))
}

/// The 30-run mlp benchmark behind the accuracy and trace criteria.
fn mlp_benchmark() -> Result<(RunReport, Duration), String> {
    let d = fixture();
    let cfg = BenchmarkConfig {
        plan: plan(30),
        bias: BiasSpec::hierarchy(30, 0.9, 0),
        strategies: vec![
            Strategy::SupervisedNoBias,
            Strategy::SupervisedBias,
            Strategy::SelfTraining,
            Strategy::Dcast(10),
        ],
        models: vec![ModelSpec::default_for(ModelKind::Mlp)],
        self_training: SelfTrainConfig::default().resolved(2),
        seeds_per_run: 10,
    };
    let start = Instant::now();
    let report = run_benchmark(&d, "synth-0", &cfg, Some(1), true).map_err(|e| e.to_string())?;
    Ok((report, start.elapsed()))
}

/// Per-run medians of a strategy; every run must have one.
fn run_medians(report: &RunReport, s: Strategy) -> Result<Vec<f64>, String> {
    let r = report.result(s, ModelKind::Mlp).ok_or(format!("no {s} result"))?;
    r.median_accuracy.iter().map(|a| a.ok_or(format!("{s} has failed runs"))).collect()
}

fn bias_hurts(report: &RunReport) -> Check {
    let no_bias = run_medians(report, Strategy::SupervisedNoBias)?;
    let biased = run_medians(report, Strategy::SupervisedBias)?;
    let (m0, m1) = (median(&no_bias).unwrap(), median(&biased).unwrap());
    let p = wilcoxon_one_sided(&no_bias, &biased, Alternative::Greater).unwrap();
    let detail = format!("no bias {m0:.4}, biased {m1:.4}, p = {p:.2e}");
    ensure(m1 < m0 && p < 0.05, || detail.clone())?;
    Ok(detail)
}

fn dcast_mitigates(report: &RunReport, elapsed: Duration) -> Check {
    let biased = run_medians(report, Strategy::SupervisedBias)?;
    let st = run_medians(report, Strategy::SelfTraining)?;
    let dcast = run_medians(report, Strategy::Dcast(10))?;
    let (mb, ms, md) = (median(&biased).unwrap(), median(&st).unwrap(), median(&dcast).unwrap());
    let p = wilcoxon_one_sided(&dcast, &biased, Alternative::Greater).unwrap();
    let detail = format!(
        "dcast_d10 {md:.4} vs biased {mb:.4} (p = {p:.2e}), st {ms:.4}; benchmark {:.0?} on 1 worker",
        elapsed
    );
    ensure(md > mb && p < 0.05 && md >= ms, || detail.clone())?;
    ensure(elapsed < Duration::from_secs(15 * 60), || detail.clone())?;
    Ok(detail)
}

fn replay(report: &RunReport, cfg: &SelfTrainConfig) -> Result<usize, String> {
    ensure(report.trace_violations.is_empty(), || format!("{:?}", report.trace_violations))?;
    for t in &report.traces {
        let lim = TraceLimits {
            n_classes: 2,
            t: cfg.confidence_threshold,
            s: cfg.samples_per_iteration(2),
            m: cfg.max_iterations,
            patience: cfg.patience,
            class_aware: t.strategy != Strategy::SelfTraining,
            fixed_threshold: t.model != ModelKind::Forest,
        };
        let problems = oracles::jsonl_trace_problems(&t.trace.to_jsonl(), lim);
        ensure(problems.is_empty(), || {
            format!("run {} seed {} {}/{}: {problems:?}", t.run, t.seed_index, t.strategy, t.model)
        })?;
    }
    Ok(report.traces.len())
}

fn trace_invariants(report: &RunReport) -> Check {
    let mlp_traces = replay(report, &report.config.self_training)?;
    let cfg = BenchmarkConfig {
        plan: plan(5),
        bias: BiasSpec::hierarchy(30, 0.9, 0),
        strategies: vec![Strategy::SelfTraining, Strategy::Cast, Strategy::Dcast(10)],
        models: vec![ModelSpec::default_for(ModelKind::LogReg), ModelSpec::default_for(ModelKind::Forest)],
        self_training: SelfTrainConfig::default().resolved(2),
        seeds_per_run: 2,
    };
    let other = run_benchmark(&fixture(), "synth-0", &cfg, Some(1), true).map_err(|e| e.to_string())?;
    let other_traces = replay(&other, &cfg.self_training)?;
    Ok(format!("{} traces replayed (mlp {mlp_traces}, logreg/forest {other_traces})", mlp_traces + other_traces))
}

fn cli_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut reports = Vec::new();
    for (i, threads) in ["1", "1", "4"].iter().enumerate() {
        let out = dir.path().join(format!("run{i}"));
        let status = Command::new(env!("CARGO_BIN_EXE_biasbench"))
            .args(["benchmark", "--runs", "3", "--seeds", "2", "--m", "10", "--model", "logreg,forest,mlp"])
            .args(["--threads", threads, "--seed", "7", "--out"])
            .arg(&out)
            .env_remove("BIASBENCH_SEED")
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.success(), || String::from_utf8_lossy(&status.stderr).into_owned())?;
        reports.push(std::fs::read(out.join("report.csv")).map_err(|e| e.to_string())?);
    }
    ensure(reports[0] == reports[1], || "two single-thread runs differ".into())?;
    ensure(reports[0] == reports[2], || "1 and 4 threads differ".into())?;
    Ok(format!("3 invocations, {} identical CSV bytes", reports[0].len()))
}

fn class_balance() -> Check {
    let d = fixture();
    let d = Standardizer::fit(&d).apply(&d);
    let mut shares = Vec::new();
    for seed in 0..30 {
        for spec in [BiasSpec::hierarchy(30, 0.9, seed), BiasSpec::random(30, seed)] {
            let sel = bias::induce(&d, &spec).map_err(|e| e.to_string())?;
            let counts: Vec<usize> =
                (0..2).map(|c| sel.indices.iter().filter(|&&i| d.labels()[i] == c).count()).collect();
            ensure(counts == [30, 30], || format!("{:?} seed {seed}: {counts:?}", spec.kind))?;
        }
        let sel = bias::induce(&d, &BiasSpec::dirichlet(60, seed)).map_err(|e| e.to_string())?;
        let ones = sel.indices.iter().filter(|&&i| d.labels()[i] == 1).count();
        shares.push(ones as f64 / sel.len() as f64);
    }
    let mean = shares.iter().sum::<f64>() / 30.0;
    let sd = (shares.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / 29.0).sqrt();
    ensure(sd > 0.0, || "dirichlet class balance constant".into())?;
    Ok(format!("hierarchy/random SD 0 over 30 seeds; dirichlet SD {sd:.3}"))
}

fn wilcoxon_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for case in 0..100 {
        let n = rng.random_range(1..=12);
        // Small integers give zero differences and tied magnitudes.
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64).collect();
        for (alt, greater) in [(Alternative::Greater, true), (Alternative::Less, false)] {
            let got = wilcoxon_one_sided(&x, &y, alt).unwrap();
            let want = oracles::enumerated_wilcoxon(&x, &y, greater);
            ensure((got - want).abs() < 1e-12, || format!("case {case} {alt:?}: {got} vs {want}"))?;
        }
    }
    let p = wilcoxon_one_sided(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0], Alternative::Greater).unwrap();
    ensure(p == 0.125, || format!("[1,2,3] vs [0,0,0] gave {p}"))?;
    Ok("100 vectors match enumeration; [1,2,3] vs [0,0,0] = 0.125".into())
}

fn main() -> ExitCode {
    let mut failures = 0;
    let mut report = |id: usize, name: &str, check: &mut dyn FnMut() -> Check| {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or(e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {id:>2} {name} ({secs:.1} s): {detail}"),
            Err(detail) => {
                failures += 1;
                println!("FAIL {id:>2} {name} ({secs:.1} s): {detail}");
            }
        }
    };

    report(1, "clustering oracle", &mut clustering_oracle);
    report(2, "KS oracle", &mut ks_oracle);
    report(3, "gradient checks", &mut gradients);
    report(4, "hierarchy bias shift", &mut hierarchy_shift);
    let bench = mlp_benchmark();
    match &bench {
        Ok((r, elapsed)) => {
            report(5, "bias hurts supervised", &mut || bias_hurts(r));
            report(6, "dcast mitigates bias", &mut || dcast_mitigates(r, *elapsed));
            report(7, "self-training trace invariants", &mut || trace_invariants(r));
        }
        Err(e) => {
            for (id, name) in [(5, "bias hurts supervised"), (6, "dcast mitigates bias"), (7, "trace invariants")] {
                report(id, name, &mut || Err(format!("benchmark failed: {e}")));
            }
        }
    }
    report(8, "benchmark determinism", &mut cli_determinism);
    report(9, "class balance", &mut class_balance);
    report(10, "wilcoxon exact branch", &mut wilcoxon_oracle);

    if failures == 0 {
        println!("acceptance: all 10 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failures} of 10 criteria failed");
        ExitCode::FAILURE
    }
}
