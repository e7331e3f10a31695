//! `biasbench`: induce selection bias, train with self-training, benchmark.

mod settings;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use biasbench_core::bias::{self, selection_shift};
use biasbench_core::data::{load_csv, make_run, standardize, test_split, Dataset, Standardizer};
use biasbench_core::eval::{ks_two_sample, run_benchmark, train_strategy, BenchmarkConfig};
use biasbench_core::synth::{gaussian_blobs, BlobConfig};
use biasbench_core::Error;
use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use settings::{resolve, DatasetSource, Resolved, Settings};

#[derive(Parser)]
#[command(name = "biasbench", version, about = "Selection-bias induction and class-aware self-training benchmarks")]
struct Cli {
    /// JSON file with default settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the built-in blob dataset as CSV.
    Synth(Settings),
    /// Induce a biased selection and report its per-class shift.
    Induce(Settings),
    /// Train one strategy on one run split.
    Train(Settings),
    /// Run the full runs x seeds x strategies protocol.
    Benchmark(Settings),
}

/// Failure with the process exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidParameter(_) | Error::UnknownColumn(_) | Error::Json(_) => 2,
            Error::Training(_) => 4,
            _ => 3,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, flags) = match cli.command {
        Command::Synth(s) => ("synth", s),
        Command::Induce(s) => ("induce", s),
        Command::Train(s) => ("train", s),
        Command::Benchmark(s) => ("benchmark", s),
    };
    let outcome = (|| {
        let file = match &cli.config {
            Some(path) => Settings::from_file(path)?,
            None => Settings::default(),
        };
        let settings = flags.over(file);
        let resolved = resolve(name, &settings)?;
        let out = settings.out.clone().unwrap_or_else(|| PathBuf::from("biasbench-out"));
        std::fs::create_dir_all(&out).map_err(|e| io_error(&out, e))?;
        match name {
            "synth" => cmd_synth(&resolved, &out),
            "induce" => cmd_induce(&resolved, &out),
            "train" => cmd_train(&resolved, &out),
            _ => cmd_benchmark(&resolved, &settings, &out),
        }
    })();
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("biasbench {name}: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> Failure {
    Error::Io {
        path: path.display().to_string(),
        source: e,
    }
    .into()
}

fn write(path: &Path, contents: &str) -> CmdResult {
    std::fs::write(path, contents).map_err(|e| io_error(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> CmdResult {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    write(path, &text)
}

/// Full config plus its hash, shared by every output file.
fn header(cfg: &Resolved) -> serde_json::Value {
    json!({ "config_hash": cfg.hash(), "config": cfg })
}

fn load(src: &DatasetSource) -> Result<Dataset, Error> {
    match src {
        DatasetSource::Synth { seed } => gaussian_blobs(&BlobConfig::two_by_two(*seed)),
        DatasetSource::Csv {
            path,
            label_col,
            categorical,
        } => load_csv(Path::new(path), label_col, categorical),
    }
}

/// Resolved config with the class-dependent defaults made explicit.
fn for_dataset(cfg: &Resolved, d: &Dataset) -> Resolved {
    Resolved {
        self_training: cfg.self_training.resolved(d.n_classes()),
        ..cfg.clone()
    }
}

fn benchmark_config(cfg: &Resolved) -> BenchmarkConfig {
    BenchmarkConfig {
        plan: cfg.plan.clone(),
        bias: cfg.bias.clone(),
        strategies: cfg.strategies.clone(),
        models: cfg.models.clone(),
        self_training: cfg.self_training.clone(),
        seeds_per_run: cfg.seeds_per_run,
    }
}

fn cmd_synth(cfg: &Resolved, out: &Path) -> CmdResult {
    let d = load(&cfg.dataset)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut head: Vec<String> = d.feature_names().to_vec();
    head.push("label".into());
    w.write_record(&head).map_err(Error::from)?;
    for (row, &y) in d.features().rows().into_iter().zip(d.labels()) {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(d.class_names()[y].clone());
        w.write_record(&rec).map_err(Error::from)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let path = out.join("synth.csv");
    std::fs::write(&path, bytes).map_err(|e| io_error(&path, e))?;
    write_json(&out.join("config.json"), &header(cfg))?;
    println!("wrote {} samples to {}", d.n_samples(), path.display());
    Ok(())
}

fn cmd_induce(cfg: &Resolved, out: &Path) -> CmdResult {
    let d = load(&cfg.dataset)?;
    let cfg = for_dataset(cfg, &d);
    let d = Standardizer::fit(&d).apply(&d);
    let sel = bias::induce(&d, &cfg.bias)?;

    let mut selection = header(&cfg);
    selection["kind"] = json!(cfg.bias.kind);
    selection["params"] = json!({ "k": cfg.bias.k, "b": cfg.bias.b, "n_total": cfg.bias.n_total });
    selection["seed"] = json!(cfg.bias.seed);
    selection["indices"] = json!(sel.indices);
    selection["per_class_counts"] = json!(sel.per_class_counts);
    if let Some(c) = &sel.from_cluster_counts {
        selection["from_cluster_counts"] = json!(c);
    }
    write_json(&out.join("selection.json"), &selection)?;

    let mut classes = Vec::new();
    for shift in selection_shift(&d, &sel) {
        let ks = ks_two_sample(&shift.selected, &shift.all)?;
        println!(
            "class {:<12} selected {:>5}  KS {:.4}  p {:.3e}",
            d.class_names()[shift.class],
            ks.n1,
            ks.statistic,
            ks.p_value
        );
        classes.push(json!({
            "class": shift.class,
            "name": d.class_names()[shift.class],
            "statistic": ks.statistic,
            "p_value": ks.p_value,
            "n_selected": ks.n1,
            "n_class": ks.n2,
        }));
    }
    let mut shift = header(&cfg);
    shift["classes"] = json!(classes);
    write_json(&out.join("shift.json"), &shift)
}

fn cmd_train(cfg: &Resolved, out: &Path) -> CmdResult {
    let d = load(&cfg.dataset)?;
    let cfg = for_dataset(cfg, &d);
    let bench = benchmark_config(&cfg);
    bench.validate(d.n_classes())?;
    let strategy = cfg.strategies[0];
    let spec = &cfg.models[0];

    let (train, test, _) = test_split(&d, &cfg.plan)?;
    let (train, others, _) = standardize(&train, &[test]);
    let test = &others[0];
    let split = make_run(&train, &cfg.plan, cfg.run)?;
    let labeled = if strategy.uses_bias() {
        bias::induce(&split.labeled, &cfg.bias.reseeded(bench.bias_seed(cfg.run))).map(|sel| split.labeled.subset(&sel.indices))
    } else {
        Ok(split.labeled.clone())
    };

    let seed = bench.cell_seed(cfg.run, 0);
    let mut result = header(&cfg);
    result["strategy"] = json!(strategy);
    result["model"] = json!(spec.kind());
    result["run"] = json!(cfg.run);
    let trained = labeled
        .and_then(|labeled| train_strategy(strategy, spec, &cfg.self_training, &labeled, split.unlabeled.features(), seed))
        .and_then(|(model, trace)| Ok((model.accuracy(test.features(), test.labels())?, model, trace)));
    match trained {
        Ok((accuracy, model, trace)) => {
            write_json(&out.join("model.json"), &model.to_file())?;
            if let Some(trace) = &trace {
                write(&out.join("trace.jsonl"), &trace.to_jsonl())?;
                result["iterations"] = json!(trace.records.len());
                result["best_iteration"] = json!(trace.best_iteration);
                result["stop_reason"] = json!(trace.stop_reason);
            }
            result["test_accuracy"] = json!(accuracy);
            write_json(&out.join("result.json"), &result)?;
            println!("{strategy} / {}: test accuracy {accuracy:.4}", spec.kind());
            Ok(())
        }
        Err(e) => {
            result["error"] = json!(e.to_string());
            write_json(&out.join("result.json"), &result)?;
            let mut f = Failure::from(e);
            if f.code == 2 {
                f.code = 4;
            }
            Err(f)
        }
    }
}

fn cmd_benchmark(cfg: &Resolved, settings: &Settings, out: &Path) -> CmdResult {
    let d = load(&cfg.dataset)?;
    let cfg = for_dataset(cfg, &d);
    let bench = benchmark_config(&cfg);
    let keep_traces = settings.keep_traces.unwrap_or(false);
    let report = run_benchmark(&d, &cfg.dataset.id(), &bench, settings.threads, keep_traces)?;
    let hash = cfg.hash();

    write(&out.join("report.csv"), &report.to_csv(&hash)?)?;
    let mut full = header(&cfg);
    full["report"] = json!(report);
    write_json(&out.join("report.json"), &full)?;
    if keep_traces {
        let mut lines = String::new();
        for t in &report.traces {
            for line in t.trace.to_jsonl().lines() {
                let mut v: serde_json::Value = serde_json::from_str(line).map_err(Error::from)?;
                v["run"] = json!(t.run);
                v["seed_index"] = json!(t.seed_index);
                v["strategy"] = json!(t.strategy);
                v["model"] = json!(t.model);
                lines.push_str(&v.to_string());
                lines.push('\n');
            }
        }
        write(&out.join("traces.jsonl"), &lines)?;
    }

    println!("{:<20} {:<7} {:>15} {:>12} {:>7}", "strategy", "model", "median accuracy", "p vs biased", "failed");
    for r in &report.results {
        let acc = r.overall_median.map_or("-".into(), |a| format!("{a:.4}"));
        let p = r.vs_supervised_bias.as_ref().map_or("-".into(), |t| format!("{:.3e}", t.p_value));
        println!("{:<20} {:<7} {:>15} {:>12} {:>7}", r.strategy.to_string(), r.model.to_string(), acc, p, r.failed_cells);
    }
    if !report.trace_violations.is_empty() {
        eprintln!("{} self-training trace violations, see report.json", report.trace_violations.len());
    }
    if report.all_failed() {
        return Err(Failure {
            code: 4,
            message: "every benchmark cell failed".into(),
        });
    }
    Ok(())
}
