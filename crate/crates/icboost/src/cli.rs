//! Command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use icboost_core::boost::{fit, FeatureLearners, Task};
use icboost_core::icrf::{icrf_fit_with, IcrfParams};
use icboost_core::metrics::{classification_metrics, skdt, smaxae, smsqe};

use crate::benchmark::{run_benchmark, BenchmarkPlan};
use crate::config::{registry_help, RawConfig};
use crate::error::{AppError, AppResult};
use crate::experiment::{boost_config, forest_seed, method_responses, replicate_data, transform_for, Method, StageTimes};
use crate::io::{create, load_dataset, load_features, load_predictions, open, write_dataset, write_features, write_pairs, write_predictions, FeatureTable, LoadedData};
use crate::manifest::RunManifest;
use crate::model::StoredModel;
use crate::parallel::{with_threads, RayonExecutor};
use crate::verify::{run_theory_checks, write_report, Status};

pub const TRAIN_FILE: &str = "train.csv";
pub const TEST_FILE: &str = "test.csv";
pub const MODEL_FILE: &str = "model.json";
pub const RISK_TRACE_FILE: &str = "risk_trace.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const EVALUATION_FILE: &str = "metrics.csv";
pub const THEORY_FILE: &str = "theory.csv";

#[derive(Debug, Parser)]
#[command(name = "icboost", version, about = "Boosting for interval-censored survival data", after_help = KEYS_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Flat key = value configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Base seed; overrides the `seed` key.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Method: O, R, N, CUT or IMP.
    #[arg(long, global = true)]
    pub method: Option<Method>,
}

const KEYS_HELP: &str = "Run `icboost keys` to list every configuration key with its default.";

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one AFT data set: train.csv (brackets) and test.csv (truth).
    Simulate,
    /// Fit a boosting model to a data file.
    Fit {
        /// Data set with columns id,left,right,x1..xp[,y][,phi].
        #[arg(long, value_name = "PATH")]
        data: PathBuf,
    },
    /// Predict with a saved model.
    Predict {
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        /// Feature file with columns id,x1..xp.
        #[arg(long, value_name = "PATH")]
        features: PathBuf,
    },
    /// Score predictions against the true phi of a truth file.
    Evaluate {
        #[arg(long, value_name = "PATH")]
        predictions: PathBuf,
        /// Truth file with columns id,x1..xp,phi.
        #[arg(long, value_name = "PATH")]
        truth: PathBuf,
    },
    /// Numerical checks of the boosting theory.
    VerifyTheory,
    /// Replication study over methods and replicates.
    Benchmark,
    /// List the configuration keys.
    Keys,
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(cli: &Cli) -> AppResult<RawConfig> {
    let mut raw = match &cli.config {
        Some(path) => RawConfig::load(path)?,
        None => RawConfig::default(),
    };
    if let Some(seed) = cli.seed {
        raw.set("seed", seed)?;
    }
    Ok(raw)
}

pub fn run(cli: &Cli) -> AppResult<()> {
    let mut raw = load_config(cli)?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::Simulate => simulate(&raw, out),
        Command::Fit { data } => fit_command(&raw, data, cli.method.unwrap_or(Method::Cut), cli.threads, out),
        Command::Predict { model, features } => predict(&raw, model, features, out),
        Command::Evaluate { predictions, truth } => evaluate(&raw, predictions, truth, out),
        Command::VerifyTheory => verify_theory(&raw, out),
        Command::Benchmark => {
            if let Some(m) = cli.method {
                raw.set("methods", m)?;
            }
            benchmark(&raw, cli.threads, out)
        }
        Command::Keys => {
            print!("{}", registry_help());
            Ok(())
        }
    }
}

fn announce(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn simulate(raw: &RawConfig, out: &Path) -> AppResult<()> {
    let sim = raw.sim()?;
    let seed = raw.seed()?;
    let data = replicate_data(&sim, seed, 0)?;
    let n_train = data.train.len();
    let train = LoadedData {
        ids: (1..=n_train).map(|i| i.to_string()).collect(),
        dataset: data.train,
        y: Some(data.train_y),
        phi: Some(data.train_phi),
    };
    let test = FeatureTable {
        ids: (n_train + 1..=n_train + data.test_x.len()).map(|i| i.to_string()).collect(),
        rows: data.test_x,
        phi: Some(data.test_phi),
    };
    let train_path = out.join(TRAIN_FILE);
    let test_path = out.join(TEST_FILE);
    write_dataset(create(&train_path)?, &train)?;
    write_features(create(&test_path)?, &test)?;
    let mut manifest = RunManifest::new("simulate", &raw.hash(), seed);
    manifest.output(&train_path);
    manifest.output(&test_path);
    let m = manifest.write(out)?;
    announce(&[train_path, test_path, m]);
    Ok(())
}

fn fit_command(raw: &RawConfig, data: &Path, method: Method, threads: usize, out: &Path) -> AppResult<()> {
    let seed = raw.seed()?;
    let loaded = load_dataset(open(data)?, Some(raw.tau()?))?;
    let ds = &loaded.dataset;
    let base = raw.boost()?;
    let task = base.task;
    let g = transform_for(task)?;
    let mut times = StageTimes::default();

    let forest = if method.needs_forest() {
        let params = IcrfParams { seed: forest_seed(seed, 0), ..raw.icrf(ds.feature_dim)? };
        let t = Instant::now();
        let model = with_threads(threads, || icrf_fit_with(ds, &params, &RayonExecutor))
            .map_err(|e| AppError::runtime(format!("forest stage failed: {e}")))?;
        times.icrf_secs = t.elapsed().as_secs_f64();
        Some(model)
    } else {
        None
    };

    let t = Instant::now();
    let responses = method_responses(method, ds, loaded.y.as_deref(), loaded.phi.as_deref(), g, forest.as_ref())?;
    times.transform_secs = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let rows: Vec<Vec<f64>> = ds.observations.iter().map(|o| o.features.clone()).collect();
    let learners = FeatureLearners::new(FeatureLearners::columns_of(&rows), base.df)
        .map_err(|e| AppError::runtime(format!("spline setup failed: {e}")))?;
    let result = fit(&learners, &responses, &boost_config(&base, method, task))
        .map_err(|e| AppError::runtime(format!("boosting stage failed: {e}")))?;
    times.boosting_secs = t.elapsed().as_secs_f64();

    let model_path = out.join(MODEL_FILE);
    let trace_path = out.join(RISK_TRACE_FILE);
    let stored = StoredModel::new(method, result.model);
    stored.write(create(&model_path)?)?;
    let trace: Vec<(String, String)> = stored.model.risk_trace.iter().enumerate().map(|(i, r)| (i.to_string(), r.to_string())).collect();
    write_pairs(create(&trace_path)?, ["iteration", "risk"], &trace)?;

    let mut manifest = RunManifest::new("fit", &raw.hash(), seed);
    manifest.push("method", method);
    manifest.push("task", task_label(task));
    manifest.push("stop_iteration", stored.model.stop_iteration);
    manifest.push("converged", stored.model.converged);
    if let Some(f) = &forest {
        manifest.push("forest_best_iteration", f.best_iteration);
    }
    manifest.times(&times);
    manifest.output(&model_path);
    manifest.output(&trace_path);
    let m = manifest.write(out)?;
    if !stored.model.converged {
        eprintln!("warning: boosting hit max_iterations = {} before the stopping rule fired", stored.model.stop_iteration);
    }
    announce(&[model_path, trace_path, m]);
    Ok(())
}

fn task_label(task: Task) -> String {
    match task {
        Task::Regression => "regression".into(),
        Task::Classification(s) => format!("classification(s={s})"),
    }
}

fn predict(raw: &RawConfig, model: &Path, features: &Path, out: &Path) -> AppResult<()> {
    let stored = StoredModel::read(open(model)?)?;
    let table = load_features(open(features)?)?;
    let pred = stored.predict(&table.rows)?;
    let path = out.join(PREDICTIONS_FILE);
    write_predictions(create(&path)?, &table.ids, &pred)?;
    let mut manifest = RunManifest::new("predict", &raw.hash(), raw.seed()?);
    manifest.push("method", stored.method);
    manifest.output(&path);
    let m = manifest.write(out)?;
    announce(&[path, m]);
    Ok(())
}

/// Predictions reordered to follow the truth file, matched by id.
fn align(pred_ids: &[String], pred: &[f64], truth_ids: &[String]) -> AppResult<Vec<f64>> {
    if pred.is_empty() {
        return Err(AppError::usage("no predictions to evaluate"));
    }
    if pred.len() != truth_ids.len() {
        return Err(AppError::usage(format!("{} predictions but {} truth rows", pred.len(), truth_ids.len())));
    }
    let index: std::collections::HashMap<&str, usize> = pred_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    if index.len() != pred_ids.len() {
        return Err(AppError::usage("prediction ids are not unique"));
    }
    truth_ids
        .iter()
        .map(|id| index.get(id.as_str()).map(|&i| pred[i]).ok_or_else(|| AppError::usage(format!("no prediction for id {id:?}"))))
        .collect()
}

fn na(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| x.to_string())
}

fn evaluate(raw: &RawConfig, predictions: &Path, truth: &Path, out: &Path) -> AppResult<()> {
    let (ids, values) = load_predictions(open(predictions)?)?;
    let table = load_features(open(truth)?)?;
    let phi = table.phi.as_ref().ok_or_else(|| AppError::usage("truth file needs a phi column"))?;
    let pred = align(&ids, &values, &table.ids)?;
    let rows: Vec<(String, String)> = match raw.boost()?.task {
        Task::Regression => vec![
            ("smaxae".into(), smaxae(&pred, phi)?.to_string()),
            ("smsqe".into(), smsqe(&pred, phi)?.to_string()),
            ("skdt".into(), skdt(&pred, phi)?.to_string()),
        ],
        Task::Classification(s) => {
            let m = classification_metrics(&pred, phi, s)?;
            vec![("sensitivity".into(), na(m.sensitivity)), ("specificity".into(), na(m.specificity))]
        }
    };
    let path = out.join(EVALUATION_FILE);
    write_pairs(create(&path)?, ["metric", "value"], &rows)?;
    let mut manifest = RunManifest::new("evaluate", &raw.hash(), raw.seed()?);
    manifest.output(&path);
    let m = manifest.write(out)?;
    announce(&[path, m]);
    Ok(())
}

fn verify_theory(raw: &RawConfig, out: &Path) -> AppResult<()> {
    let cfg = raw.verify()?;
    let t = Instant::now();
    let rows = run_theory_checks(&cfg)?;
    let path = out.join(THEORY_FILE);
    write_report(create(&path)?, &rows)?;
    let mut manifest = RunManifest::new("verify-theory", &raw.hash(), cfg.seed);
    manifest.push("total_secs", t.elapsed().as_secs_f64());
    manifest.output(&path);
    let m = manifest.write(out)?;
    announce(&[path, m]);
    let failed: Vec<&str> = rows.iter().filter(|r| r.status == Status::Fail).map(|r| r.check.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(AppError::runtime(format!("theory checks failed: {}", failed.join(", "))))
    }
}

fn benchmark(raw: &RawConfig, threads: usize, out: &Path) -> AppResult<()> {
    let plan = BenchmarkPlan {
        experiment: raw.experiment()?,
        seed: raw.seed()?,
        replicates: raw.replicates()?,
        trace_points: raw.trace_points()?,
        threads,
        config_hash: raw.hash(),
    };
    let summary = run_benchmark(&plan, out)?;
    announce(&summary.outputs);
    eprintln!("computed {} replicates, reused {}", summary.computed.len(), summary.reused.len());
    if summary.failures > 0 {
        return Err(AppError::runtime(format!("{} method fits failed; see failures.csv", summary.failures)));
    }
    Ok(())
}
