//! One simulation replicate: draw data, fit every requested method, score it
//! on the held-out truth set.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use icboost_core::boost::{complete_responses, fit_and_predict, BoostConfig, BoostFit, BoostMode, FeatureLearners, Task};
use icboost_core::cut::{transform_response, GTransform, TransformedResponse};
use icboost_core::data::Dataset;
use icboost_core::icrf::{icrf_fit_with, ConditionalSurvivorModel, IcrfParams, TreeExecutor};
use icboost_core::metrics::{classification_metrics, skdt, smaxae, smsqe};
use icboost_core::rng::{derive_seed, stream};
use icboost_core::sim::{gen_aft, naive_surrogate, SimConfig, SimData};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

/// Floor applied before taking logs of naive surrogates.
pub const SURROGATE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    /// Oracle: fits the true `φ(X)`.
    O,
    /// Reference: fits the uncensored event times.
    R,
    /// Naive: fits bracket midpoints (left ends when right-censored).
    N,
    Cut,
    Imp,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::O, Method::R, Method::N, Method::Cut, Method::Imp];

    pub fn label(self) -> &'static str {
        match self {
            Method::O => "O",
            Method::R => "R",
            Method::N => "N",
            Method::Cut => "CUT",
            Method::Imp => "IMP",
        }
    }

    pub fn needs_forest(self) -> bool {
        matches!(self, Method::Cut | Method::Imp)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = AppError;

    fn from_str(s: &str) -> AppResult<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "O" => Ok(Method::O),
            "R" => Ok(Method::R),
            "N" => Ok(Method::N),
            "CUT" => Ok(Method::Cut),
            "IMP" => Ok(Method::Imp),
            other => Err(AppError::usage(format!("unknown method {other:?} (expected O, R, N, CUT or IMP)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub sim: SimConfig,
    /// `mode` and `task` are set per method and target.
    pub boost: BoostConfig,
    pub icrf: IcrfParams,
    pub regression: bool,
    /// Survival-status thresholds `s` for classification.
    pub thresholds: Vec<f64>,
    pub methods: Vec<Method>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            boost: BoostConfig::default(),
            icrf: IcrfParams::default(),
            regression: true,
            thresholds: Vec::new(),
            methods: Method::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub icrf_secs: f64,
    pub transform_secs: f64,
    pub boosting_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub smaxae: f64,
    pub smsqe: f64,
    pub skdt: f64,
    pub stop_iteration: u64,
    pub converged: bool,
    /// Training risk of `f⁽⁰⁾, f⁽¹⁾, …`.
    pub risk_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub threshold: f64,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    /// Largest `|f|` over all iterations and points.
    pub max_abs_output: f64,
    pub stop_iteration: u64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub replicate: usize,
    pub method: Method,
    pub regression: Option<RegressionReport>,
    pub classification: Vec<ThresholdReport>,
    pub times: StageTimes,
}

/// Working responses for one method and target. `y` (event times) and `phi`
/// (true log-time means) are needed only by the R and O methods.
pub fn method_responses(
    method: Method,
    train: &Dataset,
    y: Option<&[f64]>,
    phi: Option<&[f64]>,
    g: GTransform,
    forest: Option<&ConditionalSurvivorModel>,
) -> AppResult<Vec<TransformedResponse>> {
    let complete = |v: Vec<f64>| Ok(complete_responses(&v));
    let obs = &train.observations;
    match method {
        Method::O => {
            let phi = phi.ok_or_else(|| AppError::usage("method O needs the true phi column"))?;
            complete(match g {
                GTransform::Threshold(s) => phi.iter().map(|&p| if p.exp() > s { 1.0 } else { -1.0 }).collect(),
                _ => phi.to_vec(),
            })
        }
        Method::R => {
            let y = y.ok_or_else(|| AppError::usage("method R needs the uncensored y column"))?;
            complete(y.iter().map(|&v| g.eval(v)).collect())
        }
        Method::N => complete(obs.iter().map(|o| g.eval(naive_surrogate(o).max(SURROGATE_FLOOR))).collect()),
        Method::Cut | Method::Imp => {
            let model = forest.ok_or_else(|| AppError::runtime("forest missing for a censoring-unbiased method"))?;
            Ok(obs.iter().map(|o| transform_response(o, model, g)).collect::<Result<Vec<_>, _>>()?)
        }
    }
}

/// Boosting settings of `method` for `task`.
pub fn boost_config(base: &BoostConfig, method: Method, task: Task) -> BoostConfig {
    let mode = match method {
        Method::Cut => BoostMode::Cut,
        Method::Imp => BoostMode::Imp,
        _ => BoostMode::Complete,
    };
    BoostConfig { mode, task, ..*base }
}

/// Response transform of a task: log time for regression, survival status otherwise.
pub fn transform_for(task: Task) -> AppResult<GTransform> {
    Ok(match task {
        Task::Regression => GTransform::Log,
        Task::Classification(s) => GTransform::threshold(s)?,
    })
}

/// Forest seed of replicate `replicate` under base seed `seed`.
pub fn forest_seed(seed: u64, replicate: usize) -> u64 {
    derive_seed(seed, &[replicate as u64, 1])
}

/// Simulated data of replicate `replicate` under base seed `seed`.
pub fn replicate_data(sim: &SimConfig, seed: u64, replicate: usize) -> AppResult<SimData> {
    Ok(gen_aft(sim, &mut stream(seed, &[replicate as u64, 0]))?)
}

/// Boosts one method on one target and predicts at `eval`. Regression
/// predictions go through the stored model so that a saved and reloaded
/// model reproduces them bit for bit.
pub fn fit_method(
    learners: &FeatureLearners,
    responses: &[TransformedResponse],
    config: &BoostConfig,
    eval: &[Vec<f64>],
) -> AppResult<(BoostFit, Vec<f64>)> {
    let (fit, pred) = fit_and_predict(learners, responses, config, eval)?;
    let pred = match config.task {
        Task::Regression => fit.model.predict_many(eval)?,
        Task::Classification(_) => pred,
    };
    Ok((fit, pred))
}

/// Fits every method of `config` on replicate `replicate` of the study seeded
/// by `seed`. Data come from stream `(seed, replicate, 0)` and the forest from
/// seed `(seed, replicate, 1)`.
pub fn run_replicate<E: TreeExecutor>(config: &ExperimentConfig, seed: u64, replicate: usize, executor: &E) -> AppResult<Vec<MethodReport>> {
    let data = replicate_data(&config.sim, seed, replicate)?;
    let learners = FeatureLearners::new(FeatureLearners::columns_of(&feature_rows(&data)), config.boost.df)?;

    let mut forest_secs = 0.0;
    let forest = if config.methods.iter().any(|m| m.needs_forest()) {
        let t = Instant::now();
        let params = IcrfParams { seed: forest_seed(seed, replicate), ..config.icrf };
        let model = icrf_fit_with(&data.train, &params, executor)?;
        forest_secs = t.elapsed().as_secs_f64();
        Some(model)
    } else {
        None
    };

    let mut targets: Vec<Task> = Vec::new();
    if config.regression {
        targets.push(Task::Regression);
    }
    targets.extend(config.thresholds.iter().map(|&s| Task::Classification(s)));

    let mut reports = Vec::with_capacity(config.methods.len());
    for &method in &config.methods {
        let mut times = StageTimes { icrf_secs: if method.needs_forest() { forest_secs } else { 0.0 }, ..Default::default() };
        let mut report = MethodReport { replicate, method, regression: None, classification: Vec::new(), times };
        for &task in &targets {
            let t = Instant::now();
            let g = transform_for(task)?;
            let responses = method_responses(method, &data.train, Some(&data.train_y), Some(&data.train_phi), g, forest.as_ref())?;
            times.transform_secs += t.elapsed().as_secs_f64();
            let t = Instant::now();
            let cfg = boost_config(&config.boost, method, task);
            let (fit, pred) = fit_method(&learners, &responses, &cfg, &data.test_x)?;
            times.boosting_secs += t.elapsed().as_secs_f64();
            match task {
                Task::Regression => {
                    report.regression = Some(RegressionReport {
                        smaxae: smaxae(&pred, &data.test_phi)?,
                        smsqe: smsqe(&pred, &data.test_phi)?,
                        skdt: skdt(&pred, &data.test_phi)?,
                        stop_iteration: fit.model.stop_iteration,
                        converged: fit.model.converged,
                        risk_trace: fit.model.risk_trace,
                    });
                }
                Task::Classification(s) => {
                    let m = classification_metrics(&pred, &data.test_phi, s)?;
                    report.classification.push(ThresholdReport {
                        threshold: s,
                        sensitivity: m.sensitivity,
                        specificity: m.specificity,
                        max_abs_output: fit.max_abs_output.max(pred.iter().fold(0.0, |a, v| a.max(v.abs()))),
                        stop_iteration: fit.model.stop_iteration,
                        converged: fit.model.converged,
                    });
                }
            }
        }
        report.times = times;
        reports.push(report);
    }
    Ok(reports)
}

fn feature_rows(data: &SimData) -> Vec<Vec<f64>> {
    data.train.observations.iter().map(|o| o.features.clone()).collect()
}

/// A single method on one replicate.
pub fn run_replication<E: TreeExecutor>(config: &ExperimentConfig, method: Method, seed: u64, replicate: usize, executor: &E) -> AppResult<MethodReport> {
    let cfg = ExperimentConfig { methods: vec![method], ..config.clone() };
    run_replicate(&cfg, seed, replicate, executor)?
        .pop()
        .ok_or_else(|| AppError::runtime("no report produced"))
}
