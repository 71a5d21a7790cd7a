//! L2Boost with componentwise smoothing-spline base learners.
//!
//! The initial fit is the unshrunken spline on the best single feature; every
//! later step fits the current residual with each feature's spline, keeps the
//! best one and adds `u` times it. Classification clamps the running fit to
//! `[−1, 1]` after every step. Training stops at the first step whose change in
//! empirical risk is at most `η = n^{−w}`.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::cut::TransformedResponse;
use crate::error::{invalid, Error, Result};
use crate::spline::{solve_lambda_for_df, BandedFit, BandedSmoother, NaturalSpline, SplineBasis, SplineStencil};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoostMode {
    /// CUT loss in the stopping rule; returns the fit one step before the stop.
    Cut,
    /// Imputed-response loss in the stopping rule; returns the fit one step
    /// before the stop.
    Imp,
    /// Plain L2Boost on fully observed responses; returns the fit at the stop.
    Complete,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Task {
    Regression,
    /// Survival status at the given time; fits are clamped to `[−1, 1]`.
    Classification(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    pub mode: BoostMode,
    pub task: Task,
    /// Degrees of freedom `Trace Ψ` of each base learner before shrinkage.
    pub df: f64,
    pub shrink_u: f64,
    /// Stopping exponent `w` in `η = n^{−w}`.
    pub stop_w: f64,
    pub max_iterations: u64,
    /// Shrink the initial fit as well (`f⁽⁰⁾ = uΨy`).
    pub shrink_initial: bool,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self {
            mode: BoostMode::Cut,
            task: Task::Regression,
            df: 20.0,
            shrink_u: 0.01,
            stop_w: 5.0,
            max_iterations: 100_000,
            shrink_initial: false,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.shrink_u > 0.0 && self.shrink_u <= 1.0) {
            return Err(invalid("shrink_u must lie in (0, 1]"));
        }
        if !(self.stop_w >= 1.0) {
            return Err(invalid("stop_w must be at least 1"));
        }
        if !(self.df > 2.0) {
            return Err(invalid("df must exceed 2"));
        }
        if let Task::Classification(s) = self.task {
            if !(s > 0.0) {
                return Err(invalid("classification threshold must be positive"));
            }
        }
        Ok(())
    }

    fn clamps(&self) -> bool {
        matches!(self.task, Task::Classification(_))
    }
}

/// `sign(v)·min(1, |v|)`.
pub fn clamp(v: f64) -> f64 {
    if v > 1.0 {
        1.0
    } else if v < -1.0 {
        -1.0
    } else {
        v
    }
}

/// One spline learner per feature, with penalties fixed.
#[derive(Debug, Clone)]
pub struct FeatureLearners {
    columns: Vec<Vec<f64>>,
    lambdas: Vec<f64>,
    smoothers: Vec<BandedSmoother>,
}

impl FeatureLearners {
    /// Learners whose penalties give `Trace Ψ = df` on each feature column.
    pub fn new(columns: Vec<Vec<f64>>, df: f64) -> Result<Self> {
        let lambdas = columns
            .iter()
            .map(|c| solve_lambda_for_df(&SplineBasis::from_observations(c)?, df))
            .collect::<Result<Vec<_>>>()?;
        Self::with_lambdas(columns, lambdas)
    }

    pub fn with_lambdas(columns: Vec<Vec<f64>>, lambdas: Vec<f64>) -> Result<Self> {
        if columns.is_empty() {
            return Err(invalid("need at least one feature"));
        }
        if lambdas.len() != columns.len() {
            return Err(Error::DimensionMismatch { expected: columns.len(), found: lambdas.len() });
        }
        let n = columns[0].len();
        if n < 3 || columns.iter().any(|c| c.len() != n) {
            return Err(invalid("feature columns need equal length of at least 3"));
        }
        let smoothers = columns
            .iter()
            .zip(&lambdas)
            .map(|(c, &l)| BandedSmoother::new(&SplineBasis::from_observations(c)?, l))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { columns, lambdas, smoothers })
    }

    /// Column-major copy of row-major feature vectors.
    pub fn columns_of(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let p = rows.first().map_or(0, |r| r.len());
        (0..p).map(|j| rows.iter().map(|r| r[j]).collect()).collect()
    }

    pub fn n_obs(&self) -> usize {
        self.columns[0].len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn smoother(&self, feature: usize) -> &BandedSmoother {
        &self.smoothers[feature]
    }

    fn workspaces(&self) -> Vec<BandedFit> {
        self.smoothers.iter().map(|s| s.workspace()).collect()
    }
}

/// Knot values of a natural spline in one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineTerm {
    pub feature: usize,
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
}

impl SplineTerm {
    fn spline(&self) -> Result<NaturalSpline> {
        NaturalSpline::new(&self.knots, &self.values)
    }
}

/// Consecutive boosting steps on the same feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Run {
    pub feature: usize,
    pub iterations: u64,
}

/// Data needed to replay a clamped fit at new points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replay {
    pub columns: Vec<Vec<f64>>,
    pub lambdas: Vec<f64>,
    pub response: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostModel {
    pub config: BoostConfig,
    pub feature_dim: usize,
    pub initial: SplineTerm,
    /// Summed shrunken increments of each run (regression only).
    pub terms: Vec<SplineTerm>,
    pub runs: Vec<Run>,
    /// Number of increments in the returned fit.
    pub increments: u64,
    /// Iteration at which the stopping rule fired, or the cap.
    pub stop_iteration: u64,
    pub converged: bool,
    /// Empirical risk of `f⁽⁰⁾, f⁽¹⁾, …` up to the stop.
    pub risk_trace: Vec<f64>,
    /// Present for classification, whose clamping is replayed at predict time.
    pub replay: Option<Replay>,
}

#[derive(Debug, Clone)]
pub struct BoostFit {
    pub model: BoostModel,
    /// Fitted values at the training points.
    pub fitted: Vec<f64>,
    /// Largest `|f|` seen at any iteration, over training and evaluation points.
    pub max_abs_output: f64,
}

/// Feature whose unshrunken spline fit leaves the smallest residual sum of
/// squares, with that fit at the observations. Ties go to the lowest index.
pub fn componentwise_select(residual: &[f64], learners: &FeatureLearners) -> (usize, Vec<f64>) {
    let mut ws = learners.workspaces();
    let best = select(residual, learners, &mut ws);
    let fitted = learners.smoothers[best].knot_of().iter().map(|&l| ws[best].values[l]).collect();
    (best, fitted)
}

fn select(residual: &[f64], learners: &FeatureLearners, ws: &mut [BandedFit]) -> usize {
    let p = learners.n_features();
    if p == 1 {
        learners.smoothers[0].fit_into(residual, &mut ws[0]);
        return 0;
    }
    let mut best = 0;
    let mut best_rss = f64::INFINITY;
    for j in 0..p {
        let s = &learners.smoothers[j];
        s.fit_into(residual, &mut ws[j]);
        let rss: f64 = s
            .knot_of()
            .iter()
            .zip(residual)
            .map(|(&l, &r)| {
                let d = r - ws[j].values[l];
                d * d
            })
            .sum();
        if rss < best_rss {
            best_rss = rss;
            best = j;
        }
    }
    best
}

/// Stencils of the evaluation points in every feature.
fn stencils(learners: &FeatureLearners, points: &[Vec<f64>]) -> Vec<Vec<SplineStencil>> {
    (0..learners.n_features())
        .map(|j| {
            let knots = learners.smoothers[j].knots();
            points.iter().map(|x| SplineStencil::new(knots, x[j])).collect()
        })
        .collect()
}

struct Trajectory<'a> {
    y: &'a [f64],
    ws: Vec<BandedFit>,
    stencils: Vec<Vec<SplineStencil>>,
    f: Vec<f64>,
    f_eval: Vec<f64>,
    initial: SplineTerm,
    max_abs: f64,
}

impl<'a> Trajectory<'a> {
    fn start(learners: &'a FeatureLearners, y: &'a [f64], config: BoostConfig, eval: &[Vec<f64>], initial_feature: Option<usize>) -> Self {
        let mut ws = learners.workspaces();
        let j0 = match initial_feature {
            Some(j) => {
                learners.smoothers[j].fit_into(y, &mut ws[j]);
                j
            }
            None => select(y, learners, &mut ws),
        };
        let scale = if config.shrink_initial { config.shrink_u } else { 1.0 };
        let values: Vec<f64> = ws[j0].values.iter().map(|v| v * scale).collect();
        let curvature: Vec<f64> = ws[j0].curvature.iter().map(|v| v * scale).collect();
        let stencils = stencils(learners, eval);
        let clamps = config.clamps();
        let post = |v: f64| if clamps { clamp(v) } else { v };
        let f: Vec<f64> = learners.smoothers[j0].knot_of().iter().map(|&l| post(values[l])).collect();
        let f_eval: Vec<f64> = stencils[j0].iter().map(|st| post(st.eval(&values, &curvature))).collect();
        let max_abs = f.iter().chain(&f_eval).fold(0.0_f64, |a, v| a.max(libm::fabs(*v)));
        let initial = SplineTerm { feature: j0, knots: learners.smoothers[j0].knots().to_vec(), values };
        Self { y, ws, stencils, f, f_eval, initial, max_abs }
    }

    fn residual(&self) -> Vec<f64> {
        self.y.iter().zip(&self.f).map(|(y, f)| y - f).collect()
    }

    /// Half the mean squared residual: the part of the risk that depends on `f`.
    fn half_mse(&self, f: &[f64]) -> f64 {
        let s: f64 = self.y.iter().zip(f).map(|(y, v)| (y - v) * (y - v)).sum();
        0.5 * s / self.y.len() as f64
    }
}

/// Output of the shared training loop.
struct LoopResult {
    model: BoostModel,
    fitted: Vec<f64>,
    f_eval: Vec<f64>,
    max_abs: f64,
}

fn run_loop(
    learners: &FeatureLearners,
    responses: &[TransformedResponse],
    config: &BoostConfig,
    eval: &[Vec<f64>],
    observer: &mut dyn FnMut(u64, &[f64]),
) -> Result<LoopResult> {
    config.validate()?;
    let n = learners.n_obs();
    if responses.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: responses.len() });
    }
    if responses.iter().any(|r| !r.y1.is_finite() || !r.y2.is_finite()) {
        return Err(invalid("responses must be finite"));
    }
    let p = learners.n_features();
    if eval.iter().any(|x| x.len() != p) {
        return Err(Error::DimensionMismatch { expected: p, found: eval.iter().map(|x| x.len()).find(|&l| l != p).unwrap_or(0) });
    }
    let y: Vec<f64> = responses.iter().map(|r| r.y1).collect();
    // The CUT risk exceeds the imputed one by this f-independent constant.
    let offset = match config.mode {
        BoostMode::Cut => responses.iter().map(|r| 0.5 * (r.y2 - r.y1 * r.y1)).sum::<f64>() / n as f64,
        _ => 0.0,
    };
    let eta = libm::pow(n as f64, -config.stop_w);
    let u = config.shrink_u;
    let clamps = config.clamps();

    let mut tr = Trajectory::start(learners, &y, *config, eval, None);
    observer(0, &tr.f);
    let mut risk = tr.half_mse(&tr.f);
    let mut trace = vec![offset + risk];
    let mut runs: Vec<Run> = Vec::new();
    let mut sums: Vec<Vec<f64>> = Vec::new();
    let mut f_next = vec![0.0; n];
    let mut increments = 0u64;
    let mut stop_iteration = config.max_iterations;
    let mut converged = false;

    for t in 1..=config.max_iterations {
        let r = tr.residual();
        let j = select(&r, learners, &mut tr.ws);
        let fit = &tr.ws[j];
        for ((next, &cur), &l) in f_next.iter_mut().zip(&tr.f).zip(learners.smoothers[j].knot_of()) {
            let v = cur + u * fit.values[l];
            *next = if clamps { clamp(v) } else { v };
        }
        let next_risk = tr.half_mse(&f_next);
        trace.push(offset + next_risk);
        let stop = libm::fabs(next_risk - risk) <= eta;
        if stop && config.mode != BoostMode::Complete {
            stop_iteration = t;
            converged = true;
            break;
        }
        // commit f^(t)
        core::mem::swap(&mut tr.f, &mut f_next);
        risk = next_risk;
        increments = t;
        for (fe, st) in tr.f_eval.iter_mut().zip(&tr.stencils[j]) {
            let v = *fe + u * st.eval(&fit.values, &fit.curvature);
            *fe = if clamps { clamp(v) } else { v };
        }
        let step_max = tr.f.iter().chain(&tr.f_eval).fold(0.0_f64, |a, v| a.max(libm::fabs(*v)));
        tr.max_abs = tr.max_abs.max(step_max);
        match runs.last_mut() {
            Some(run) if run.feature == j => run.iterations += 1,
            _ => {
                runs.push(Run { feature: j, iterations: 1 });
                sums.push(vec![0.0; fit.values.len()]);
            }
        }
        if !clamps {
            let acc = sums.last_mut().expect("run just pushed");
            for (a, v) in acc.iter_mut().zip(&fit.values) {
                *a += u * v;
            }
        }
        observer(t, &tr.f);
        if stop {
            stop_iteration = t;
            converged = true;
            break;
        }
    }

    let terms = if clamps {
        Vec::new()
    } else {
        runs.iter()
            .zip(sums)
            .map(|(run, values)| SplineTerm { feature: run.feature, knots: learners.smoothers[run.feature].knots().to_vec(), values })
            .collect()
    };
    let replay = clamps.then(|| Replay { columns: learners.columns.clone(), lambdas: learners.lambdas.clone(), response: y.clone() });
    let model = BoostModel {
        config: *config,
        feature_dim: p,
        initial: tr.initial.clone(),
        terms,
        runs,
        increments,
        stop_iteration,
        converged,
        risk_trace: trace,
        replay,
    };
    Ok(LoopResult { model, fitted: tr.f, f_eval: tr.f_eval, max_abs: tr.max_abs })
}

/// Boosts `responses` (`y1` is the working response; `y2` only enters the CUT
/// risk) on the features of `learners`.
pub fn fit(learners: &FeatureLearners, responses: &[TransformedResponse], config: &BoostConfig) -> Result<BoostFit> {
    fit_observed(learners, responses, config, &mut |_, _| {})
}

/// [`fit`] calling `observer(t, f⁽ᵗ⁾)` with the training fit after every
/// accepted step, starting from `t = 0`.
pub fn fit_observed(
    learners: &FeatureLearners,
    responses: &[TransformedResponse],
    config: &BoostConfig,
    observer: &mut dyn FnMut(u64, &[f64]),
) -> Result<BoostFit> {
    let out = run_loop(learners, responses, config, &[], observer)?;
    Ok(BoostFit { model: out.model, fitted: out.fitted, max_abs_output: out.max_abs })
}

/// [`fit`] that also returns predictions at `eval`, computed along the way.
pub fn fit_and_predict(
    learners: &FeatureLearners,
    responses: &[TransformedResponse],
    config: &BoostConfig,
    eval: &[Vec<f64>],
) -> Result<(BoostFit, Vec<f64>)> {
    let out = run_loop(learners, responses, config, eval, &mut |_, _| {})?;
    Ok((BoostFit { model: out.model, fitted: out.fitted, max_abs_output: out.max_abs }, out.f_eval))
}

/// Complete-data responses: `y2 = y1²`.
pub fn complete_responses(y: &[f64]) -> Vec<TransformedResponse> {
    y.iter().map(|&v| TransformedResponse { y1: v, y2: v * v, bracket_mass: 1.0, degenerate: false }).collect()
}

impl BoostModel {
    /// Predictions at each row of `points`.
    pub fn predict_many(&self, points: &[Vec<f64>]) -> Result<Vec<f64>> {
        if let Some(x) = points.iter().find(|x| x.len() != self.feature_dim) {
            return Err(Error::DimensionMismatch { expected: self.feature_dim, found: x.len() });
        }
        match &self.replay {
            None => {
                let initial = self.initial.spline()?;
                let terms = self.terms.iter().map(|t| Ok((t.feature, t.spline()?))).collect::<Result<Vec<_>>>()?;
                Ok(points
                    .iter()
                    .map(|x| initial.eval(x[self.initial.feature]) + terms.iter().map(|(j, s)| s.eval(x[*j])).sum::<f64>())
                    .collect())
            }
            Some(replay) => self.replay_predict(replay, points),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.predict_many(&[x.to_vec()])?[0])
    }

    fn replay_predict(&self, replay: &Replay, points: &[Vec<f64>]) -> Result<Vec<f64>> {
        let learners = FeatureLearners::with_lambdas(replay.columns.clone(), replay.lambdas.clone())?;
        let cfg = self.config;
        let mut tr = Trajectory::start(&learners, &replay.response, cfg, points, Some(self.initial.feature));
        let u = cfg.shrink_u;
        for run in &self.runs {
            let j = run.feature;
            for _ in 0..run.iterations {
                let r = tr.residual();
                learners.smoothers[j].fit_into(&r, &mut tr.ws[j]);
                let fit = &tr.ws[j];
                for (f, &l) in tr.f.iter_mut().zip(learners.smoothers[j].knot_of()) {
                    *f = clamp(*f + u * fit.values[l]);
                }
                for (fe, st) in tr.f_eval.iter_mut().zip(&tr.stencils[j]) {
                    *fe = clamp(*fe + u * st.eval(&fit.values, &fit.curvature));
                }
            }
        }
        Ok(tr.f_eval)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::{boost_operator, shrink, smoother_matrix};
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};

    fn uniform_design(n: usize) -> Vec<f64> {
        (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect()
    }

    fn noisy_response(x: &[f64], seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        x.iter().map(|&v| libm::sin(6.0 * v) + 0.3 * (rng.random::<f64>() - 0.5)).collect()
    }

    #[test]
    fn clamp_examples() {
        assert_eq!(clamp(1.5), 1.0);
        assert_eq!(clamp(-0.3), -0.3);
        assert_eq!(clamp(0.0), 0.0);
        assert_eq!(clamp(-7.0), -1.0);
    }

    #[test]
    fn iterates_match_closed_form_operator() {
        let x = uniform_design(20);
        let y = noisy_response(&x, 3);
        let learners = FeatureLearners::new(vec![x.clone()], 8.0).unwrap();
        let cfg = BoostConfig { mode: BoostMode::Complete, shrink_initial: true, shrink_u: 0.1, max_iterations: 60, stop_w: 30.0, ..Default::default() };
        let psi = shrink(&smoother_matrix(&SplineBasis::from_observations(&x).unwrap(), learners.lambdas()[0]).unwrap(), 0.1).unwrap();
        let yv = DVector::from_column_slice(&y);
        let mut worst = 0.0_f64;
        let mut seen = 0;
        fit_observed(&learners, &complete_responses(&y), &cfg, &mut |t, f| {
            let want = boost_operator(&psi, t) * &yv;
            for (a, b) in f.iter().zip(want.iter()) {
                worst = worst.max((a - b).abs());
            }
            seen += 1;
        })
        .unwrap();
        assert_eq!(seen, 61);
        assert!(worst < 1e-8, "{worst}");
    }

    #[test]
    fn identity_smoother_stops_after_first_comparison() {
        // df = n gives λ = 0 and Ψ = I: f⁽⁰⁾ = y, so the first step changes nothing.
        let x = uniform_design(12);
        let y = noisy_response(&x, 1);
        let learners = FeatureLearners::new(vec![x], 12.0).unwrap();
        assert_eq!(learners.lambdas()[0], 0.0);
        let cfg = BoostConfig { shrink_u: 1.0, ..Default::default() };
        let out = fit(&learners, &complete_responses(&y), &cfg).unwrap();
        assert!(out.model.converged);
        assert_eq!(out.model.stop_iteration, 1);
        assert_eq!(out.model.increments, 0);
        for (f, v) in out.fitted.iter().zip(&y) {
            assert!((f - v).abs() < 1e-10);
        }
    }

    fn censored_like(y: &[f64], seed: u64) -> Vec<TransformedResponse> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        y.iter().map(|&v| TransformedResponse { y1: v, y2: v * v + rng.random::<f64>(), bracket_mass: 1.0, degenerate: false }).collect()
    }

    #[test]
    fn cut_and_imp_give_identical_models() {
        let x = uniform_design(60);
        let y = noisy_response(&x, 5);
        let resp = censored_like(&y, 9);
        let learners = FeatureLearners::new(vec![x], 10.0).unwrap();
        let cut = fit(&learners, &resp, &BoostConfig { mode: BoostMode::Cut, stop_w: 3.0, ..Default::default() }).unwrap();
        let imp = fit(&learners, &resp, &BoostConfig { mode: BoostMode::Imp, stop_w: 3.0, ..Default::default() }).unwrap();
        assert!(cut.model.converged);
        assert_eq!(cut.model.stop_iteration, imp.model.stop_iteration);
        assert_eq!(cut.model.terms, imp.model.terms);
        assert_eq!(cut.fitted, imp.fitted);
        let offset: f64 = resp.iter().map(|r| 0.5 * (r.y2 - r.y1 * r.y1)).sum::<f64>() / 60.0;
        for (a, b) in cut.model.risk_trace.iter().zip(&imp.model.risk_trace) {
            assert!((a - b - offset).abs() < 1e-12);
        }
        // CUT/IMP return one step before the stop
        assert_eq!(cut.model.increments + 1, cut.model.stop_iteration);
        assert_eq!(cut.model.risk_trace.len() as u64, cut.model.stop_iteration + 1);
    }

    #[test]
    fn stopping_is_first_crossing() {
        let x = uniform_design(50);
        let y = noisy_response(&x, 8);
        let learners = FeatureLearners::new(vec![x], 10.0).unwrap();
        let cfg = BoostConfig { mode: BoostMode::Imp, stop_w: 2.5, ..Default::default() };
        let out = fit(&learners, &complete_responses(&y), &cfg).unwrap();
        let eta = libm::pow(50.0, -2.5);
        let tr = &out.model.risk_trace;
        let t = out.model.stop_iteration as usize;
        assert!((tr[t] - tr[t - 1]).abs() <= eta);
        for s in 1..t {
            assert!((tr[s] - tr[s - 1]).abs() > eta);
            assert!(tr[s] <= tr[s - 1] + 1e-15);
        }
    }

    #[test]
    fn prediction_reproduces_training_fit() {
        let x = uniform_design(40);
        let y = noisy_response(&x, 2);
        let learners = FeatureLearners::new(vec![x.clone()], 10.0).unwrap();
        let cfg = BoostConfig { mode: BoostMode::Complete, stop_w: 2.0, ..Default::default() };
        let out = fit(&learners, &complete_responses(&y), &cfg).unwrap();
        let rows: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
        let pred = out.model.predict_many(&rows).unwrap();
        for (p, f) in pred.iter().zip(&out.fitted) {
            assert!((p - f).abs() < 1e-8);
        }
        // continuity on a fine grid
        let fine: Vec<Vec<f64>> = (0..=2000).map(|i| vec![i as f64 / 2000.0]).collect();
        let vals = out.model.predict_many(&fine).unwrap();
        assert!(vals.windows(2).all(|w| (w[1] - w[0]).abs() < 0.05));
        assert!(out.model.predict(&[0.5, 0.1]).is_err());
    }

    #[test]
    fn zero_increment_model_is_initial_fit() {
        let x = uniform_design(15);
        let y = noisy_response(&x, 4);
        let learners = FeatureLearners::new(vec![x], 5.0).unwrap();
        let cfg = BoostConfig { max_iterations: 0, ..Default::default() };
        let out = fit(&learners, &complete_responses(&y), &cfg).unwrap();
        assert!(!out.model.converged);
        assert!(out.model.terms.is_empty());
        let s = out.model.initial.spline().unwrap();
        assert_eq!(out.model.predict(&[0.37]).unwrap(), s.eval(0.37));
    }

    #[test]
    fn classification_stays_clamped_and_replays() {
        let x = uniform_design(80);
        let y: Vec<f64> = x.iter().map(|&v| if v > 0.4 { 1.0 } else { -1.0 }).collect();
        let learners = FeatureLearners::new(vec![x.clone()], 20.0).unwrap();
        let cfg = BoostConfig { task: Task::Classification(2.0), mode: BoostMode::Cut, shrink_u: 0.5, max_iterations: 300, ..Default::default() };
        let eval: Vec<Vec<f64>> = (0..50).map(|i| vec![-0.1 + i as f64 * 0.025]).collect();
        let mut all_bounded = true;
        let (out, during) = fit_and_predict(&learners, &complete_responses(&y), &cfg, &eval).unwrap();
        fit_observed(&learners, &complete_responses(&y), &cfg, &mut |_, f| {
            all_bounded &= f.iter().all(|v| v.abs() <= 1.0);
        })
        .unwrap();
        assert!(all_bounded);
        assert!(out.max_abs_output <= 1.0);
        let replayed = out.model.predict_many(&eval).unwrap();
        assert_eq!(during, replayed);
        let at_train: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
        let pred = out.model.predict_many(&at_train).unwrap();
        for (p, f) in pred.iter().zip(&out.fitted) {
            assert!((p - f).abs() < 1e-8);
        }
    }

    #[test]
    fn componentwise_picks_signal_feature() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let mut hits = 0;
        for _ in 0..100 {
            let cols: Vec<Vec<f64>> = (0..4).map(|_| (0..80).map(|_| rng.random::<f64>()).collect()).collect();
            let r: Vec<f64> = cols[2].iter().map(|&v| libm::sin(5.0 * v) + 0.3 * (rng.random::<f64>() - 0.5)).collect();
            let learners = FeatureLearners::new(cols, 6.0).unwrap();
            let (j, fitted) = componentwise_select(&r, &learners);
            assert_eq!(fitted.len(), 80);
            hits += usize::from(j == 2);
        }
        assert!(hits > 95, "{hits}");
        let learners = FeatureLearners::new(vec![uniform_design(10), uniform_design(10)], 4.0).unwrap();
        assert_eq!(componentwise_select(&[0.0; 10], &learners).0, 0);
    }

    #[test]
    fn regression_residuals_contract() {
        let x = uniform_design(30);
        let y = noisy_response(&x, 12);
        let learners = FeatureLearners::new(vec![x], 8.0).unwrap();
        let cfg = BoostConfig { mode: BoostMode::Complete, max_iterations: 500, stop_w: 40.0, ..Default::default() };
        let mut prev = f64::INFINITY;
        fit_observed(&learners, &complete_responses(&y), &cfg, &mut |_, f| {
            let norm: f64 = f.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
            assert!(norm <= prev + 1e-12);
            prev = norm;
        })
        .unwrap();
    }
}
