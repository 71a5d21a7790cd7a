//! Interval-censored recursive forest: iterated, subsampled survival trees
//! whose rank-score splits and terminal curves use the previous round's
//! conditional survivor estimates, with kernel-smoothed leaves and
//! out-of-bag IMSE to pick the round.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{endpoint_grid, eval_on_grid, CurveKind, Dataset, IntervalObservation, SurvivorCurve, TimeGrid};
use crate::error::{invalid, Error, Result};
use crate::npmle::{default_bandwidth, turnbull_npmle, Bandwidth, KernelSmoother};
use crate::rng::{stream, StreamRng};

/// Largest evaluation grid kept after thinning.
pub const MAX_GRID_POINTS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitRule {
    /// Generalized Wilcoxon rank-sum scores.
    Gwrs,
    /// Generalized log-rank scores.
    Glr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminalRule {
    /// Turnbull NPMLE of the members' brackets.
    QuasiHonest,
    /// Average of the members' previous-round curves.
    Exploitative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcrfParams {
    pub n_trees: usize,
    pub n_iterations: usize,
    pub split_rule: SplitRule,
    pub terminal_rule: TerminalRule,
    pub min_node_size: usize,
    /// Features tried per node; `None` means `⌈√p⌉`.
    pub mtry: Option<usize>,
    pub bootstrap_fraction: f64,
    /// Draw the per-node features with replacement.
    pub feature_with_replacement: bool,
    pub seed: u64,
}

impl Default for IcrfParams {
    fn default() -> Self {
        Self {
            n_trees: 300,
            n_iterations: 5,
            split_rule: SplitRule::Gwrs,
            terminal_rule: TerminalRule::Exploitative,
            min_node_size: 6,
            mtry: None,
            bootstrap_fraction: 0.95,
            feature_with_replacement: false,
            seed: 0,
        }
    }
}

impl IcrfParams {
    pub fn validate(&self, p: usize) -> Result<()> {
        if self.n_trees == 0 || self.n_iterations == 0 {
            return Err(invalid("n_trees and n_iterations must be at least 1"));
        }
        if self.min_node_size < 2 {
            return Err(invalid("min_node_size must be at least 2"));
        }
        if let Some(m) = self.mtry {
            if m == 0 || m > p {
                return Err(invalid("mtry must lie in [1, p]"));
            }
        }
        if !(self.bootstrap_fraction > 0.0 && self.bootstrap_fraction <= 1.0) {
            return Err(invalid("bootstrap_fraction must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn mtry_for(&self, p: usize) -> usize {
        self.mtry.unwrap_or_else(|| (libm::ceil(libm::sqrt(p as f64)) as usize).clamp(1, p))
    }

    /// In-bag size `⌈fraction · n⌉`.
    pub fn inbag_size(&self, n: usize) -> usize {
        (libm::ceil(self.bootstrap_fraction * n as f64) as usize).min(n)
    }
}

/// Runs independent per-tree jobs; implementations may run them in parallel
/// but must return results in index order.
pub trait TreeExecutor: Sync {
    fn map<R, F>(&self, count: usize, job: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SerialExecutor;

impl TreeExecutor for SerialExecutor {
    fn map<R, F>(&self, count: usize, job: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        (0..count).map(job).collect()
    }
}

/// `W = S(L) + S(R) − 1`, with `S(∞) = 0`.
pub fn gwrs_score(s_left: f64, s_right: f64) -> f64 {
    s_left + s_right - 1.0
}

fn s_log_s(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else {
        -s * libm::log(s)
    }
}

/// `[Λ(L)S(L) − Λ(R)S(R)] / (S(L) − S(R))` with `Λ = −log S`; `Λ(L)` when the
/// bracket carries no mass.
pub fn glr_score(s_left: f64, s_right: f64) -> f64 {
    if s_left - s_right <= 1e-12 {
        return -libm::log(s_left.max(1e-12));
    }
    (s_log_s(s_left) - s_log_s(s_right)) / (s_left - s_right)
}

fn curve_at(curve: &SurvivorCurve, t: f64) -> f64 {
    if t.is_infinite() {
        0.0
    } else {
        curve.eval(t)
    }
}

pub fn split_score_gwrs(obs: &IntervalObservation, s_prev: &SurvivorCurve) -> f64 {
    gwrs_score(curve_at(s_prev, obs.left), curve_at(s_prev, obs.right))
}

pub fn split_score_glr(obs: &IntervalObservation, s_prev: &SurvivorCurve) -> f64 {
    glr_score(curve_at(s_prev, obs.left), curve_at(s_prev, obs.right))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub cutoff: f64,
    /// `|mean_A − mean_B| · √(n_A n_B / n) / sd`.
    pub statistic: f64,
}

/// Best split of `indices` over `features` (ascending order): every midpoint
/// between consecutive distinct values leaving both sides with at least
/// `min_node_size` members. Ties keep the first candidate.
pub fn best_split(indices: &[usize], columns: &[Vec<f64>], scores: &[f64], features: &[usize], min_node_size: usize) -> Option<Split> {
    let n = indices.len();
    if n < 2 * min_node_size || n < 2 {
        return None;
    }
    let mean = indices.iter().map(|&i| scores[i]).sum::<f64>() / n as f64;
    let ss: f64 = indices.iter().map(|&i| (scores[i] - mean) * (scores[i] - mean)).sum();
    let sd = libm::sqrt(ss / (n - 1) as f64);
    if !(sd > 1e-14) {
        return None;
    }
    let total: f64 = indices.iter().map(|&i| scores[i]).sum();
    let mut best: Option<Split> = None;
    let mut order: Vec<(f64, f64)> = Vec::with_capacity(n);
    for &j in features {
        order.clear();
        order.extend(indices.iter().map(|&i| (columns[j][i], scores[i])));
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left_sum = 0.0;
        for k in 0..n - 1 {
            left_sum += order[k].1;
            let na = k + 1;
            let nb = n - na;
            if order[k].0 == order[k + 1].0 || na < min_node_size || nb < min_node_size {
                continue;
            }
            let diff = left_sum / na as f64 - (total - left_sum) / nb as f64;
            let stat = libm::fabs(diff) * libm::sqrt((na * nb) as f64 / n as f64) / sd;
            if best.is_none_or(|b| stat > b.statistic) {
                best = Some(Split { feature: j, cutoff: 0.5 * (order[k].0 + order[k + 1].0), statistic: stat });
            }
        }
    }
    best
}

/// `mtry` feature indices in ascending order.
pub fn choose_features(p: usize, mtry: usize, with_replacement: bool, rng: &mut StreamRng) -> Vec<usize> {
    let mut out: Vec<usize> = if with_replacement {
        (0..mtry).map(|_| rng.random_range(0..p)).collect()
    } else {
        rand::seq::index::sample(rng, p, mtry.min(p)).into_vec()
    };
    out.sort_unstable();
    out.dedup();
    out
}

/// Step survivor values on `grid` for a terminal node.
pub fn terminal_estimate(members: &[usize], brackets: &[(f64, f64)], prev: &[f64], grid: &[f64], rule: TerminalRule) -> Result<Vec<f64>> {
    if members.is_empty() {
        return Err(invalid("empty terminal node"));
    }
    let m = grid.len();
    match rule {
        TerminalRule::Exploitative => {
            let mut acc = vec![0.0; m];
            for &i in members {
                for (a, v) in acc.iter_mut().zip(&prev[i * m..(i + 1) * m]) {
                    *a += v;
                }
            }
            let k = members.len() as f64;
            acc.iter_mut().for_each(|a| *a /= k);
            Ok(acc)
        }
        TerminalRule::QuasiHonest => {
            let own: Vec<(f64, f64)> = members.iter().map(|&i| brackets[i]).collect();
            let fit = turnbull_npmle(&own)?;
            Ok(grid.iter().map(|&t| fit.curve.eval(t)).collect())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// `x[feature] ≤ cutoff` goes left.
    Split { feature: usize, cutoff: f64, left: usize, right: usize },
    Leaf(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub members: Vec<usize>,
    /// Step survivor values on the model grid.
    pub step: Vec<f64>,
    /// Kernel-smoothed values on the model grid.
    pub smoothed: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalTree {
    /// Root first.
    pub nodes: Vec<Node>,
    pub leaves: Vec<Leaf>,
}

impl SurvivalTree {
    pub fn route(&self, x: &[f64]) -> &Leaf {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Split { feature, cutoff, left, right } => k = if x[feature] <= cutoff { left } else { right },
                Node::Leaf(l) => return &self.leaves[l],
            }
        }
    }
}

/// Mean OOB IMSE and how many subjects entered it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImseSummary {
    pub mean: f64,
    pub used: usize,
    /// Subjects with a zero normalizer (`L = 0`, `R ≥ τ`).
    pub skipped: usize,
}

/// `∫_a^b h(S(s)) ds` with Simpson's rule on every piece between grid points;
/// exact for squares of a piecewise-linear curve.
fn integrate(pts: &[f64], values: &[f64], kind: CurveKind, a: f64, b: f64, h: impl Fn(f64) -> f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let start = pts.partition_point(|&v| v <= a);
    let end = pts.partition_point(|&v| v < b);
    let at = |t: f64| h(eval_on_grid(pts, values, kind, t));
    let mut prev_t = a;
    let mut prev_v = at(a);
    let mut sum = 0.0;
    for &t in pts[start..end].iter().chain(core::iter::once(&b)) {
        let v = at(t);
        sum += (t - prev_t) / 6.0 * (prev_v + 4.0 * at(0.5 * (prev_t + t)) + v);
        prev_t = t;
        prev_v = v;
    }
    sum
}

/// `[∫₀^{L∧τ}(1−S)² + ∫_{R∧τ}^{τ} S²] / (τ − R∧τ + L∧τ)`, or `None` for a zero
/// normalizer.
fn subject_imse(pts: &[f64], values: &[f64], kind: CurveKind, (l, r): (f64, f64), tau: f64) -> Option<f64> {
    let lt = l.min(tau);
    let rt = r.min(tau);
    let norm = tau - rt + lt;
    if !(norm > 0.0) {
        return None;
    }
    let before = integrate(pts, values, kind, 0.0, lt, |s| (1.0 - s) * (1.0 - s));
    let after = integrate(pts, values, kind, rt, tau, |s| s * s);
    Some((before + after) / norm)
}

/// Mean IMSE of `curves[i]` against `brackets[i]` over `[0, τ]`.
pub fn oob_imse(curves: &[SurvivorCurve], brackets: &[(f64, f64)], tau: f64) -> Result<ImseSummary> {
    if curves.len() != brackets.len() {
        return Err(Error::DimensionMismatch { expected: brackets.len(), found: curves.len() });
    }
    if !(tau > 0.0) {
        return Err(invalid("tau must be positive"));
    }
    let mut sum = 0.0;
    let mut used = 0;
    for (c, &b) in curves.iter().zip(brackets) {
        if let Some(e) = subject_imse(c.grid.points(), &c.values, c.kind, b, tau) {
            sum += e;
            used += 1;
        }
    }
    let mean = if used > 0 { sum / used as f64 } else { f64::NAN };
    Ok(ImseSummary { mean, used, skipped: curves.len() - used })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalSurvivorModel {
    pub params: IcrfParams,
    pub grid: TimeGrid,
    pub bandwidth: f64,
    /// Set when the bandwidth fell back to the grid range.
    pub bandwidth_fallback: bool,
    pub feature_dim: usize,
    pub tau: f64,
    /// Forest of the selected round.
    pub forest: Vec<SurvivalTree>,
    /// Zero-based index of the selected round.
    pub best_iteration: usize,
    /// Mean OOB IMSE of each round (`NaN` when no subject was out of bag).
    pub oob_errors: Vec<f64>,
    /// OOB subjects skipped for a zero normalizer, summed over rounds and trees.
    pub skipped_oob: usize,
}

impl ConditionalSurvivorModel {
    fn check_x(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.feature_dim {
            return Err(Error::DimensionMismatch { expected: self.feature_dim, found: x.len() });
        }
        Ok(())
    }

    fn average(&self, x: &[f64], pick: impl Fn(&Leaf) -> &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.grid.len()];
        for tree in &self.forest {
            for (a, v) in acc.iter_mut().zip(pick(tree.route(x))) {
                *a += v;
            }
        }
        let d = self.forest.len() as f64;
        acc.iter_mut().for_each(|a| *a /= d);
        acc
    }

    /// Smoothed conditional survivor curve at `x`, averaged over trees.
    pub fn predict_survivor(&self, x: &[f64]) -> Result<SurvivorCurve> {
        self.check_x(x)?;
        let values = self.average(x, |l| &l.smoothed);
        Ok(SurvivorCurve::from_values_clamped(self.grid.clone(), values, CurveKind::Smoothed))
    }

    /// Unsmoothed counterpart of [`predict_survivor`](Self::predict_survivor).
    pub fn predict_step(&self, x: &[f64]) -> Result<SurvivorCurve> {
        self.check_x(x)?;
        let values = self.average(x, |l| &l.step);
        Ok(SurvivorCurve::from_values_clamped(self.grid.clone(), values, CurveKind::Step))
    }
}

/// Distinct finite endpoints together with `τ`, thinned to `max_points`.
pub fn model_grid(dataset: &Dataset, max_points: usize) -> Result<TimeGrid> {
    let mut pts = endpoint_grid(dataset.observations.iter().map(IntervalObservation::bracket)).points().to_vec();
    if let Err(k) = pts.binary_search_by(|v| v.total_cmp(&dataset.tau)) {
        pts.insert(k, dataset.tau);
    }
    Ok(TimeGrid::new(pts)?.thinned(max_points))
}

struct Shared<'a> {
    params: &'a IcrfParams,
    columns: Vec<Vec<f64>>,
    rows: Vec<&'a [f64]>,
    brackets: Vec<(f64, f64)>,
    grid: &'a [f64],
    smoother: &'a KernelSmoother,
    tau: f64,
    mtry: usize,
}

struct TreeOutput {
    tree: SurvivalTree,
    oob_sum: f64,
    oob_used: usize,
    oob_skipped: usize,
}

fn grow_tree(ctx: &Shared, scores: &[f64], prev: &[f64], iteration: usize, d: usize) -> Result<TreeOutput> {
    let n = ctx.rows.len();
    let p = ctx.columns.len();
    let mut rng = stream(ctx.params.seed, &[iteration as u64, d as u64]);
    let mut inbag = rand::seq::index::sample(&mut rng, n, ctx.params.inbag_size(n)).into_vec();
    inbag.sort_unstable();

    let mut nodes = vec![Node::Leaf(usize::MAX)];
    let mut leaves = Vec::new();
    let mut stack = vec![(0usize, inbag.clone())];
    while let Some((id, members)) = stack.pop() {
        let features = choose_features(p, ctx.mtry, ctx.params.feature_with_replacement, &mut rng);
        match best_split(&members, &ctx.columns, scores, &features, ctx.params.min_node_size) {
            Some(split) => {
                let (left, right): (Vec<usize>, Vec<usize>) = members.iter().partition(|&&i| ctx.columns[split.feature][i] <= split.cutoff);
                let l = nodes.len();
                nodes.push(Node::Leaf(usize::MAX));
                nodes.push(Node::Leaf(usize::MAX));
                nodes[id] = Node::Split { feature: split.feature, cutoff: split.cutoff, left: l, right: l + 1 };
                // right is pushed first so the left subtree is grown first
                stack.push((l + 1, right));
                stack.push((l, left));
            }
            None => {
                let step = terminal_estimate(&members, &ctx.brackets, prev, ctx.grid, ctx.params.terminal_rule)?;
                let smoothed = ctx.smoother.smooth_values(&step).values;
                nodes[id] = Node::Leaf(leaves.len());
                leaves.push(Leaf { members, step, smoothed });
            }
        }
    }
    let tree = SurvivalTree { nodes, leaves };

    let mut in_mask = vec![false; n];
    inbag.iter().for_each(|&i| in_mask[i] = true);
    let (mut oob_sum, mut oob_used, mut oob_skipped) = (0.0, 0, 0);
    for i in (0..n).filter(|&i| !in_mask[i]) {
        let leaf = tree.route(ctx.rows[i]);
        match subject_imse(ctx.grid, &leaf.smoothed, CurveKind::Smoothed, ctx.brackets[i], ctx.tau) {
            Some(e) => {
                oob_sum += e;
                oob_used += 1;
            }
            None => oob_skipped += 1,
        }
    }
    Ok(TreeOutput { tree, oob_sum, oob_used, oob_skipped })
}

fn subject_scores(rule: SplitRule, brackets: &[(f64, f64)], grid: &[f64], prev: &[f64]) -> Vec<f64> {
    let m = grid.len();
    brackets
        .iter()
        .enumerate()
        .map(|(i, &(l, r))| {
            let row = &prev[i * m..(i + 1) * m];
            let sl = eval_on_grid(grid, row, CurveKind::Step, l);
            let sr = if r.is_infinite() { 0.0 } else { eval_on_grid(grid, row, CurveKind::Step, r) };
            match rule {
                SplitRule::Gwrs => gwrs_score(sl, sr),
                SplitRule::Glr => glr_score(sl, sr),
            }
        })
        .collect()
}

pub fn icrf_fit(dataset: &Dataset, params: &IcrfParams) -> Result<ConditionalSurvivorModel> {
    icrf_fit_with(dataset, params, &SerialExecutor)
}

/// [`icrf_fit`] with the trees of each round run by `executor`.
pub fn icrf_fit_with<E: TreeExecutor>(dataset: &Dataset, params: &IcrfParams, executor: &E) -> Result<ConditionalSurvivorModel> {
    let p = dataset.feature_dim;
    params.validate(p)?;
    let n = dataset.len();
    let brackets = dataset.brackets();
    let grid = model_grid(dataset, MAX_GRID_POINTS)?;
    let pts = grid.points();
    let m = pts.len();

    let npmle = turnbull_npmle(&brackets)?;
    let Bandwidth { h, fallback, .. } = default_bandwidth(&npmle.curve, params.min_node_size)?;
    let smoother = KernelSmoother::new(grid.clone(), grid.clone(), h)?;
    let s0: Vec<f64> = pts.iter().map(|&t| npmle.curve.eval(t)).collect();
    let mut prev: Vec<f64> = Vec::with_capacity(n * m);
    for _ in 0..n {
        prev.extend_from_slice(&s0);
    }

    let ctx = Shared {
        params,
        columns: (0..p).map(|j| dataset.feature_column(j)).collect(),
        rows: dataset.observations.iter().map(|o| o.features.as_slice()).collect(),
        brackets,
        grid: pts,
        smoother: &smoother,
        tau: dataset.tau,
        mtry: params.mtry_for(p),
    };

    let mut oob_errors = Vec::with_capacity(params.n_iterations);
    let mut best: Option<(usize, f64, Vec<SurvivalTree>)> = None;
    let mut skipped_oob = 0;
    for t in 0..params.n_iterations {
        let scores = subject_scores(params.split_rule, &ctx.brackets, pts, &prev);
        let outputs = executor.map(params.n_trees, |d| grow_tree(&ctx, &scores, &prev, t, d));
        let outputs = outputs.into_iter().collect::<Result<Vec<_>>>()?;

        let (mut err_sum, mut err_trees) = (0.0, 0usize);
        for o in &outputs {
            skipped_oob += o.oob_skipped;
            if o.oob_used > 0 {
                err_sum += o.oob_sum / o.oob_used as f64;
                err_trees += 1;
            }
        }
        let err = if err_trees > 0 { err_sum / err_trees as f64 } else { f64::NAN };
        oob_errors.push(err);

        let mut next = vec![0.0; n * m];
        for o in &outputs {
            for (i, row) in next.chunks_exact_mut(m).enumerate() {
                for (a, v) in row.iter_mut().zip(&o.tree.route(ctx.rows[i]).step) {
                    *a += v;
                }
            }
        }
        let dn = params.n_trees as f64;
        next.iter_mut().for_each(|v| *v /= dn);
        prev = next;

        // NaN errors never beat a recorded one; with no OOB data the last round wins
        let better = match &best {
            None => true,
            Some((_, e, _)) => err < *e || (e.is_nan() && !err.is_nan()) || (e.is_nan() && err.is_nan()),
        };
        if better {
            best = Some((t, err, outputs.into_iter().map(|o| o.tree).collect()));
        }
    }
    let (best_iteration, _, forest) = best.expect("at least one round");
    Ok(ConditionalSurvivorModel {
        params: *params,
        grid,
        bandwidth: h,
        bandwidth_fallback: fallback,
        feature_dim: p,
        tau: dataset.tau,
        forest,
        best_iteration,
        oob_errors,
        skipped_oob,
    })
}
