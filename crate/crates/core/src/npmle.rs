//! Turnbull's nonparametric MLE for interval-censored data and Gaussian
//! kernel smoothing of step survivor curves.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::{CurveKind, SurvivorCurve, TimeGrid};
use crate::error::{invalid, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_MAX_ITERATIONS: usize = 100_000;

#[derive(Debug, Clone)]
pub struct TurnbullResult {
    /// Step curve jumping at the finite right ends of the Turnbull intervals.
    pub curve: SurvivorCurve,
    /// Support intervals `(q_j, p_j]`; the last `p_j` may be infinite.
    pub turnbull_intervals: Vec<(f64, f64)>,
    pub masses: Vec<f64>,
    pub iterations: usize,
    /// Largest mass change in the final sweep.
    pub final_residual: f64,
    pub log_likelihood: f64,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Side {
    // brackets are (L, R]: at a shared value a right end closes before a left
    // end opens
    Right,
    Left,
}

/// Maximal intersections of the brackets, in increasing order.
pub fn turnbull_intervals(brackets: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut ends: Vec<(f64, Side)> = Vec::with_capacity(2 * brackets.len());
    for &(l, r) in brackets {
        ends.push((l, Side::Left));
        ends.push((r, Side::Right));
    }
    ends.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    ends.windows(2)
        .filter(|w| w[0].1 == Side::Left && w[1].1 == Side::Right)
        .map(|w| (w[0].0, w[1].0))
        .collect()
}

/// Self-consistency estimate with the default tolerance (`1e-8` on masses).
pub fn turnbull_npmle(brackets: &[(f64, f64)]) -> Result<TurnbullResult> {
    turnbull_npmle_with(brackets, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERATIONS)
}

pub fn turnbull_npmle_with(brackets: &[(f64, f64)], tolerance: f64, max_iterations: usize) -> Result<TurnbullResult> {
    if brackets.is_empty() {
        return Err(invalid("no brackets"));
    }
    if brackets.iter().any(|&(l, r)| !(l >= 0.0 && l < r) || l.is_nan() || r.is_nan()) {
        return Err(invalid("each bracket needs 0 ≤ left < right"));
    }
    let intervals = turnbull_intervals(brackets);
    let m = intervals.len();
    // Each bracket covers a contiguous run of support intervals.
    let ranges: Vec<(usize, usize)> = brackets
        .iter()
        .map(|&(l, r)| {
            let lo = intervals.partition_point(|&(q, _)| q < l);
            let hi = intervals.partition_point(|&(_, p)| p <= r);
            assert!(lo < hi, "bracket ({l}, {r}] contains no Turnbull interval");
            (lo, hi)
        })
        .collect();

    let n = brackets.len() as f64;
    let mut masses = vec![1.0 / m as f64; m];
    let mut prefix = vec![0.0; m + 1];
    let mut weight = vec![0.0; m + 1];
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    let mut loglik = log_likelihood(&masses, &ranges, &mut prefix);
    while iterations < max_iterations && residual >= tolerance {
        for (j, p) in masses.iter().enumerate() {
            prefix[j + 1] = prefix[j] + p;
        }
        weight.iter_mut().for_each(|w| *w = 0.0);
        for &(lo, hi) in &ranges {
            let inv = 1.0 / (prefix[hi] - prefix[lo]);
            weight[lo] += inv;
            weight[hi] -= inv;
        }
        residual = 0.0;
        let mut acc = 0.0;
        for j in 0..m {
            acc += weight[j];
            let updated = masses[j] * acc / n;
            residual = residual.max(libm::fabs(updated - masses[j]));
            masses[j] = updated;
        }
        iterations += 1;
        if cfg!(debug_assertions) {
            let next = log_likelihood(&masses, &ranges, &mut prefix);
            debug_assert!(next >= loglik - 1e-9 * libm::fabs(loglik).max(1.0), "EM decreased the likelihood");
            loglik = next;
        }
    }
    loglik = log_likelihood(&masses, &ranges, &mut prefix);

    let mut grid = Vec::with_capacity(m);
    let mut values = Vec::with_capacity(m);
    let mut surv = 1.0;
    for (&(_, p), &mass) in intervals.iter().zip(&masses) {
        surv -= mass;
        if p.is_finite() {
            grid.push(p);
            values.push(surv.clamp(0.0, 1.0));
        }
    }
    let curve = SurvivorCurve::from_values_clamped(TimeGrid::new(grid)?, values, CurveKind::Step);
    Ok(TurnbullResult {
        curve,
        turnbull_intervals: intervals,
        masses,
        iterations,
        final_residual: residual,
        log_likelihood: loglik,
    })
}

fn log_likelihood(masses: &[f64], ranges: &[(usize, usize)], prefix: &mut [f64]) -> f64 {
    for (j, p) in masses.iter().enumerate() {
        prefix[j + 1] = prefix[j] + p;
    }
    ranges.iter().map(|&(lo, hi)| libm::log(prefix[hi] - prefix[lo])).sum()
}

/// Standard normal distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / core::f64::consts::SQRT_2)
}

/// Jumps `(v_j, ΔS_j)` of a curve read as a step function on its grid.
fn jumps(curve: &SurvivorCurve) -> Vec<(f64, f64)> {
    let mut prev = 1.0;
    let mut out = Vec::new();
    for (&v, &s) in curve.grid.points().iter().zip(&curve.values) {
        if s != prev {
            out.push((v, s - prev));
        }
        prev = s;
    }
    out
}

/// Gaussian-kernel smoothing of a survivor curve:
///
/// `λ̃(y) = 1 + Σ_j ΔS(v_j)·[Φ((y − v_j)/h) − Φ(−v_j/h)]`
///
/// evaluated on `eval_grid`, clamped to `[0, 1]` and made nonincreasing. The
/// input is read as a step function on its grid whatever its kind.
pub fn kernel_smooth(curve: &SurvivorCurve, h: f64, eval_grid: &TimeGrid) -> Result<SurvivorCurve> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(invalid("bandwidth must be positive"));
    }
    let js = jumps(curve);
    let values = eval_grid
        .points()
        .iter()
        .map(|&y| {
            1.0 + js
                .iter()
                .map(|&(v, d)| d * (normal_cdf((y - v) / h) - normal_cdf(-v / h)))
                .sum::<f64>()
        })
        .collect();
    Ok(SurvivorCurve::from_values_clamped(eval_grid.clone(), values, CurveKind::Smoothed))
}

/// Precomputed [`kernel_smooth`] for many curves sharing one source grid and
/// one evaluation grid.
#[derive(Debug, Clone)]
pub struct KernelSmoother {
    source: TimeGrid,
    target: TimeGrid,
    bandwidth: f64,
    /// Row-major `target × source` weights `Φ((y_a − v_j)/h) − Φ(−v_j/h)`.
    weights: Vec<f64>,
}

impl KernelSmoother {
    pub fn new(source: TimeGrid, target: TimeGrid, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(invalid("bandwidth must be positive"));
        }
        let offsets: Vec<f64> = source.points().iter().map(|&v| normal_cdf(-v / bandwidth)).collect();
        let mut weights = Vec::with_capacity(source.len() * target.len());
        for &y in target.points() {
            for (&v, &off) in source.points().iter().zip(&offsets) {
                weights.push(normal_cdf((y - v) / bandwidth) - off);
            }
        }
        Ok(Self { source, target, bandwidth, weights })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn target(&self) -> &TimeGrid {
        &self.target
    }

    /// Smooths survivor values given on the source grid.
    pub fn smooth_values(&self, values: &[f64]) -> SurvivorCurve {
        let m = self.source.len();
        assert_eq!(values.len(), m, "values must live on the source grid");
        let mut deltas = Vec::with_capacity(m);
        let mut prev = 1.0;
        for &s in values {
            deltas.push(s - prev);
            prev = s;
        }
        let out = self
            .weights
            .chunks_exact(m)
            .map(|row| 1.0 + row.iter().zip(&deltas).map(|(w, d)| w * d).sum::<f64>())
            .collect();
        SurvivorCurve::from_values_clamped(self.target.clone(), out, CurveKind::Smoothed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bandwidth {
    pub h: f64,
    /// Spread constant used: the interquartile range, or the grid range on
    /// fallback.
    pub spread: f64,
    /// Set when the curve never crossed a quartile and the grid range was used.
    pub fallback: bool,
}

/// `h = c · n_min^{-1/5}`.
pub fn bandwidth_from_spread(spread: f64, n_min: usize) -> f64 {
    spread * libm::pow(n_min as f64, -0.2)
}

/// First grid time with `S(t) ≤ q`.
pub fn quantile_time(curve: &SurvivorCurve, q: f64) -> Option<f64> {
    curve
        .grid
        .points()
        .iter()
        .zip(&curve.values)
        .find(|(_, &s)| s <= q + 1e-12)
        .map(|(&t, _)| t)
}

/// `h = IQR · n_min^{-1/5}`, where the IQR is the distance between the times
/// the curve falls to 0.75 and to 0.25.
pub fn default_bandwidth(curve: &SurvivorCurve, n_min: usize) -> Result<Bandwidth> {
    if n_min == 0 {
        return Err(invalid("n_min must be positive"));
    }
    let iqr = match (quantile_time(curve, 0.75), quantile_time(curve, 0.25)) {
        (Some(a), Some(b)) if b > a => Some(b - a),
        _ => None,
    };
    let (spread, fallback) = match iqr {
        Some(c) => (c, false),
        None => {
            let pts = curve.grid.points();
            let range = match (pts.first(), pts.last()) {
                (Some(a), Some(b)) if b > a => b - a,
                (_, Some(b)) if *b > 0.0 => *b,
                _ => 1.0,
            };
            (range, true)
        }
    };
    Ok(Bandwidth { h: bandwidth_from_spread(spread, n_min), spread, fallback })
}
