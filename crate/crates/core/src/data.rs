//! Interval-censored observations, endpoint grids and survivor curves.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Right endpoint of a right-censored bracket `(L, ∞)`.
pub const RIGHT_CENSORED: f64 = f64::INFINITY;

/// One subject: features and the bracket `(left, right]` known to contain the
/// event time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalObservation {
    pub features: Vec<f64>,
    pub left: f64,
    /// [`RIGHT_CENSORED`] when the event had not happened by the last visit.
    pub right: f64,
    /// Sorted visit times the bracket was derived from, when known.
    pub monitoring_times: Option<Vec<f64>>,
}

impl IntervalObservation {
    pub fn new(features: Vec<f64>, left: f64, right: f64) -> Result<Self> {
        check_bracket(left, right)?;
        Ok(Self { features, left, right, monitoring_times: None })
    }

    /// Builds the observation from an event time and its visit schedule.
    pub fn from_monitoring(features: Vec<f64>, y: f64, monitoring: Vec<f64>) -> Result<Self> {
        let (left, right) = bracket_from_monitoring(y, &monitoring)?;
        Ok(Self { features, left, right, monitoring_times: Some(monitoring) })
    }

    pub fn is_right_censored(&self) -> bool {
        self.right == RIGHT_CENSORED
    }

    pub fn bracket(&self) -> (f64, f64) {
        (self.left, self.right)
    }
}

fn check_bracket(left: f64, right: f64) -> Result<()> {
    if !(left.is_finite() && left >= 0.0) {
        return Err(invalid("left endpoint must be finite and nonnegative"));
    }
    if right.is_nan() || left >= right {
        return Err(invalid("left ≥ right"));
    }
    Ok(())
}

/// The bracket `(u_{j-1}, u_j]` that contains `y`, with `u_0 = 0`, or
/// `(u_m, ∞)` when `y` exceeds every visit.
pub fn bracket_from_monitoring(y: f64, monitoring: &[f64]) -> Result<(f64, f64)> {
    if monitoring.is_empty() {
        return Err(invalid("empty monitoring vector"));
    }
    if !(y > 0.0) || !y.is_finite() {
        return Err(invalid("event time must be positive and finite"));
    }
    if monitoring[0] <= 0.0 || monitoring.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("monitoring times must be positive and strictly increasing"));
    }
    // First visit at or after y: y = u_j belongs to (u_{j-1}, u_j].
    let j = monitoring.partition_point(|&u| u < y);
    let left = if j == 0 { 0.0 } else { monitoring[j - 1] };
    let right = monitoring.get(j).copied().unwrap_or(RIGHT_CENSORED);
    Ok((left, right))
}

/// An interval-censored sample with a common feature dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub observations: Vec<IntervalObservation>,
    pub feature_dim: usize,
    /// Study horizon; the end of the window the survivor curves cover.
    pub tau: f64,
}

impl Dataset {
    pub fn new(observations: Vec<IntervalObservation>, tau: f64) -> Result<Self> {
        let first = observations.first().ok_or_else(|| invalid("dataset is empty"))?;
        let feature_dim = first.features.len();
        if feature_dim == 0 {
            return Err(invalid("observations need at least one feature"));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(invalid("tau must be positive and finite"));
        }
        for (i, obs) in observations.iter().enumerate() {
            if obs.features.len() != feature_dim {
                return Err(invalid(alloc::format!(
                    "observation {i} has {} features, expected {feature_dim}",
                    obs.features.len()
                )));
            }
            check_bracket(obs.left, obs.right)?;
        }
        Ok(Self { observations, feature_dim, tau })
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Values of feature `j` across subjects.
    pub fn feature_column(&self, j: usize) -> Vec<f64> {
        self.observations.iter().map(|o| o.features[j]).collect()
    }

    pub fn brackets(&self) -> Vec<(f64, f64)> {
        self.observations.iter().map(IntervalObservation::bracket).collect()
    }

    /// Largest finite endpoint in the sample.
    pub fn max_finite_endpoint(&self) -> f64 {
        self.observations
            .iter()
            .flat_map(|o| [o.left, o.right])
            .filter(|t| t.is_finite())
            .fold(0.0, f64::max)
    }
}

/// Strictly increasing time points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.iter().any(|t| !t.is_finite()) {
            return Err(invalid("grid points must be finite"));
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("grid points must be strictly increasing"));
        }
        if points.iter().skip(1).any(|&t| t <= 0.0) || points.first().is_some_and(|&t| t < 0.0) {
            return Err(invalid("grid points must be positive (only the first may be 0)"));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> Option<f64> {
        self.points.last().copied()
    }

    /// Keeps at most `max_points` points by uniform index thinning, always
    /// retaining the first and last point.
    pub fn thinned(&self, max_points: usize) -> TimeGrid {
        let m = self.points.len();
        if m <= max_points || max_points < 2 {
            return self.clone();
        }
        let mut points = Vec::with_capacity(max_points);
        for k in 0..max_points {
            let idx = (k * (m - 1) + (max_points - 1) / 2) / (max_points - 1);
            let v = self.points[idx];
            if points.last() != Some(&v) {
                points.push(v);
            }
        }
        TimeGrid { points }
    }
}

/// Sorted, deduplicated finite endpoints of every bracket; `0` and `∞` are
/// dropped because `S(0) = 1` is implicit.
pub fn distinct_endpoint_grid(dataset: &Dataset) -> TimeGrid {
    endpoint_grid(dataset.observations.iter().map(IntervalObservation::bracket))
}

pub(crate) fn endpoint_grid(brackets: impl Iterator<Item = (f64, f64)>) -> TimeGrid {
    let mut points: Vec<f64> = brackets
        .flat_map(|(l, r)| [l, r])
        .filter(|t| t.is_finite() && *t > 0.0)
        .collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    TimeGrid { points }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurveKind {
    /// Right-continuous step function jumping at grid points.
    Step,
    /// Piecewise linear between grid points, anchored at `S(0) = 1`.
    Smoothed,
}

/// A nonincreasing survivor function sampled on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivorCurve {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
    pub kind: CurveKind,
}

const CURVE_TOL: f64 = 1e-12;

impl SurvivorCurve {
    pub fn new(grid: TimeGrid, values: Vec<f64>, kind: CurveKind) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(crate::Error::DimensionMismatch { expected: grid.len(), found: values.len() });
        }
        if values.iter().any(|v| !(-CURVE_TOL..=1.0 + CURVE_TOL).contains(v)) {
            return Err(invalid("survivor values must lie in [0, 1]"));
        }
        if values.windows(2).any(|w| w[1] > w[0] + CURVE_TOL) {
            return Err(invalid("survivor values must be nonincreasing"));
        }
        Ok(Self { grid, values, kind })
    }

    /// Curve identically 1 on `grid`.
    pub fn constant_one(grid: TimeGrid, kind: CurveKind) -> Self {
        let values = alloc::vec![1.0; grid.len()];
        Self { grid, values, kind }
    }

    /// Builds a curve from values already known to satisfy the invariants, after
    /// clamping to `[0, 1]` and enforcing monotonicity with a running minimum.
    pub fn from_values_clamped(grid: TimeGrid, mut values: Vec<f64>, kind: CurveKind) -> Self {
        let mut running = 1.0_f64;
        for v in values.iter_mut() {
            running = running.min(v.clamp(0.0, 1.0));
            *v = running;
        }
        Self { grid, values, kind }
    }

    /// `S(t)`; see [`CurveKind`] for the interpolation rule.
    pub fn eval(&self, t: f64) -> f64 {
        survivor_eval(self, t)
    }
}

/// Evaluates `curve` at `t ≥ 0`. Beyond the grid the last value is held.
pub fn survivor_eval(curve: &SurvivorCurve, t: f64) -> f64 {
    eval_on_grid(curve.grid.points(), &curve.values, curve.kind, t)
}

/// [`survivor_eval`] on raw grid points and values.
pub fn eval_on_grid(pts: &[f64], values: &[f64], kind: CurveKind, t: f64) -> f64 {
    if pts.is_empty() || t.is_nan() {
        return 1.0;
    }
    // number of grid points ≤ t
    let idx = pts.partition_point(|&v| v <= t);
    match kind {
        CurveKind::Step => {
            if idx == 0 {
                1.0
            } else {
                values[idx - 1]
            }
        }
        CurveKind::Smoothed => {
            if idx == pts.len() {
                return values[pts.len() - 1];
            }
            let (t0, s0) = if idx == 0 { (0.0, 1.0) } else { (pts[idx - 1], values[idx - 1]) };
            let (t1, s1) = (pts[idx], values[idx]);
            if t <= t0 || t1 <= t0 {
                return s0;
            }
            s0 + (s1 - s0) * (t - t0) / (t1 - t0)
        }
    }
}
