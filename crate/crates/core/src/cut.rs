//! Censoring-unbiased transformation of interval-censored responses and the
//! CUT / imputation losses built on it.

use serde::{Deserialize, Serialize};

use crate::data::{IntervalObservation, SurvivorCurve, TimeGrid};
use crate::error::{invalid, Result};
use crate::icrf::ConditionalSurvivorModel;

/// Response transformation `g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GTransform {
    Identity,
    Log,
    /// `g_s(y) = 2·I(y > s) − 1`.
    Threshold(f64),
}

impl GTransform {
    pub fn threshold(s: f64) -> Result<Self> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(invalid("threshold must be positive and finite"));
        }
        Ok(GTransform::Threshold(s))
    }

    pub fn eval(&self, y: f64) -> f64 {
        match *self {
            GTransform::Identity => y,
            GTransform::Log => libm::log(y),
            GTransform::Threshold(s) => {
                if y > s {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

/// Estimated first and second conditional moments of `g(Y)` given the bracket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformedResponse {
    pub y1: f64,
    pub y2: f64,
    /// `S(a) − S(b)` under the plugged-in curve.
    pub bracket_mass: f64,
    /// Set when the bracket carried no mass and the point-mass limit was used.
    pub degenerate: bool,
}

const ZERO_MASS: f64 = 1e-12;

/// Both conditional moments of `g(Y)` on `(a, b]` under `curve`.
///
/// The bracket is cut at the points of `grid` inside it into cells
/// `(v_{l−1}, v_l]`; each cell contributes `g(v_l)^k` weighted by its survivor
/// decrement. Mass beyond the last grid point (`b = ∞` or `b` past the grid)
/// sits at the last grid point.
pub fn bracket_moments(curve: &SurvivorCurve, bracket: (f64, f64), g: GTransform, grid: &TimeGrid) -> Result<TransformedResponse> {
    let (a, b) = bracket;
    if !(a >= 0.0 && a < b) {
        return Err(invalid("bracket needs 0 ≤ a < b"));
    }
    let last = grid.last().ok_or_else(|| invalid("empty grid"))?;
    let hi = b.min(last);
    let s_end = if b.is_finite() { curve.eval(b) } else { 0.0 };
    let s_a = curve.eval(a);
    let total = s_a - s_end;
    if total < ZERO_MASS {
        let point = if b.is_finite() { b } else { a.max(last) };
        let v = g.eval(point);
        return Ok(TransformedResponse { y1: v, y2: v * v, bracket_mass: total.max(0.0), degenerate: true });
    }

    let (mut m1, mut m2) = (0.0, 0.0);
    let mut add = |point: f64, mass: f64| {
        if mass > 0.0 {
            let v = g.eval(point);
            m1 += v * mass;
            m2 += v * v * mass;
        }
    };
    let mut prev_s = s_a;
    let mut tail_at = a;
    if hi > a {
        let pts = grid.points();
        let start = pts.partition_point(|&v| v <= a);
        let stop = pts.partition_point(|&v| v < hi);
        for &v in &pts[start..stop] {
            let s = curve.eval(v);
            add(v, prev_s - s);
            prev_s = s;
        }
        let s = curve.eval(hi);
        add(hi, prev_s - s);
        prev_s = s;
        tail_at = hi;
    }
    // remaining mass beyond the grid
    add(tail_at, prev_s - s_end);
    let (mut y1, mut y2) = (m1 / total, m2 / total);
    if let GTransform::Threshold(_) = g {
        y1 = y1.clamp(-1.0, 1.0);
        y2 = 1.0;
    }
    Ok(TransformedResponse { y1, y2, bracket_mass: total, degenerate: false })
}

/// `E[g(Y)^k | a < Y ≤ b]` for `k ∈ {1, 2}`; see [`bracket_moments`].
pub fn conditional_moment(curve: &SurvivorCurve, bracket: (f64, f64), g: GTransform, k: u32, grid: &TimeGrid) -> Result<f64> {
    let m = bracket_moments(curve, bracket, g, grid)?;
    match k {
        1 => Ok(m.y1),
        2 => Ok(m.y2),
        _ => Err(invalid("only the first two moments are supported")),
    }
}

/// Transformed response of one subject given its conditional survivor curve.
pub fn transform_with_curve(obs: &IntervalObservation, curve: &SurvivorCurve, g: GTransform, grid: &TimeGrid) -> Result<TransformedResponse> {
    bracket_moments(curve, obs.bracket(), g, grid)
}

/// Transformed response of one subject under the forest's conditional
/// survivor curve at its features.
pub fn transform_response(obs: &IntervalObservation, model: &ConditionalSurvivorModel, g: GTransform) -> Result<TransformedResponse> {
    let curve = model.predict_survivor(&obs.features)?;
    bracket_moments(&curve, obs.bracket(), g, &model.grid)
}

/// `½·y2 − y1·f + ½·f²`.
pub fn cut_loss(tr: &TransformedResponse, f: f64) -> f64 {
    0.5 * tr.y2 - tr.y1 * f + 0.5 * f * f
}

/// `½(y1 − f)²`.
pub fn imp_loss(tr: &TransformedResponse, f: f64) -> f64 {
    0.5 * (tr.y1 - f) * (tr.y1 - f)
}

/// `∂/∂f` of both [`cut_loss`] and [`imp_loss`].
pub fn loss_gradient(tr: &TransformedResponse, f: f64) -> f64 {
    f - tr.y1
}
