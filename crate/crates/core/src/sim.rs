//! Synthetic accelerated-failure-time data with uniform monitoring visits.

use alloc::vec::Vec;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, IntervalObservation};
use crate::error::{invalid, Result};

/// Scale of the logistic error distribution.
pub const LOGISTIC_SCALE: f64 = 0.125;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorDist {
    /// `N(0, σ²)`.
    Normal,
    /// Logistic with location 0 and scale [`LOGISTIC_SCALE`].
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    /// 1, or at least 5 (only features 1, 3 and 5 carry signal).
    pub p: usize,
    pub sigma: f64,
    pub tau: f64,
    /// Monitoring visits per subject.
    pub m: usize,
    pub error_dist: ErrorDist,
    pub beta: [f64; 3],
    /// Share of subjects used for training.
    pub train_fraction: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 500,
            p: 1,
            sigma: 0.25,
            tau: 6.0,
            m: 3,
            error_dist: ErrorDist::Normal,
            beta: [1.0, 0.8, 0.8],
            train_fraction: 0.8,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(invalid("n must be at least 10"));
        }
        if !(self.p == 1 || self.p >= 5) {
            return Err(invalid("p must be 1 or at least 5"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(invalid("tau must be positive"));
        }
        if self.m == 0 {
            return Err(invalid("m must be at least 1"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(invalid("sigma must be nonnegative"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(invalid("train_fraction must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn n_train(&self) -> usize {
        let k = libm::round(self.n as f64 * self.train_fraction) as usize;
        k.clamp(1, self.n - 1)
    }
}

/// `β₀|x₁ − ½| + β₁x₃³ + β₂ sin(πx₅)`; with one feature all three terms use it.
pub fn phi_default(x: &[f64], beta: [f64; 3]) -> Result<f64> {
    let (a, b, c) = match x.len() {
        1 => (x[0], x[0], x[0]),
        p if p >= 5 => (x[0], x[2], x[4]),
        _ => return Err(invalid("phi needs 1 or at least 5 features")),
    };
    Ok(beta[0] * libm::fabs(a - 0.5) + beta[1] * b * b * b + beta[2] * libm::sin(core::f64::consts::PI * c))
}

/// Bracket midpoint, or the left end of a right-censored bracket.
pub fn naive_surrogate(obs: &IntervalObservation) -> f64 {
    if obs.is_right_censored() {
        obs.left
    } else {
        0.5 * (obs.left + obs.right)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimData {
    pub train: Dataset,
    /// Uncensored event times of the training subjects.
    pub train_y: Vec<f64>,
    pub train_phi: Vec<f64>,
    pub test_x: Vec<Vec<f64>>,
    pub test_phi: Vec<f64>,
}

fn draw_error<R: Rng + ?Sized>(dist: ErrorDist, sigma: f64, rng: &mut R) -> f64 {
    match dist {
        ErrorDist::Normal => {
            let z: f64 = StandardNormal.sample(rng);
            sigma * z
        }
        ErrorDist::Logistic => {
            let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
            LOGISTIC_SCALE * libm::log(u / (1.0 - u))
        }
    }
}

/// Draws `n` subjects; the first [`SimConfig::n_train`] form the training set.
pub fn gen_aft<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Result<SimData> {
    config.validate()?;
    let n_train = config.n_train();
    let mut obs = Vec::with_capacity(n_train);
    let mut train_y = Vec::with_capacity(n_train);
    let mut train_phi = Vec::with_capacity(n_train);
    let mut test_x = Vec::with_capacity(config.n - n_train);
    let mut test_phi = Vec::with_capacity(config.n - n_train);
    for i in 0..config.n {
        let x: Vec<f64> = (0..config.p).map(|_| rng.random::<f64>()).collect();
        let phi = phi_default(&x, config.beta)?;
        let y = libm::exp(phi + draw_error(config.error_dist, config.sigma, rng));
        let mut visits: Vec<f64> = (0..config.m).map(|_| rng.random::<f64>() * config.tau).collect();
        visits.sort_by(f64::total_cmp);
        if i < n_train {
            obs.push(IntervalObservation::from_monitoring(x, y, visits)?);
            train_y.push(y);
            train_phi.push(phi);
        } else {
            test_x.push(x);
            test_phi.push(phi);
        }
    }
    Ok(SimData { train: Dataset::new(obs, config.tau)?, train_y, train_phi, test_x, test_phi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn phi_examples() {
        let b = [1.0, 0.8, 0.8];
        assert!((phi_default(&[0.5], b).unwrap() - 0.9).abs() < 1e-15);
        assert!((phi_default(&[0.0], b).unwrap() - 0.5).abs() < 1e-15);
        assert!((phi_default(&[1.0], b).unwrap() - 1.3).abs() < 1e-15);
        assert!((phi_default(&[0.5, 9.0, 0.0, 9.0, 0.5], b).unwrap() - 0.8).abs() < 1e-15);
        assert!(phi_default(&[0.1, 0.2], b).is_err());
    }

    #[test]
    fn surrogate_examples() {
        let o = |l, r| IntervalObservation::new(alloc::vec![0.0], l, r).unwrap();
        assert_eq!(naive_surrogate(&o(1.0, 3.0)), 2.0);
        assert_eq!(naive_surrogate(&o(5.0, f64::INFINITY)), 5.0);
        assert_eq!(naive_surrogate(&o(0.0, 1.0)), 0.5);
    }

    #[test]
    fn split_sizes_and_reproducibility() {
        let cfg = SimConfig::default();
        let a = gen_aft(&cfg, &mut stream(5, &[0])).unwrap();
        let b = gen_aft(&cfg, &mut stream(5, &[0])).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.train.len(), a.test_x.len()), (400, 100));
        for (o, &y) in a.train.observations.iter().zip(&a.train_y) {
            assert!(o.left < y && y <= o.right);
        }
    }

    #[test]
    fn error_moments() {
        for (dist, sd) in [(ErrorDist::Normal, 0.25), (ErrorDist::Logistic, LOGISTIC_SCALE * core::f64::consts::PI / libm::sqrt(3.0))] {
            let cfg = SimConfig { n: 100_000, error_dist: dist, train_fraction: 0.99, ..Default::default() };
            let d = gen_aft(&cfg, &mut stream(9, &[1])).unwrap();
            let e: Vec<f64> = d.train_y.iter().zip(&d.train_phi).map(|(y, p)| libm::log(*y) - p).collect();
            let k = e.len() as f64;
            let mean = e.iter().sum::<f64>() / k;
            let var = e.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0);
            assert!(mean.abs() < 3.0 * sd / libm::sqrt(k), "{mean}");
            // the sample sd has standard error ≈ sd·√((κ−1)/(4k)); κ ≤ 4.2 here
            assert!((libm::sqrt(var) - sd).abs() < 3.0 * sd * libm::sqrt(3.2 / (4.0 * k)), "{}", libm::sqrt(var));
        }
    }
}
