//! Closed-form mean squared error of boosted linear smoothers in the
//! eigenbasis of the smoother matrix, and the checks built on it.
//!
//! With `Ψ = Q diag(λ) Qᵀ`, `μ = Qᵀφ` and noise level `σ̂²`, the boosted
//! estimator `B⁽ᵗ⁾ = I − (I − Ψ)^{t+1}` has
//!
//! `var(t) = σ̂² n⁻¹ Σ {1 − (1−λ_l)^{t+1}}²`, `bias²(t) = n⁻¹ Σ μ_l² (1−λ_l)^{2t+2}`.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseParts {
    pub variance: f64,
    pub bias2: f64,
    pub mse: f64,
}

fn check_spectrum(eigenvalues: &[f64], mu: &[f64], sigma2: f64) -> Result<()> {
    if eigenvalues.is_empty() {
        return Err(invalid("empty spectrum"));
    }
    if eigenvalues.len() != mu.len() {
        return Err(Error::DimensionMismatch { expected: eigenvalues.len(), found: mu.len() });
    }
    if eigenvalues.iter().any(|l| !(-1e-12..=1.0 + 1e-12).contains(l)) {
        return Err(invalid("eigenvalues must lie in [0, 1]"));
    }
    if !(sigma2 >= 0.0) || !sigma2.is_finite() {
        return Err(invalid("noise level must be finite and nonnegative"));
    }
    Ok(())
}

fn parts_from_powers(eigenvalues: &[f64], mu: &[f64], sigma2: f64, t: f64) -> MseParts {
    let n = eigenvalues.len() as f64;
    let (mut var, mut bias) = (0.0, 0.0);
    for (&l, &m) in eigenvalues.iter().zip(mu) {
        let q = libm::pow((1.0 - l).clamp(0.0, 1.0), t + 1.0);
        var += (1.0 - q) * (1.0 - q);
        bias += m * m * q * q;
    }
    let variance = sigma2 * var / n;
    let bias2 = bias / n;
    MseParts { variance, bias2, mse: variance + bias2 }
}

/// Variance, squared bias and MSE of the boosted smoother after `t` steps.
pub fn theoretical_mse(eigenvalues: &[f64], mu: &[f64], sigma2: f64, t: u64) -> Result<MseParts> {
    check_spectrum(eigenvalues, mu, sigma2)?;
    Ok(parts_from_powers(eigenvalues, mu, sigma2, t as f64))
}

/// Whether every eigenvalue is 0 or 1 (within `1e-10`).
pub fn is_projection_spectrum(eigenvalues: &[f64]) -> bool {
    eigenvalues.iter().all(|&l| l.abs() < 1e-10 || (l - 1.0).abs() < 1e-10)
}

/// Smallest `t` with `(1 − λ_min)^{t+1} < tol`, where `λ_min` is the smallest
/// positive eigenvalue; `None` when every eigenvalue is zero.
pub fn plateau_iteration(eigenvalues: &[f64], tol: f64) -> Option<u64> {
    let lmin = eigenvalues.iter().copied().filter(|&l| l > 1e-12).fold(f64::INFINITY, f64::min);
    if !lmin.is_finite() {
        return None;
    }
    if lmin >= 1.0 {
        return Some(0);
    }
    let k = libm::log(tol) / libm::log(1.0 - lmin);
    let mut t = libm::fmax(libm::ceil(k) - 1.0, 0.0) as u64;
    while libm::pow(1.0 - lmin, (t + 1) as f64) >= tol {
        t += 1;
    }
    Some(t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Theorem1Outcome {
    /// `mse(0) > mse(1) > … > mse(⌊m₀⌋ − 1)`.
    Improves { window: u64 },
    /// The strict decrease failed at step `t`.
    NoImprovement { t: u64 },
    /// Projection smoother: the MSE is constant in `t`, nothing to verify.
    Vacuous,
    /// The weak-learner condition fails for eigen-direction `index`.
    PreconditionFailed { index: usize },
}

impl Theorem1Outcome {
    /// Vacuous counts as holding.
    pub fn holds(&self) -> bool {
        matches!(self, Self::Improves { .. } | Self::Vacuous)
    }
}

/// Checks the weak-learner condition `μ_k²/σ̂² > (1−λ_k)^{−m₀} − 1` for every
/// `λ_k ∈ (0, 1)` and, when it holds, the strict MSE decrease over the first
/// `⌊m₀⌋` iterates.
pub fn verify_theorem1(eigenvalues: &[f64], mu: &[f64], sigma2: f64, m0: f64) -> Result<Theorem1Outcome> {
    check_spectrum(eigenvalues, mu, sigma2)?;
    if !(m0 >= 2.0) || !m0.is_finite() {
        return Err(invalid("m0 must be finite and at least 2"));
    }
    if !(sigma2 > 0.0) {
        return Err(invalid("noise level must be positive"));
    }
    if is_projection_spectrum(eigenvalues) {
        return Ok(Theorem1Outcome::Vacuous);
    }
    for (k, (&l, &m)) in eigenvalues.iter().zip(mu).enumerate() {
        // directions with λ = 0 do not move with t
        if l > 1e-12 && l < 1.0 - 1e-12 && m * m / sigma2 <= libm::pow(1.0 - l, -m0) - 1.0 {
            return Ok(Theorem1Outcome::PreconditionFailed { index: k });
        }
    }
    let window = libm::floor(m0) as u64;
    let mut prev = parts_from_powers(eigenvalues, mu, sigma2, 0.0).mse;
    for t in 1..window {
        let cur = parts_from_powers(eigenvalues, mu, sigma2, t as f64).mse;
        if !(cur < prev) {
            return Ok(Theorem1Outcome::NoImprovement { t });
        }
        prev = cur;
    }
    Ok(Theorem1Outcome::Improves { window })
}

/// First `t ≤ max_t` with `mse(t) < σ̂²`.
pub fn finite_iteration_witness(eigenvalues: &[f64], mu: &[f64], sigma2: f64, max_t: u64) -> Result<Option<u64>> {
    check_spectrum(eigenvalues, mu, sigma2)?;
    let n = eigenvalues.len() as f64;
    // q_l = (1−λ_l)^{t+1}, advanced by one multiplication per step
    let base: Vec<f64> = eigenvalues.iter().map(|l| (1.0 - l).clamp(0.0, 1.0)).collect();
    let mut q = base.clone();
    for t in 0..=max_t {
        let mut var = 0.0;
        let mut bias = 0.0;
        for (&ql, &m) in q.iter().zip(mu) {
            var += (1.0 - ql) * (1.0 - ql);
            bias += m * m * ql * ql;
        }
        if sigma2 * var / n + bias / n < sigma2 {
            return Ok(Some(t));
        }
        for (ql, b) in q.iter_mut().zip(&base) {
            *ql *= b;
        }
    }
    Ok(None)
}

/// Fitted vectors `f⁽ᵗ⁾` of the recursion `f⁽⁰⁾ = Ψy`, `f⁽ᵗ⁾ = f⁽ᵗ⁻¹⁾ + Ψ(y − f⁽ᵗ⁻¹⁾)`
/// at each requested `t` (ascending).
pub fn boost_iterates(psi: &DMatrix<f64>, y: &[f64], ts: &[u64]) -> Result<Vec<DVector<f64>>> {
    let n = y.len();
    if psi.nrows() != n || psi.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: psi.nrows() });
    }
    if ts.windows(2).any(|w| w[0] > w[1]) {
        return Err(invalid("iterations must be ascending"));
    }
    let y = DVector::from_column_slice(y);
    let mut f = psi * &y;
    let mut t = 0;
    let mut out = Vec::with_capacity(ts.len());
    for &want in ts {
        while t < want {
            f += psi * (&y - &f);
            t += 1;
        }
        out.push(f.clone());
    }
    Ok(out)
}

/// Hat matrix `X(XᵀX)⁻¹Xᵀ` of least squares on an intercept and `x`.
pub fn linear_projection(x: &[f64]) -> Result<DMatrix<f64>> {
    let n = x.len();
    let design = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { x[i] });
    let gram = design.transpose() * &design;
    let inv = gram.try_inverse().ok_or_else(|| Error::Singular("constant design".into()))?;
    Ok(&design * inv * design.transpose())
}
