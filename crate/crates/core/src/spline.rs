//! Natural cubic smoothing splines as linear smoothers.
//!
//! Splines are parameterised by their values at the distinct knots, so the
//! design matrix `N` is the observation-to-knot incidence matrix `E` and the
//! roughness penalty `Ω` is the classical `K = Q R⁻¹ Qᵀ` (Green & Silverman),
//! which equals `∫ N_i'' N_l''` for the cardinal natural-spline basis. With
//! knot multiplicities `W = EᵀE` the smoother is
//!
//! ```text
//! Ψ(λ) = E (W + λK)⁻¹ Eᵀ.
//! ```
//!
//! The spectrum of `W^{-1/2} K W^{-1/2}` is computed once per basis with the
//! two-dimensional null space (constants and linear functions) split off
//! analytically, so `Trace Ψ(λ)`, `Ψ(λ)` and the boosting operator are all
//! closed-form in `λ`.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen, QR};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone)]
pub struct SplineBasis {
    knots: Vec<f64>,
    /// Knot index of every observation.
    obs_knot: Vec<usize>,
    /// Multiplicity of every knot.
    weights: Vec<f64>,
    penalty: DMatrix<f64>,
    /// Orthonormal basis of the penalty null space in the `W^{1/2}` metric (k×2).
    null_vecs: DMatrix<f64>,
    /// Orthonormal eigenvectors for the positive penalty eigenvalues (k×(k−2)).
    range_vecs: DMatrix<f64>,
    /// Eigenvalues of `W^{-1/2} K W^{-1/2}` on its range, ascending.
    penalty_eigs: Vec<f64>,
}

/// Natural cubic spline basis on strictly increasing, distinct knots.
pub fn build_basis(x: &[f64]) -> Result<SplineBasis> {
    if x.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid("knots must be strictly increasing and distinct; deduplicate or jitter them"));
    }
    SplineBasis::from_observations(x)
}

impl SplineBasis {
    /// Basis on the distinct values of `x` (any order, ties allowed). Tied
    /// observations share a knot and enter `NᵀN` with their multiplicity.
    pub fn from_observations(x: &[f64]) -> Result<Self> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(invalid("feature values must be finite"));
        }
        let mut order: Vec<usize> = (0..x.len()).collect();
        order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
        let mut knots: Vec<f64> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        let mut obs_knot = vec![0usize; x.len()];
        for &i in &order {
            if knots.last() != Some(&x[i]) {
                knots.push(x[i]);
                weights.push(0.0);
            }
            *weights.last_mut().unwrap() += 1.0;
            obs_knot[i] = knots.len() - 1;
        }
        let k = knots.len();
        if k < 2 {
            return Err(invalid("a spline basis needs at least two distinct knots"));
        }

        let (q, r) = second_difference_operators(&knots);
        let penalty = if k > 2 {
            let chol = Cholesky::new(r.clone()).ok_or_else(|| Error::Singular("roughness matrix R".into()))?;
            let rinv_qt = chol.solve(&q.transpose());
            let mut kmat = &q * rinv_qt;
            symmetrize(&mut kmat);
            kmat
        } else {
            DMatrix::zeros(k, k)
        };

        let sqrt_w: Vec<f64> = weights.iter().map(|w| libm::sqrt(*w)).collect();
        let null_vecs = null_space_basis(&knots, &sqrt_w);
        let (range_vecs, penalty_eigs) = if k > 2 {
            // A = W^{-1/2} Q = H T  ⇒  W^{-1/2} K W^{-1/2} = H (T R⁻¹ Tᵀ) Hᵀ.
            let mut a = q.clone();
            for (i, mut row) in a.row_iter_mut().enumerate() {
                row /= sqrt_w[i];
            }
            let qr = QR::new(a);
            let h = qr.q();
            let t = qr.r();
            let chol = Cholesky::new(r).ok_or_else(|| Error::Singular("roughness matrix R".into()))?;
            let mut g = &t * chol.solve(&t.transpose());
            symmetrize(&mut g);
            let eig = SymmetricEigen::new(g);
            let mut idx: Vec<usize> = (0..k - 2).collect();
            idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            let mut v = DMatrix::zeros(k - 2, k - 2);
            let mut eigs = Vec::with_capacity(k - 2);
            for (c, &j) in idx.iter().enumerate() {
                v.set_column(c, &eig.eigenvectors.column(j));
                eigs.push(eig.eigenvalues[j].max(0.0));
            }
            (h * v, eigs)
        } else {
            (DMatrix::zeros(k, 0), Vec::new())
        };

        Ok(Self { knots, obs_knot, weights, penalty, null_vecs, range_vecs, penalty_eigs })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn n_obs(&self) -> usize {
        self.obs_knot.len()
    }

    pub fn n_knots(&self) -> usize {
        self.knots.len()
    }

    pub fn knot_of(&self) -> &[usize] {
        &self.obs_knot
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `N`, with entry `(i, l) = N_l(x_i)`.
    pub fn basis_matrix(&self) -> DMatrix<f64> {
        let mut n = DMatrix::zeros(self.n_obs(), self.n_knots());
        for (i, &l) in self.obs_knot.iter().enumerate() {
            n[(i, l)] = 1.0;
        }
        n
    }

    /// `Ω`, with entry `(i, l) = ∫ N_i'' N_l''`.
    pub fn penalty_matrix(&self) -> &DMatrix<f64> {
        &self.penalty
    }

    /// `Trace Ψ(λ)`.
    pub fn trace(&self, lambda: f64) -> f64 {
        let null = self.null_vecs.ncols() as f64;
        null + self.penalty_eigs.iter().map(|d| 1.0 / (1.0 + lambda * d)).sum::<f64>()
    }

    /// Shrinkage factors of `Ψ(λ)` on the knot-space eigenvectors
    /// `[null_vecs, range_vecs]`.
    fn knot_space_factors(&self, lambda: f64) -> Vec<f64> {
        let mut s = vec![1.0; self.null_vecs.ncols()];
        s.extend(self.penalty_eigs.iter().map(|d| 1.0 / (1.0 + lambda * d)));
        s
    }

    /// Orthonormal knot-space eigenvectors `[null_vecs, range_vecs]` (k×k).
    fn knot_space_vectors(&self) -> DMatrix<f64> {
        let k = self.n_knots();
        let mut u = DMatrix::zeros(k, k);
        let nn = self.null_vecs.ncols();
        u.columns_mut(0, nn).copy_from(&self.null_vecs);
        u.columns_mut(nn, k - nn).copy_from(&self.range_vecs);
        u
    }

    /// The `k × n` map from responses to fitted knot values,
    /// `(W + λK)⁻¹ Eᵀ = W^{-1/2} U diag(s) Uᵀ W^{-1/2} Eᵀ`.
    fn coefficient_map(&self, lambda: f64) -> DMatrix<f64> {
        let k = self.n_knots();
        let u = self.knot_space_vectors();
        let s = self.knot_space_factors(lambda);
        let mut us = u.clone();
        for (j, mut col) in us.column_iter_mut().enumerate() {
            col *= s[j];
        }
        let mut inner = us * u.transpose();
        for i in 0..k {
            for l in 0..k {
                inner[(i, l)] /= libm::sqrt(self.weights[i] * self.weights[l]);
            }
        }
        let mut map = DMatrix::zeros(k, self.n_obs());
        for (i, &l) in self.obs_knot.iter().enumerate() {
            map.set_column(i, &inner.column(l));
        }
        map
    }
}

/// Green & Silverman's `Q` (k×(k−2)) and `R` ((k−2)×(k−2)).
fn second_difference_operators(knots: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let k = knots.len();
    let m = k.saturating_sub(2);
    let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
    let mut q = DMatrix::zeros(k, m);
    let mut r = DMatrix::zeros(m, m);
    for j in 0..m {
        // column j corresponds to interior knot j + 1
        q[(j, j)] = 1.0 / h[j];
        q[(j + 1, j)] = -1.0 / h[j] - 1.0 / h[j + 1];
        q[(j + 2, j)] = 1.0 / h[j + 1];
        r[(j, j)] = (h[j] + h[j + 1]) / 3.0;
        if j + 1 < m {
            r[(j, j + 1)] = h[j + 1] / 6.0;
            r[(j + 1, j)] = h[j + 1] / 6.0;
        }
    }
    (q, r)
}

/// Orthonormal basis of span{W^{1/2}·1, W^{1/2}·x}.
fn null_space_basis(knots: &[f64], sqrt_w: &[f64]) -> DMatrix<f64> {
    let k = knots.len();
    let total: f64 = sqrt_w.iter().map(|s| s * s).sum();
    let mean = knots.iter().zip(sqrt_w).map(|(x, s)| x * s * s).sum::<f64>() / total;
    let mut a = DVector::from_iterator(k, sqrt_w.iter().copied());
    let mut b = DVector::from_iterator(k, knots.iter().zip(sqrt_w).map(|(x, s)| (x - mean) * s));
    a /= a.norm();
    let proj = a.dot(&b);
    b -= &a * proj;
    b /= b.norm();
    let mut z = DMatrix::zeros(k, 2);
    z.set_column(0, &a);
    z.set_column(1, &b);
    z
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// An `n × n` symmetric linear smoother with its eigendecomposition.
#[derive(Debug, Clone)]
pub struct SmootherMatrix {
    pub matrix: DMatrix<f64>,
    /// Sorted in decreasing order.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal; column `l` pairs with `eigenvalues[l]`.
    pub eigenvectors: DMatrix<f64>,
    pub lambda: f64,
    pub shrink_factor: f64,
}

impl SmootherMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Builds a smoother from an orthonormal eigenbasis and eigenvalues.
    pub fn from_spectrum(eigenvectors: DMatrix<f64>, eigenvalues: Vec<f64>) -> Result<Self> {
        let n = eigenvectors.nrows();
        if eigenvectors.ncols() != n || eigenvalues.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: eigenvalues.len() });
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eigenvalues[b].total_cmp(&eigenvalues[a]));
        let mut q = DMatrix::zeros(n, n);
        let mut lam = Vec::with_capacity(n);
        for (c, &j) in order.iter().enumerate() {
            q.set_column(c, &eigenvectors.column(j));
            lam.push(eigenvalues[j]);
        }
        let matrix = spectral_product(&q, &lam);
        Ok(Self { matrix, eigenvalues: lam, eigenvectors: q, lambda: 0.0, shrink_factor: 1.0 })
    }
}

fn spectral_product(q: &DMatrix<f64>, factors: &[f64]) -> DMatrix<f64> {
    let mut qs = q.clone();
    for (j, mut col) in qs.column_iter_mut().enumerate() {
        col *= factors[j];
    }
    let mut m = qs * q.transpose();
    symmetrize(&mut m);
    m
}

/// `Ψ = N(NᵀN + λΩ)⁻¹Nᵀ` with its full eigendecomposition.
pub fn smoother_matrix(basis: &SplineBasis, lambda: f64) -> Result<SmootherMatrix> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(invalid("lambda must be finite and nonnegative"));
    }
    let n = basis.n_obs();
    let k = basis.n_knots();
    let u = basis.knot_space_vectors();
    let s = basis.knot_space_factors(lambda);

    // Observation-space eigenvectors: E W^{-1/2} U for the knot directions,
    // Helmert contrasts within tied groups for the zero eigenvalues.
    let mut q = DMatrix::zeros(n, n);
    for (i, &l) in basis.obs_knot.iter().enumerate() {
        let scale = 1.0 / libm::sqrt(basis.weights[l]);
        for j in 0..k {
            q[(i, j)] = u[(l, j)] * scale;
        }
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in basis.obs_knot.iter().enumerate() {
        groups[l].push(i);
    }
    let mut col = k;
    for members in groups.iter().filter(|g| g.len() > 1) {
        for j in 1..members.len() {
            let norm = libm::sqrt((j * (j + 1)) as f64);
            for &i in &members[..j] {
                q[(i, col)] = 1.0 / norm;
            }
            q[(members[j], col)] = -(j as f64) / norm;
            col += 1;
        }
    }
    let mut eigenvalues = s;
    eigenvalues.resize(n, 0.0);
    for e in eigenvalues.iter_mut() {
        *e = e.clamp(0.0, 1.0);
    }
    let mut psi = SmootherMatrix::from_spectrum(q, eigenvalues)?;
    psi.lambda = lambda;
    Ok(psi)
}

/// Penalty `λ ≥ 0` with `|Trace Ψ(λ) − df| < 1e-6`, by bisection on `log λ`.
pub fn solve_lambda_for_df(basis: &SplineBasis, df: f64) -> Result<f64> {
    let n = basis.n_obs() as f64;
    let k = basis.n_knots() as f64;
    if !(df > 2.0 && df <= n) {
        return Err(invalid("df must lie in (2, n]"));
    }
    if df > k + 1e-12 {
        return Err(invalid("df exceeds the number of distinct knots"));
    }
    if df >= k - 1e-12 {
        return Ok(0.0);
    }
    let mut lo = 1e-12;
    let mut hi = 1e12;
    while basis.trace(lo) < df {
        lo *= 1e-3;
        if lo < 1e-300 {
            return Ok(0.0);
        }
    }
    while basis.trace(hi) > df {
        hi *= 1e3;
        if hi > 1e300 {
            return Err(invalid("df too close to 2 to be reached"));
        }
    }
    let mut mid = libm::sqrt(lo * hi);
    for _ in 0..400 {
        mid = libm::sqrt(lo * hi);
        let tr = basis.trace(mid);
        if libm::fabs(tr - df) < 1e-10 {
            break;
        }
        if tr > df {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo < 1.0 + 1e-15 {
            break;
        }
    }
    Ok(mid)
}

/// `uΨ`: eigenvalues scaled by `u`, eigenvectors unchanged.
pub fn shrink(psi: &SmootherMatrix, u: f64) -> Result<SmootherMatrix> {
    if !(u > 0.0 && u <= 1.0) {
        return Err(invalid("shrink factor must lie in (0, 1]"));
    }
    Ok(SmootherMatrix {
        matrix: &psi.matrix * u,
        eigenvalues: psi.eigenvalues.iter().map(|l| l * u).collect(),
        eigenvectors: psi.eigenvectors.clone(),
        lambda: psi.lambda,
        shrink_factor: psi.shrink_factor * u,
    })
}

/// `(1 − λ)^{t+1}`.
pub(crate) fn residual_factor(lambda: f64, t: u64) -> f64 {
    libm::pow(1.0 - lambda, (t + 1) as f64)
}

/// `B^{(t)} = I − (I − Ψ)^{t+1} = Q diag{1 − (1 − λ_l)^{t+1}} Qᵀ`.
pub fn boost_operator(psi: &SmootherMatrix, t: u64) -> DMatrix<f64> {
    let factors: Vec<f64> = psi.eigenvalues.iter().map(|&l| 1.0 - residual_factor(l, t)).collect();
    spectral_product(&psi.eigenvectors, &factors)
}

pub fn apply_smoother(psi: &SmootherMatrix, residual: &[f64]) -> Result<Vec<f64>> {
    if residual.len() != psi.dim() {
        return Err(Error::DimensionMismatch { expected: psi.dim(), found: residual.len() });
    }
    let r = DVector::from_column_slice(residual);
    Ok((&psi.matrix * r).as_slice().to_vec())
}

/// A natural cubic spline given by its values at the knots.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    /// Second derivatives at the knots; zero at both ends.
    curvature: Vec<f64>,
}

impl NaturalSpline {
    pub fn new(knots: &[f64], values: &[f64]) -> Result<Self> {
        let k = knots.len();
        if values.len() != k {
            return Err(Error::DimensionMismatch { expected: k, found: values.len() });
        }
        if k < 2 || knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("natural spline needs at least two strictly increasing knots"));
        }
        let mut curvature = vec![0.0; k];
        if k > 2 {
            // R γ = Qᵀ g, R tridiagonal: Thomas algorithm.
            let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
            let m = k - 2;
            let mut diag: Vec<f64> = (0..m).map(|j| (h[j] + h[j + 1]) / 3.0).collect();
            let off: Vec<f64> = (0..m.saturating_sub(1)).map(|j| h[j + 1] / 6.0).collect();
            let mut rhs: Vec<f64> = (0..m)
                .map(|j| (values[j + 2] - values[j + 1]) / h[j + 1] - (values[j + 1] - values[j]) / h[j])
                .collect();
            for j in 1..m {
                let w = off[j - 1] / diag[j - 1];
                diag[j] -= w * off[j - 1];
                rhs[j] -= w * rhs[j - 1];
            }
            let mut gamma = vec![0.0; m];
            gamma[m - 1] = rhs[m - 1] / diag[m - 1];
            for j in (0..m - 1).rev() {
                gamma[j] = (rhs[j] - off[j] * gamma[j + 1]) / diag[j];
            }
            curvature[1..k - 1].copy_from_slice(&gamma);
        }
        Ok(Self { knots: knots.to_vec(), values: values.to_vec(), curvature })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = self.knots.len();
        let (t, g, c) = (&self.knots, &self.values, &self.curvature);
        if x <= t[0] {
            let h = t[1] - t[0];
            let slope = (g[1] - g[0]) / h - h * c[1] / 6.0;
            return g[0] + slope * (x - t[0]);
        }
        if x >= t[k - 1] {
            let h = t[k - 1] - t[k - 2];
            let slope = (g[k - 1] - g[k - 2]) / h + h * c[k - 2] / 6.0;
            return g[k - 1] + slope * (x - t[k - 1]);
        }
        let i = t.partition_point(|&v| v <= x) - 1;
        let h = t[i + 1] - t[i];
        let a = x - t[i];
        let b = t[i + 1] - x;
        (a * g[i + 1] + b * g[i]) / h - a * b / 6.0 * ((1.0 + a / h) * c[i + 1] + (1.0 + b / h) * c[i])
    }
}

/// Value at `x_new` of the spline with knot values `coefficients`; linear
/// beyond the boundary knots.
pub fn evaluate_spline(basis: &SplineBasis, coefficients: &[f64], x_new: f64) -> Result<f64> {
    Ok(NaturalSpline::new(&basis.knots, coefficients)?.eval(x_new))
}

/// A smoothing-spline learner on one feature with its penalty fixed, used as
/// the boosting base learner.
#[derive(Debug, Clone)]
pub struct SplineSmoother {
    basis: SplineBasis,
    lambda: f64,
    coef_map: DMatrix<f64>,
}

impl SplineSmoother {
    pub fn new(basis: SplineBasis, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(invalid("lambda must be finite and nonnegative"));
        }
        let coef_map = basis.coefficient_map(lambda);
        Ok(Self { basis, lambda, coef_map })
    }

    /// Learner on feature values `x` with penalty chosen so `Trace Ψ = df`.
    pub fn with_df(x: &[f64], df: f64) -> Result<Self> {
        let basis = SplineBasis::from_observations(x)?;
        let lambda = solve_lambda_for_df(&basis, df)?;
        Self::new(basis, lambda)
    }

    pub fn basis(&self) -> &SplineBasis {
        &self.basis
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn n_obs(&self) -> usize {
        self.basis.n_obs()
    }

    /// Knot values of the penalized fit to `response`.
    pub fn coefficients(&self, response: &[f64]) -> Vec<f64> {
        let r = DVector::from_column_slice(response);
        (&self.coef_map * r).as_slice().to_vec()
    }

    /// Fitted values at the training observations for knot values `coefs`.
    pub fn fitted(&self, coefs: &[f64]) -> Vec<f64> {
        self.basis.obs_knot.iter().map(|&l| coefs[l]).collect()
    }

    /// `Ψ response`.
    pub fn smooth(&self, response: &[f64]) -> Vec<f64> {
        self.fitted(&self.coefficients(response))
    }

    pub fn smoother_matrix(&self) -> Result<SmootherMatrix> {
        smoother_matrix(&self.basis, self.lambda)
    }
}

/// `O(n)` smoothing-spline fit by the Reinsch algorithm: with knot means `ȳ`,
/// `(R + λQᵀW⁻¹Q)γ = Qᵀȳ` is pentadiagonal and `g = ȳ − λW⁻¹Qγ`.
#[derive(Debug, Clone)]
pub struct BandedSmoother {
    knots: Vec<f64>,
    obs_knot: Vec<usize>,
    weights: Vec<f64>,
    lambda: f64,
    /// Knot spacings `h_j = t_{j+1} − t_j`.
    h: Vec<f64>,
    /// `LDLᵀ` factor of the pentadiagonal system: unit subdiagonals and `D`.
    l1: Vec<f64>,
    l2: Vec<f64>,
    d: Vec<f64>,
}

/// Scratch space and output of one [`BandedSmoother`] fit.
#[derive(Debug, Clone)]
pub struct BandedFit {
    /// Fitted values at the knots.
    pub values: Vec<f64>,
    /// Second derivatives at the knots, zero at both ends.
    pub curvature: Vec<f64>,
    rhs: Vec<f64>,
}

impl BandedSmoother {
    pub fn new(basis: &SplineBasis, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(invalid("lambda must be finite and nonnegative"));
        }
        let knots = basis.knots.clone();
        let k = knots.len();
        let m = k - 2;
        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        let w = &basis.weights;
        // column j of Q touches knots j, j+1, j+2
        let qcol = |j: usize| [1.0 / h[j], -1.0 / h[j] - 1.0 / h[j + 1], 1.0 / h[j + 1]];
        let mut a0 = vec![0.0; m];
        let mut a1 = vec![0.0; m];
        let mut a2 = vec![0.0; m];
        for j in 0..m {
            let cj = qcol(j);
            a0[j] = (h[j] + h[j + 1]) / 3.0 + lambda * (0..3).map(|r| cj[r] * cj[r] / w[j + r]).sum::<f64>();
            if j + 1 < m {
                let cn = qcol(j + 1);
                // shared knots j+1, j+2
                a1[j] = h[j + 1] / 6.0 + lambda * (cj[1] * cn[0] / w[j + 1] + cj[2] * cn[1] / w[j + 2]);
            }
            if j + 2 < m {
                let cn = qcol(j + 2);
                a2[j] = lambda * cj[2] * cn[0] / w[j + 2];
            }
        }
        let mut l1 = vec![0.0; m];
        let mut l2 = vec![0.0; m];
        let mut d = vec![0.0; m];
        for i in 0..m {
            if i >= 2 {
                l2[i] = a2[i - 2] / d[i - 2];
            }
            if i >= 1 {
                let corr = if i >= 2 { l2[i] * l1[i - 1] * d[i - 2] } else { 0.0 };
                l1[i] = (a1[i - 1] - corr) / d[i - 1];
            }
            let mut di = a0[i];
            if i >= 1 {
                di -= l1[i] * l1[i] * d[i - 1];
            }
            if i >= 2 {
                di -= l2[i] * l2[i] * d[i - 2];
            }
            if !(di > 0.0) {
                return Err(Error::Singular("banded spline system".into()));
            }
            d[i] = di;
        }
        Ok(Self { knots, obs_knot: basis.obs_knot.clone(), weights: w.clone(), lambda, h, l1, l2, d })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn knot_of(&self) -> &[usize] {
        &self.obs_knot
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn workspace(&self) -> BandedFit {
        let k = self.knots.len();
        BandedFit { values: vec![0.0; k], curvature: vec![0.0; k], rhs: vec![0.0; k.saturating_sub(2)] }
    }

    /// Fits `response` (one value per observation) into `out`.
    pub fn fit_into(&self, response: &[f64], out: &mut BandedFit) {
        let k = self.knots.len();
        let g = &mut out.values;
        g.iter_mut().for_each(|v| *v = 0.0);
        for (&l, &r) in self.obs_knot.iter().zip(response) {
            g[l] += r;
        }
        for (v, w) in g.iter_mut().zip(&self.weights) {
            *v /= w;
        }
        let m = k - 2;
        let h = &self.h;
        let z = &mut out.rhs;
        for j in 0..m {
            z[j] = (g[j + 2] - g[j + 1]) / h[j + 1] - (g[j + 1] - g[j]) / h[j];
        }
        for i in 0..m {
            let mut v = z[i];
            if i >= 1 {
                v -= self.l1[i] * z[i - 1];
            }
            if i >= 2 {
                v -= self.l2[i] * z[i - 2];
            }
            z[i] = v;
        }
        for i in 0..m {
            z[i] /= self.d[i];
        }
        for i in (0..m).rev() {
            let mut v = z[i];
            if i + 1 < m {
                v -= self.l1[i + 1] * z[i + 1];
            }
            if i + 2 < m {
                v -= self.l2[i + 2] * z[i + 2];
            }
            z[i] = v;
        }
        let c = &mut out.curvature;
        c[0] = 0.0;
        c[k - 1] = 0.0;
        c[1..k - 1].copy_from_slice(z);
        if self.lambda > 0.0 {
            // g −= λ W⁻¹ Q γ
            for j in 0..m {
                let gam = z[j] * self.lambda;
                g[j] -= gam / h[j] / self.weights[j];
                g[j + 1] -= gam * (-1.0 / h[j] - 1.0 / h[j + 1]) / self.weights[j + 1];
                g[j + 2] -= gam / h[j + 1] / self.weights[j + 2];
            }
        }
    }
}

/// Precomputed weights giving a natural spline's value at one point from its
/// knot values and curvatures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplineStencil {
    idx: [usize; 2],
    value_w: [f64; 2],
    curv_w: [f64; 2],
}

impl SplineStencil {
    pub fn new(knots: &[f64], x: f64) -> Self {
        let k = knots.len();
        let t = knots;
        if x <= t[0] {
            let h = t[1] - t[0];
            let d = x - t[0];
            return Self { idx: [0, 1], value_w: [1.0 - d / h, d / h], curv_w: [0.0, -h * d / 6.0] };
        }
        if x >= t[k - 1] {
            let h = t[k - 1] - t[k - 2];
            let d = x - t[k - 1];
            return Self { idx: [k - 2, k - 1], value_w: [-d / h, 1.0 + d / h], curv_w: [h * d / 6.0, 0.0] };
        }
        let i = t.partition_point(|&v| v <= x) - 1;
        let h = t[i + 1] - t[i];
        let a = x - t[i];
        let b = t[i + 1] - x;
        Self {
            idx: [i, i + 1],
            value_w: [b / h, a / h],
            curv_w: [-a * b / 6.0 * (1.0 + b / h), -a * b / 6.0 * (1.0 + a / h)],
        }
    }

    pub fn eval(&self, values: &[f64], curvature: &[f64]) -> f64 {
        let [i, j] = self.idx;
        self.value_w[0] * values[i] + self.value_w[1] * values[j] + self.curv_w[0] * curvature[i] + self.curv_w[1] * curvature[j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
    }

    /// Direct `N(NᵀN + λΩ)⁻¹Nᵀ` by dense inversion.
    fn direct_smoother(basis: &SplineBasis, lambda: f64) -> DMatrix<f64> {
        let n = basis.basis_matrix();
        let a = n.transpose() * &n + basis.penalty_matrix() * lambda;
        &n * a.try_inverse().unwrap() * n.transpose()
    }

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    #[test]
    fn two_knots_have_zero_penalty() {
        let b = build_basis(&[0.0, 1.0]).unwrap();
        assert!(max_abs(b.penalty_matrix()) == 0.0);
    }

    #[test]
    fn three_knots_penalty_rank_one() {
        let b = build_basis(&[0.0, 0.5, 1.0]).unwrap();
        let eig = SymmetricEigen::new(b.penalty_matrix().clone());
        let nonzero = eig.eigenvalues.iter().filter(|v| v.abs() > 1e-9).count();
        assert_eq!(nonzero, 1);
    }

    #[test]
    fn penalty_is_psd_with_linear_null_space() {
        let x = uniform(20);
        let b = build_basis(&x).unwrap();
        let eig = SymmetricEigen::new(b.penalty_matrix().clone());
        let scale = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        assert!(eig.eigenvalues.iter().all(|&v| v > -1e-10 * scale));
        let ones = DVector::from_element(20, 1.0);
        let xs = DVector::from_column_slice(&x);
        assert!((b.penalty_matrix() * ones).amax() < 1e-8 * scale);
        assert!((b.penalty_matrix() * xs).amax() < 1e-8 * scale);
    }

    #[test]
    fn penalty_matches_integrated_curvature() {
        // gᵀKg = ∫ g''² for the interpolating natural spline, checked by
        // Simpson quadrature of the piecewise-linear second derivative.
        let x = [0.0, 0.3, 0.45, 0.8, 1.1, 1.7];
        let g = [0.2, -0.4, 1.0, 0.3, 0.9, -0.1];
        let b = build_basis(&x).unwrap();
        let gv = DVector::from_column_slice(&g);
        let quad_form = (gv.transpose() * b.penalty_matrix() * &gv)[(0, 0)];
        let s = NaturalSpline::new(&x, &g).unwrap();
        let mut integral = 0.0;
        for w in 0..x.len() - 1 {
            let (c0, c1) = (s.curvature[w], s.curvature[w + 1]);
            let h = x[w + 1] - x[w];
            integral += h * (c0 * c0 + c0 * c1 + c1 * c1) / 3.0;
        }
        assert!((quad_form - integral).abs() < 1e-10 * integral.abs().max(1.0));
    }

    #[test]
    fn spectral_smoother_matches_direct_inverse() {
        let x = [0.05, 0.11, 0.2, 0.33, 0.41, 0.5, 0.62, 0.7, 0.85, 0.97];
        let b = build_basis(&x).unwrap();
        for &lam in &[0.0, 1e-4, 0.01, 1.0] {
            let psi = smoother_matrix(&b, lam).unwrap();
            let direct = direct_smoother(&b, lam);
            assert!(max_abs(&(&psi.matrix - direct)) < 1e-9, "lambda {lam}");
        }
    }

    #[test]
    fn lambda_zero_is_identity() {
        let b = build_basis(&uniform(12)).unwrap();
        let psi = smoother_matrix(&b, 0.0).unwrap();
        assert!(max_abs(&(&psi.matrix - DMatrix::identity(12, 12))) < 1e-10);
    }

    #[test]
    fn preserves_constants_and_lines() {
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin() + i as f64 * 0.05).collect();
        let mut sorted = x.clone();
        sorted.sort_by(f64::total_cmp);
        let b = SplineBasis::from_observations(&x).unwrap();
        for &lam in &[1e-3, 1.0, 1e4] {
            let psi = smoother_matrix(&b, lam).unwrap();
            let one = apply_smoother(&psi, &vec![1.0; 40]).unwrap();
            let lin = apply_smoother(&psi, &x).unwrap();
            for i in 0..40 {
                assert!((one[i] - 1.0).abs() < 1e-8);
                assert!((lin[i] - x[i]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn eigen_structure_for_ten_knots() {
        let b = build_basis(&uniform(10)).unwrap();
        let psi = smoother_matrix(&b, 1.0).unwrap();
        let e = &psi.eigenvalues;
        assert!(e.windows(2).all(|w| w[0] >= w[1]));
        assert!((e[0] - 1.0).abs() < 1e-8 && (e[1] - 1.0).abs() < 1e-8);
        assert!(e[2] < 1.0 - 1e-6);
        assert!(e.iter().all(|&l| (0.0..=1.0 + 1e-8).contains(&l)));
        let qtq = psi.eigenvectors.transpose() * &psi.eigenvectors;
        assert!(max_abs(&(qtq - DMatrix::identity(10, 10))) < 1e-8);
        let sym = &psi.matrix - psi.matrix.transpose();
        assert!(max_abs(&sym) < 1e-12);
    }

    #[test]
    fn ties_are_averaged() {
        let x = [0.0, 0.2, 0.2, 0.5, 0.9, 1.0];
        assert!(build_basis(&x).is_err());
        let b = SplineBasis::from_observations(&x).unwrap();
        assert_eq!(b.n_knots(), 5);
        let psi = smoother_matrix(&b, 0.0).unwrap();
        let fit = apply_smoother(&psi, &[1.0, 2.0, 4.0, 0.0, 5.0, 6.0]).unwrap();
        assert!((fit[1] - 3.0).abs() < 1e-12 && (fit[2] - 3.0).abs() < 1e-12);
        assert!((fit[4] - 5.0).abs() < 1e-12);
        let direct = direct_smoother(&b, 0.3);
        let psi = smoother_matrix(&b, 0.3).unwrap();
        assert!(max_abs(&(&psi.matrix - direct)) < 1e-10);
        let qtq = psi.eigenvectors.transpose() * &psi.eigenvectors;
        assert!(max_abs(&(qtq - DMatrix::identity(6, 6))) < 1e-10);
    }

    #[test]
    fn df_inversion() {
        let b = build_basis(&uniform(400)).unwrap();
        let lam = solve_lambda_for_df(&b, 20.0).unwrap();
        assert!((b.trace(lam) - 20.0).abs() < 1e-6);
        assert_eq!(solve_lambda_for_df(&b, 400.0).unwrap(), 0.0);
        assert!(solve_lambda_for_df(&b, 2.0).is_err());
        assert!(solve_lambda_for_df(&b, 401.0).is_err());
        let mut prev = f64::INFINITY;
        for e in -8..8 {
            let tr = b.trace(10f64.powi(e));
            assert!(tr <= prev);
            prev = tr;
        }
    }

    #[test]
    fn trace_equals_matrix_trace() {
        let b = build_basis(&uniform(30)).unwrap();
        let lam = solve_lambda_for_df(&b, 7.5).unwrap();
        let psi = smoother_matrix(&b, lam).unwrap();
        assert!((psi.matrix.trace() - 7.5).abs() < 1e-6);
    }

    #[test]
    fn shrink_scales_spectrum() {
        let b = build_basis(&uniform(15)).unwrap();
        let psi = smoother_matrix(&b, 0.5).unwrap();
        let same = shrink(&psi, 1.0).unwrap();
        assert_eq!(same.matrix, psi.matrix);
        let small = shrink(&psi, 0.01).unwrap();
        assert!((small.eigenvalues[0] - 0.01).abs() < 1e-12);
        let v: Vec<f64> = (0..15).map(|i| (i as f64).cos()).collect();
        let a = apply_smoother(&small, &v).unwrap();
        let b2 = apply_smoother(&psi, &v).unwrap();
        for i in 0..15 {
            assert!((a[i] - 0.01 * b2[i]).abs() < 1e-14);
        }
        assert!(shrink(&psi, 0.0).is_err());
        assert!(shrink(&psi, 1.5).is_err());
    }

    #[test]
    fn boost_operator_basics() {
        let b = build_basis(&uniform(12)).unwrap();
        let psi = smoother_matrix(&b, 0.1).unwrap();
        assert!(max_abs(&(boost_operator(&psi, 0) - &psi.matrix)) < 1e-12);
        let id = smoother_matrix(&b, 0.0).unwrap();
        for t in [0, 3, 50] {
            assert!(max_abs(&(boost_operator(&id, t) - DMatrix::identity(12, 12))) < 1e-10);
        }
        // projection: eigenvalues in {0, 1}
        let q = psi.eigenvectors.clone();
        let lam: Vec<f64> = (0..12).map(|i| if i < 4 { 1.0 } else { 0.0 }).collect();
        let proj = SmootherMatrix::from_spectrum(q, lam).unwrap();
        for t in [1, 7, 100] {
            assert!(max_abs(&(boost_operator(&proj, t) - &proj.matrix)) < 1e-12);
        }
    }

    #[test]
    fn apply_matches_naive_product() {
        let b = build_basis(&uniform(25)).unwrap();
        let psi = smoother_matrix(&b, 0.02).unwrap();
        let r: Vec<f64> = (0..25).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let fast = apply_smoother(&psi, &r).unwrap();
        for i in 0..25 {
            let naive: f64 = (0..25).map(|j| psi.matrix[(i, j)] * r[j]).sum();
            assert!((fast[i] - naive).abs() < 1e-12);
        }
        assert_eq!(apply_smoother(&psi, &vec![0.0; 25]).unwrap(), vec![0.0; 25]);
        assert!(apply_smoother(&psi, &[1.0]).is_err());
    }

    #[test]
    fn spline_evaluation() {
        let x = uniform(8);
        let b = build_basis(&x).unwrap();
        let y: Vec<f64> = x.iter().map(|v| (3.0 * v).sin()).collect();
        let smoother = SplineSmoother::new(b.clone(), 0.0).unwrap();
        let coefs = smoother.coefficients(&y);
        for (i, xi) in x.iter().enumerate() {
            assert!((evaluate_spline(&b, &coefs, *xi).unwrap() - y[i]).abs() < 1e-8);
        }
        assert_eq!(evaluate_spline(&b, &vec![0.0; 8], 0.37).unwrap(), 0.0);
        // linear beyond the last knot
        let f = |t: f64| evaluate_spline(&b, &coefs, t).unwrap();
        let d2 = f(1.5) - 2.0 * f(2.0) + f(2.5);
        assert!(d2.abs() < 1e-10);
        let d2 = f(-1.0) - 2.0 * f(-0.5) + f(0.0);
        assert!(d2.abs() < 1e-10);
        // continuity of value and slope at the last knot
        let eps = 1e-6;
        assert!((f(1.0 - eps) - f(1.0 + eps)).abs() < 1e-5);
    }

    #[test]
    fn smoother_learner_matches_matrix() {
        let x: Vec<f64> = (0..30).map(|i| ((i * 37) % 30) as f64 / 29.0).collect();
        let learner = SplineSmoother::with_df(&x, 6.0).unwrap();
        let psi = learner.smoother_matrix().unwrap();
        let r: Vec<f64> = (0..30).map(|i| (i as f64 * 0.7).sin()).collect();
        let a = learner.smooth(&r);
        let b = apply_smoother(&psi, &r).unwrap();
        for i in 0..30 {
            assert!((a[i] - b[i]).abs() < 1e-10);
        }
    }
    #[test]
    fn banded_fit_matches_dense() {
        let mut x: Vec<f64> = (0..60).map(|i| ((i * 37) % 60) as f64 / 8.0 + 0.02 * (i as f64).sin()).collect();
        x[5] = x[9]; // a tie
        x[17] = x[9];
        let basis = SplineBasis::from_observations(&x).unwrap();
        let r: Vec<f64> = (0..60).map(|i| (i as f64 * 0.41).cos() + 0.1 * i as f64).collect();
        for lambda in [0.0, 1e-3, 0.7, 50.0] {
            // oracle: solve (W + λK) g = Eᵀ r directly
            let n = basis.basis_matrix();
            let a = n.transpose() * &n + basis.penalty_matrix() * lambda;
            let rhs = n.transpose() * DVector::from_column_slice(&r);
            let coefs: Vec<f64> = a.lu().solve(&rhs).unwrap().as_slice().to_vec();

            let banded = BandedSmoother::new(&basis, lambda).unwrap();
            let mut fit = banded.workspace();
            banded.fit_into(&r, &mut fit);
            for (a, b) in fit.values.iter().zip(&coefs) {
                assert!((a - b).abs() < 1e-9, "λ={lambda}: {a} vs {b}");
            }
            let spline = NaturalSpline::new(basis.knots(), &fit.values).unwrap();
            for xn in [-1.0, 0.0, 1.234, 3.5, 7.49, 9.0] {
                let st = SplineStencil::new(basis.knots(), xn);
                assert!((st.eval(&fit.values, &fit.curvature) - spline.eval(xn)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn banded_two_knots_interpolate_means() {
        let basis = SplineBasis::from_observations(&[0.0, 1.0, 1.0]).unwrap();
        let b = BandedSmoother::new(&basis, 3.0).unwrap();
        let mut fit = b.workspace();
        b.fit_into(&[2.0, 1.0, 3.0], &mut fit);
        assert_eq!(fit.values, vec![2.0, 2.0]);
    }
}
