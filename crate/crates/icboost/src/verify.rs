//! Numerical checks of the boosting theory: operator identity, Monte Carlo
//! variance / bias, plateau, projection invariance, the finite-iteration
//! improvement window and the existence of an iterate beating `σ̂²`.

use std::fmt;
use std::io::Write;

use icboost_core::boost::{complete_responses, fit_observed, BoostConfig, BoostMode, FeatureLearners};
use icboost_core::rng::{stream, StreamRng};
use icboost_core::sim::phi_default;
use icboost_core::spline::{boost_operator, shrink, smoother_matrix, SmootherMatrix, SplineBasis};
use icboost_core::theory::{
    boost_iterates, finite_iteration_witness, linear_projection, plateau_iteration, theoretical_mse, verify_theorem1,
    Theorem1Outcome,
};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};

use crate::config::VerifyConfig;
use crate::error::AppResult;

pub const OPERATOR_TOL: f64 = 1e-8;
pub const PLATEAU_TOL: f64 = 1e-5;
pub const PROJECTION_TOL: f64 = 1e-10;
/// Monte Carlo agreement is judged in standard errors.
pub const MC_SE: f64 = 3.0;
pub const MC_ITERATIONS: [u64; 4] = [1, 5, 20, 100];
pub const OPERATOR_MAX_T: u64 = 100;
pub const WITNESS_MAX_T: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIPPED",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub check: String,
    pub status: Status,
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl CheckRow {
    fn below(check: impl Into<String>, value: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        let status = if value < tolerance { Status::Pass } else { Status::Fail };
        Self { check: check.into(), status, value, tolerance, detail: detail.into() }
    }

    fn skipped(check: &str, detail: &str) -> Self {
        Self { check: check.into(), status: Status::Skipped, value: f64::NAN, tolerance: f64::NAN, detail: detail.into() }
    }
}

fn gauss(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}

fn design(n: usize) -> Vec<f64> {
    (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect()
}

fn signal(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| phi_default(&[v], [1.0, 0.8, 0.8]).expect("one feature")).collect()
}

fn spline_smoother(x: &[f64], df: f64) -> AppResult<(FeatureLearners, SmootherMatrix)> {
    let learners = FeatureLearners::new(vec![x.to_vec()], df)?;
    let psi = smoother_matrix(&SplineBasis::from_observations(x)?, learners.lambdas()[0])?;
    Ok((learners, psi))
}

fn projection_smoother(x: &[f64]) -> AppResult<SmootherMatrix> {
    let p = linear_projection(x)?;
    let eig = SymmetricEigen::new(p);
    let values = eig.eigenvalues.iter().map(|l| l.clamp(0.0, 1.0)).collect();
    Ok(SmootherMatrix::from_spectrum(eig.eigenvectors, values)?)
}

fn mu_of(psi: &SmootherMatrix, phi: &[f64]) -> Vec<f64> {
    (psi.eigenvectors.transpose() * DVector::from_column_slice(phi)).as_slice().to_vec()
}

/// Boosting-loop iterates against `B⁽ᵗ⁾y` for `t ≤ 100`.
fn operator_check(cfg: &VerifyConfig, scale: f64) -> AppResult<CheckRow> {
    let x = design(cfg.n);
    let mut rng = stream(cfg.seed, &[0xC0DE, 0]);
    let phi = signal(&x);
    let y: Vec<f64> = phi.iter().map(|p| p + cfg.sigma * gauss(&mut rng)).collect();
    let yv = DVector::from_column_slice(&y);
    let mut worst = 0.0_f64;
    let detail;
    if cfg.projection {
        let psi = projection_smoother(&x)?;
        let ts: Vec<u64> = (0..=OPERATOR_MAX_T).collect();
        for (f, &t) in boost_iterates(&psi.matrix, &y, &ts)?.iter().zip(&ts) {
            worst = worst.max((f - boost_operator(&psi, t) * &yv).amax());
        }
        detail = format!("projection smoother, n={}, t<={OPERATOR_MAX_T}", cfg.n);
    } else {
        let (learners, psi) = spline_smoother(&x, cfg.df)?;
        let psi = shrink(&psi, cfg.u)?;
        let boost = BoostConfig {
            mode: BoostMode::Complete,
            shrink_u: cfg.u,
            shrink_initial: true,
            max_iterations: OPERATOR_MAX_T,
            stop_w: 1e3,
            ..BoostConfig::default()
        };
        fit_observed(&learners, &complete_responses(&y), &boost, &mut |t, f| {
            let want = boost_operator(&psi, t) * &yv;
            for (a, b) in f.iter().zip(want.iter()) {
                worst = worst.max((a - b).abs());
            }
        })?;
        detail = format!("boosting loop vs I-(I-uPsi)^(t+1), n={}, df={}, u={}, t<={OPERATOR_MAX_T}", cfg.n, cfg.df, cfg.u);
    }
    Ok(CheckRow::below("operator_identity", worst, OPERATOR_TOL * scale, detail))
}

/// Monte Carlo variance and squared bias of `B⁽ᵗ⁾y` on a fixed design.
fn monte_carlo_checks(cfg: &VerifyConfig, scale: f64) -> AppResult<Vec<CheckRow>> {
    let n = cfg.mc_n;
    let x = design(n);
    let phi = signal(&x);
    let psi = if cfg.projection { projection_smoother(&x)? } else { shrink(&spline_smoother(&x, cfg.mc_df)?.1, cfg.u)? };
    let mu = mu_of(&psi, &phi);
    let sigma2 = cfg.sigma * cfg.sigma;
    let phiv = DVector::from_column_slice(&phi);
    let ops: Vec<DMatrix<f64>> = MC_ITERATIONS.iter().map(|&t| boost_operator(&psi, t)).collect();
    let reps = cfg.mc_reps;
    // fits[k][r] = B⁽ᵗᵏ⁾ y_r
    let mut fits: Vec<Vec<DVector<f64>>> = vec![Vec::with_capacity(reps); ops.len()];
    let mut rng = stream(cfg.seed, &[0xC0DE, 1]);
    for _ in 0..reps {
        let y = DVector::from_fn(n, |i, _| phi[i] + cfg.sigma * gauss(&mut rng));
        for (k, op) in ops.iter().enumerate() {
            fits[k].push(op * &y);
        }
    }
    let nf = n as f64;
    let rf = reps as f64;
    let mut rows = Vec::new();
    for (k, &t) in MC_ITERATIONS.iter().enumerate() {
        let theory = theoretical_mse(&psi.eigenvalues, &mu, sigma2, t)?;
        let mean = fits[k].iter().fold(DVector::zeros(n), |acc, f| acc + f) / rf;
        // per-replicate squared deviation; its mean is the pooled sample variance
        let dev: Vec<f64> = fits[k].iter().map(|f| (f - &mean).norm_squared() / nf * rf / (rf - 1.0)).collect();
        let var_hat = dev.iter().sum::<f64>() / rf;
        let var_se = sd(&dev) / rf.sqrt();
        let gap = &mean - &phiv;
        let bias_hat = gap.norm_squared() / nf - var_hat / rf;
        let lin: Vec<f64> = fits[k].iter().map(|f| 2.0 * gap.dot(&(f - &mean)) / nf).collect();
        let mut cov = DMatrix::zeros(n, n);
        for f in &fits[k] {
            let d = f - &mean;
            cov += &d * d.transpose();
        }
        cov /= rf - 1.0;
        let bias_se = (sd(&lin).powi(2) / rf + 2.0 * cov.norm_squared() / (nf * nf * rf * rf)).sqrt();
        rows.push(mc_row(format!("mc_variance_t{t}"), var_hat, theory.variance, var_se, scale, reps));
        rows.push(mc_row(format!("mc_bias2_t{t}"), bias_hat, theory.bias2, bias_se, scale, reps));
    }
    Ok(rows)
}

fn mc_row(check: String, estimate: f64, theory: f64, se: f64, scale: f64, reps: usize) -> CheckRow {
    let tol = MC_SE * se * scale;
    let mut row = CheckRow::below(check, (estimate - theory).abs(), tol, "");
    row.detail = format!("empirical {estimate:.6e} vs closed form {theory:.6e}, se {se:.3e}, {reps} replicates");
    row
}

fn sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Plateau at `σ̂²` and monotone variance / bias over a log grid of `t`.
fn plateau_checks(cfg: &VerifyConfig, scale: f64) -> AppResult<Vec<CheckRow>> {
    if cfg.projection {
        return Ok(vec![
            CheckRow::skipped("plateau", "projection smoother: the MSE is constant in t"),
            CheckRow::skipped("variance_bias_monotone", "projection smoother: the MSE is constant in t"),
        ]);
    }
    let x = design(cfg.n);
    let psi = shrink(&spline_smoother(&x, cfg.df)?.1, cfg.u)?;
    let mu = mu_of(&psi, &signal(&x));
    let sigma2 = cfg.sigma * cfg.sigma;
    let lmin = psi.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let t_star = plateau_iteration(&psi.eigenvalues, 1e-6).unwrap_or(0);
    let at = theoretical_mse(&psi.eigenvalues, &mu, sigma2, t_star)?;
    let plateau = CheckRow::below(
        "plateau",
        (at.mse - sigma2).abs() / sigma2,
        PLATEAU_TOL * scale,
        format!("relative |mse(t) - sigma^2| at t={t_star}, smallest eigenvalue {lmin:.3e}"),
    );

    let mut grid = vec![0_u64];
    let mut g = 1.0_f64;
    while (g as u64) < t_star {
        grid.push(g as u64);
        g *= 2.0;
    }
    grid.push(t_star.max(1));
    grid.dedup();
    let parts = grid.iter().map(|&t| theoretical_mse(&psi.eigenvalues, &mu, sigma2, t)).collect::<Result<Vec<_>, _>>()?;
    let mut violation = 0.0_f64;
    for w in parts.windows(2) {
        violation = violation.max(w[1].bias2 - w[0].bias2).max(w[0].variance - w[1].variance);
    }
    let strict = parts[parts.len() - 1].bias2 < parts[0].bias2 && parts[parts.len() - 1].variance > parts[0].variance;
    let mut monotone = CheckRow::below(
        "variance_bias_monotone",
        violation,
        f64::MIN_POSITIVE * scale,
        format!("largest increase of bias^2 or decrease of var over {} log-spaced t up to {t_star}", grid.len()),
    );
    if !strict {
        monotone.status = Status::Fail;
    }
    Ok(vec![plateau, monotone])
}

/// With a least-squares projection every iterate equals the first.
fn projection_check(cfg: &VerifyConfig, scale: f64) -> AppResult<CheckRow> {
    let x = design(cfg.n);
    let mut rng = stream(cfg.seed, &[0xC0DE, 2]);
    let y: Vec<f64> = signal(&x).iter().map(|p| p + cfg.sigma * gauss(&mut rng)).collect();
    let fits = boost_iterates(&linear_projection(&x)?, &y, &[0, 1, 10, 100])?;
    let worst = fits[1..].iter().map(|f| (f - &fits[0]).amax()).fold(0.0, f64::max);
    Ok(CheckRow::below("projection_invariance", worst, PROJECTION_TOL * scale, "fitted vectors at t = 0, 1, 10, 100"))
}

/// Constructed spectrum meeting the weak-learner condition with `m₀ = 4`.
pub fn theorem1_spectrum() -> (Vec<f64>, Vec<f64>, f64, f64) {
    let m0 = 4.0;
    let sigma2 = 1.0;
    let eig = vec![1.0, 1.0, 0.6, 0.4, 0.25, 0.1, 0.0];
    let mu = eig
        .iter()
        .map(|&l: &f64| if l > 0.0 && l < 1.0 { (1.5 * ((1.0 - l).powf(-m0) - 1.0) * sigma2).sqrt() } else { 0.7 })
        .collect();
    (eig, mu, sigma2, m0)
}

fn theorem1_check() -> AppResult<CheckRow> {
    let (eig, mu, sigma2, m0) = theorem1_spectrum();
    let outcome = verify_theorem1(&eig, &mu, sigma2, m0)?;
    let (status, detail) = match outcome {
        Theorem1Outcome::Improves { window } => (Status::Pass, format!("mse strictly decreasing for t = 0..{}", window - 1)),
        Theorem1Outcome::NoImprovement { t } => (Status::Fail, format!("mse did not decrease at t={t}")),
        Theorem1Outcome::Vacuous => (Status::Fail, "spectrum unexpectedly a projection".into()),
        Theorem1Outcome::PreconditionFailed { index } => (Status::Fail, format!("weak-learner condition fails at eigen-direction {index}")),
    };
    Ok(CheckRow { check: "theorem1_window".into(), status, value: m0, tolerance: f64::NAN, detail })
}

fn witness_check(cfg: &VerifyConfig) -> AppResult<CheckRow> {
    if cfg.projection {
        return Ok(CheckRow::skipped("finite_iteration_witness", "projection smoother: mse(t) = mse(0) for every t"));
    }
    let x = design(cfg.n);
    let psi = shrink(&spline_smoother(&x, cfg.df)?.1, cfg.u)?;
    let mu = mu_of(&psi, &signal(&x));
    let sigma2 = cfg.sigma * cfg.sigma;
    Ok(match finite_iteration_witness(&psi.eigenvalues, &mu, sigma2, WITNESS_MAX_T)? {
        Some(t) => CheckRow {
            check: "finite_iteration_witness".into(),
            status: Status::Pass,
            value: t as f64,
            tolerance: WITNESS_MAX_T as f64,
            detail: format!("mse({t}) < sigma^2"),
        },
        None => CheckRow {
            check: "finite_iteration_witness".into(),
            status: Status::Fail,
            value: f64::NAN,
            tolerance: WITNESS_MAX_T as f64,
            detail: format!("no t <= {WITNESS_MAX_T} with mse(t) < sigma^2"),
        },
    })
}

/// Runs every check; the report always has the same rows in the same order.
pub fn run_theory_checks(cfg: &VerifyConfig) -> AppResult<Vec<CheckRow>> {
    let scale = cfg.tolerance_scale;
    let mut rows = vec![operator_check(cfg, scale)?];
    rows.extend(monte_carlo_checks(cfg, scale)?);
    rows.extend(plateau_checks(cfg, scale)?);
    rows.push(projection_check(cfg, scale)?);
    rows.push(theorem1_check()?);
    rows.push(witness_check(cfg)?);
    Ok(rows)
}

fn num(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        v.to_string()
    }
}

pub fn write_report<W: Write>(sink: W, rows: &[CheckRow]) -> AppResult<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["check", "status", "value", "tolerance", "detail"])?;
    for r in rows {
        w.write_record([r.check.clone(), r.status.to_string(), num(r.value), num(r.tolerance), r.detail.clone()])?;
    }
    w.flush()?;
    Ok(())
}
