use icboost_core::boost::{fit, BoostConfig, BoostMode, FeatureLearners};
use icboost_core::cut::{cut_loss, imp_loss, transform_response, GTransform, TransformedResponse};
use icboost_core::icrf::{icrf_fit, IcrfParams};
use icboost_core::rng::stream;
use icboost_core::sim::{gen_aft, SimConfig};
use icboost_core::spline::{apply_smoother, boost_operator, smoother_matrix, solve_lambda_for_df, SplineBasis};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn design(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = stream(seed, &[0]);
    (0..n).map(|_| rng.random::<f64>() * 10.0).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn smoother_spectrum_is_a_shrinking_projection_mix(seed in 0u64..10_000, n in 8usize..30, frac in 0.05f64..0.9) {
        let x = design(seed, n);
        let basis = SplineBasis::from_observations(&x).unwrap();
        let df = 2.0 + frac * (basis.n_knots() as f64 - 2.0);
        let lambda = solve_lambda_for_df(&basis, df).unwrap();
        let psi = smoother_matrix(&basis, lambda).unwrap();
        let m = &psi.matrix;
        prop_assert!((m - m.transpose()).amax() < 1e-12);
        prop_assert!((psi.eigenvalues.iter().sum::<f64>() - df).abs() < 1e-6);
        prop_assert!(psi.eigenvalues.iter().all(|&l| (-1e-10..=1.0 + 1e-10).contains(&l)));
        prop_assert!(psi.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        let ones = psi.eigenvalues.iter().filter(|&&l| (l - 1.0).abs() < 1e-8).count();
        prop_assert_eq!(ones, 2);
        let q = &psi.eigenvectors;
        prop_assert!((q.transpose() * q - DMatrix::identity(n, n)).amax() < 1e-9);
    }

    #[test]
    fn iterated_fits_equal_the_closed_form(seed in 0u64..10_000, u in 0.01f64..1.0, t in 0u64..60) {
        let n = 15;
        let x = design(seed, n);
        let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v.sin() + 0.1 * (i % 3) as f64).collect();
        let basis = SplineBasis::from_observations(&x).unwrap();
        let psi = smoother_matrix(&basis, solve_lambda_for_df(&basis, 5.0).unwrap()).unwrap();
        let psi = icboost_core::spline::shrink(&psi, u).unwrap();
        let mut f = apply_smoother(&psi, &y).unwrap();
        for _ in 0..t {
            let r: Vec<f64> = y.iter().zip(&f).map(|(a, b)| a - b).collect();
            let step = apply_smoother(&psi, &r).unwrap();
            f.iter_mut().zip(step).for_each(|(a, b)| *a += b);
        }
        let closed = boost_operator(&psi, t) * DVector::from_column_slice(&y);
        let err = f.iter().zip(closed.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-9, "t = {t}: {err}");
    }

    #[test]
    fn cut_and_imp_losses_differ_by_a_constant(y1 in -5.0f64..5.0, extra in 0.0f64..4.0, f in -10.0f64..10.0, g in -10.0f64..10.0) {
        let tr = TransformedResponse { y1, y2: y1 * y1 + extra, bracket_mass: 1.0, degenerate: false };
        let a = cut_loss(&tr, f) - imp_loss(&tr, f);
        let b = cut_loss(&tr, g) - imp_loss(&tr, g);
        prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
    }
}

fn small_study(seed: u64) -> icboost_core::sim::SimData {
    let config = SimConfig { n: 120, ..SimConfig::default() };
    gen_aft(&config, &mut stream(seed, &[0])).unwrap()
}

#[test]
fn forest_curves_are_survivor_functions() {
    let data = small_study(3);
    let params = IcrfParams { n_trees: 15, n_iterations: 2, seed: 9, ..IcrfParams::default() };
    let model = icrf_fit(&data.train, &params).unwrap();
    for x in data.test_x.iter().chain([vec![0.0], vec![1.0], vec![0.5]].iter()) {
        for curve in [model.predict_survivor(x).unwrap(), model.predict_step(x).unwrap()] {
            assert!(curve.values.iter().all(|v| (0.0..=1.0).contains(v)));
            assert!(curve.values.windows(2).all(|w| w[1] <= w[0]));
        }
    }
}

#[test]
fn pipeline_improves_on_a_constant_fit() {
    let data = small_study(4);
    let params = IcrfParams { n_trees: 15, n_iterations: 2, seed: 11, ..IcrfParams::default() };
    let forest = icrf_fit(&data.train, &params).unwrap();
    let responses: Vec<TransformedResponse> =
        data.train.observations.iter().map(|o| transform_response(o, &forest, GTransform::Log).unwrap()).collect();
    let rows: Vec<Vec<f64>> = data.train.observations.iter().map(|o| o.features.clone()).collect();
    let learners = FeatureLearners::new(FeatureLearners::columns_of(&rows), 4.0).unwrap();
    for mode in [BoostMode::Cut, BoostMode::Imp] {
        let config = BoostConfig { mode, df: 4.0, max_iterations: 5_000, ..BoostConfig::default() };
        let result = fit(&learners, &responses, &config).unwrap();
        let trace = &result.model.risk_trace;
        assert!(trace.windows(2).all(|w| w[1] <= w[0]));
        let pred = result.model.predict_many(&data.test_x).unwrap();
        let mean = data.test_phi.iter().sum::<f64>() / data.test_phi.len() as f64;
        let mse = |p: &dyn Fn(usize) -> f64| data.test_phi.iter().enumerate().map(|(i, t)| (p(i) - t).powi(2)).sum::<f64>();
        assert!(mse(&|i| pred[i]) < mse(&|_| mean), "{mode:?}");
    }
}
