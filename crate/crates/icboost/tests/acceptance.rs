//! Acceptance criteria. Each test prints one `criterion N: PASS|FAIL` line
//! and fails when its criterion does.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use icboost::benchmark::{run_benchmark, BenchmarkPlan, FAILURES_FILE, METRICS_FILE, TRACES_FILE};
use icboost::config::{RawConfig, VerifyConfig};
use icboost::experiment::{run_replicate, Method};
use icboost::parallel::{with_threads, RayonExecutor};
use icboost::verify::{run_theory_checks, theorem1_spectrum, CheckRow, Status};
use icboost_core::cut::{bracket_moments, cut_loss, imp_loss, loss_gradient, GTransform, TransformedResponse};
use icboost_core::data::{CurveKind, IntervalObservation, SurvivorCurve, TimeGrid};
use icboost_core::metrics::{classification_metrics, skdt, smaxae, smsqe};
use icboost_core::npmle::{turnbull_npmle, turnbull_npmle_with};
use icboost_core::rng::stream;
use icboost_core::sim::phi_default;
use icboost_core::theory::theoretical_mse;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn verdict(n: u32, pass: bool, detail: impl AsRef<str>) {
    println!("criterion {n}: {} | {}", if pass { "PASS" } else { "FAIL" }, detail.as_ref());
    assert!(pass, "criterion {n} failed: {}", detail.as_ref());
}

struct TheoryRun {
    rows: Vec<CheckRow>,
    elapsed: Duration,
}

fn theory() -> &'static TheoryRun {
    static RUN: OnceLock<TheoryRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let t = Instant::now();
        let rows = run_theory_checks(&VerifyConfig::default()).expect("theory checks run");
        TheoryRun { rows, elapsed: t.elapsed() }
    })
}

fn rows_named<'a>(prefix: &str) -> Vec<&'a CheckRow> {
    theory().rows.iter().filter(|r| r.check.starts_with(prefix)).collect()
}

fn all_pass(rows: &[&CheckRow]) -> bool {
    !rows.is_empty() && rows.iter().all(|r| r.status == Status::Pass)
}

fn describe(rows: &[&CheckRow]) -> String {
    rows.iter().map(|r| format!("{}={} ({:.3e} vs tol {:.3e})", r.check, r.status, r.value, r.tolerance)).collect::<Vec<_>>().join("; ")
}

#[test]
fn criterion_01_operator_identity() {
    let t = Instant::now();
    let cfg = VerifyConfig { mc_reps: 2, ..VerifyConfig::default() };
    let rows = run_theory_checks(&cfg).unwrap();
    let elapsed = t.elapsed();
    let row = rows.iter().find(|r| r.check == "operator_identity").unwrap();
    assert_eq!((cfg.n, cfg.df, cfg.u), (50, 20.0, 0.01));
    verdict(
        1,
        row.status == Status::Pass && row.value < 1e-8 && elapsed < Duration::from_secs(5),
        format!("max |f(t) - B(t) y| = {:.3e} over t <= 100, {:.2?}", row.value, elapsed),
    );
}

#[test]
fn criterion_02_mse_decomposition() {
    let rows = rows_named("mc_");
    let cfg = VerifyConfig::default();
    assert_eq!((cfg.mc_n, cfg.mc_reps), (30, 5000));
    verdict(
        2,
        rows.len() == 8 && all_pass(&rows) && theory().elapsed < Duration::from_secs(120),
        format!("{} in {:.2?}", describe(&rows), theory().elapsed),
    );
}

#[test]
fn criterion_03_plateau() {
    let rows: Vec<&CheckRow> = theory().rows.iter().filter(|r| r.check == "plateau" || r.check == "variance_bias_monotone").collect();
    verdict(3, rows.len() == 2 && all_pass(&rows), describe(&rows));
}

#[test]
fn criterion_04_projection_invariance() {
    let rows = rows_named("projection_invariance");
    verdict(4, all_pass(&rows) && rows[0].value < 1e-10, describe(&rows));
}

#[test]
fn criterion_05_theorem1_window() {
    let rows = rows_named("theorem1_window");
    let (eig, mu, sigma2, m0) = theorem1_spectrum();
    assert_eq!(m0, 4.0);
    let mse: Vec<f64> = (0..4).map(|t| theoretical_mse(&eig, &mu, sigma2, t).unwrap().mse).collect();
    let decreasing = mse.windows(2).all(|w| w[1] < w[0]);
    verdict(5, all_pass(&rows) && decreasing, format!("mse(0..=3) = {mse:?}"));
}

/// Product-limit estimate at each distinct event time.
fn kaplan_meier(times: &[f64], events: &[bool]) -> Vec<(f64, f64)> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut at_risk = times.len() as f64;
    let mut s = 1.0;
    let mut out = Vec::new();
    for &i in &order {
        if events[i] {
            s *= 1.0 - 1.0 / at_risk;
            out.push((times[i], s));
        }
        at_risk -= 1.0;
    }
    out
}

#[test]
fn criterion_06_turnbull_matches_kaplan_meier() {
    let mut rng = stream(6, &[0]);
    let n = 200;
    let mut times = Vec::with_capacity(n);
    let mut events = Vec::with_capacity(n);
    for _ in 0..n {
        let y: f64 = -rng.random::<f64>().ln() * 2.0;
        let c: f64 = rng.random::<f64>() * 4.0;
        times.push(y.min(c));
        events.push(y <= c);
    }
    let mut sorted = times.clone();
    sorted.sort_by(f64::total_cmp);
    let gap = sorted.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let eps = (gap / 10.0).min(1e-9);
    let brackets: Vec<(f64, f64)> =
        times.iter().zip(&events).map(|(&t, &e)| if e { (t - eps, t) } else { (t, f64::INFINITY) }).collect();
    let km = kaplan_meier(&times, &events);
    let km_error = |tol: f64| {
        let fit = turnbull_npmle_with(&brackets, tol, 1_000_000).unwrap();
        km.iter().map(|&(t, s)| (fit.curve.eval(t) - s).abs()).fold(0.0, f64::max)
    };
    // The default rule stops on a 1e-8 mass step, which bounds the step and not the error.
    let default_err = km_error(1e-8);
    let km_err = km_error(1e-12);

    // exact-like data: the empirical survivor function
    let exact: Vec<(f64, f64)> = sorted.iter().map(|&t| (t - eps, t)).collect();
    let emp = turnbull_npmle(&exact).unwrap();
    let emp_err = sorted
        .iter()
        .enumerate()
        .map(|(i, &t)| (emp.curve.eval(t) - (1.0 - (i + 1) as f64 / n as f64)).abs())
        .fold(0.0, f64::max);
    verdict(
        6,
        km_err < 1e-8 && emp_err < 1e-12,
        format!(
            "max |NPMLE - KM| = {km_err:.3e} at {} event times (tolerance 1e-12; {default_err:.3e} at the default 1e-8 stop); empirical case max error {emp_err:.3e}",
            km.len()
        ),
    );
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

#[test]
fn criterion_07_cut_unbiasedness() {
    let x = 0.2;
    let phi = phi_default(&[x], [1.0, 0.8, 0.8]).unwrap();
    let sigma = 0.25;
    let (tau, m) = (6.0, 3);
    let step = 1e-3;
    let grid = TimeGrid::new((1..=12_000).map(|i| i as f64 * step).collect()).unwrap();
    let values: Vec<f64> = grid.points().iter().map(|&t| 1.0 - normal_cdf((t.ln() - phi) / sigma)).collect();
    let curve = SurvivorCurve::new(grid.clone(), values, CurveKind::Smoothed).unwrap();

    let s = 2.0;
    let targets = [
        ("log", GTransform::Log, phi),
        ("threshold(2)", GTransform::Threshold(s), 2.0 * (1.0 - normal_cdf((s.ln() - phi) / sigma)) - 1.0),
    ];
    let draws = 100_000;
    let mut rng = stream(7, &[0]);
    let mut sums = [(0.0, 0.0); 2];
    for _ in 0..draws {
        let z: f64 = StandardNormal.sample(&mut rng);
        let y = (phi + sigma * z).exp();
        let mut visits: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * tau).collect();
        visits.sort_by(f64::total_cmp);
        let obs = IntervalObservation::from_monitoring(vec![x], y, visits).unwrap();
        for (k, (_, g, _)) in targets.iter().enumerate() {
            let v = bracket_moments(&curve, obs.bracket(), *g, &grid).unwrap().y1;
            sums[k].0 += v;
            sums[k].1 += v * v;
        }
    }
    let mut pass = true;
    let mut detail = Vec::new();
    for ((name, _, truth), (s1, s2)) in targets.iter().zip(sums) {
        let mean = s1 / draws as f64;
        let se = ((s2 / draws as f64 - mean * mean) / (draws - 1) as f64).sqrt();
        let ok = (mean - truth).abs() < 3.0 * se;
        pass &= ok;
        detail.push(format!("{name}: mean {mean:.6} vs E g(Y) {truth:.6}, 3se {:.2e}", 3.0 * se));
    }
    verdict(7, pass, detail.join("; "));
}

#[test]
fn criterion_08_gradient_identity() {
    let mut rng = stream(8, &[0]);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let y1 = rng.random_range(-5.0..5.0);
        let y2 = y1 * y1 + rng.random_range(0.0..4.0);
        let f = rng.random_range(-5.0..5.0);
        let tr = TransformedResponse { y1, y2, bracket_mass: 1.0, degenerate: false };
        let analytic = loss_gradient(&tr, f);
        assert_eq!(analytic, f - y1);
        for loss in [cut_loss, imp_loss] {
            let fd = (loss(&tr, f + h) - loss(&tr, f - h)) / (2.0 * h);
            worst = worst.max((fd - analytic).abs());
        }
    }
    verdict(8, worst < 1e-6, format!("max |finite difference - (f - y1)| = {worst:.3e} over 1000 inputs"));
}

#[test]
fn criterion_09_metric_oracles() {
    let mut rng = stream(9, &[0]);
    let n = 100;
    let mut mismatches = 0;
    for round in 0..100 {
        let truth: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..2.0)).collect();
        // some rounds with ties in both vectors
        let pred: Vec<f64> = (0..n)
            .map(|_| {
                let v: f64 = rng.random_range(-1.0..2.0);
                if round % 3 == 0 { (v * 4.0).round() / 4.0 } else { v }
            })
            .collect();
        let diffs: Vec<f64> = pred.iter().zip(&truth).map(|(p, t)| libm::exp(*p) - libm::exp(*t)).collect();
        let max_ae = diffs.iter().map(|d| d.abs()).fold(0.0, f64::max);
        let mut sq = 0.0;
        for d in &diffs {
            sq += d * d;
        }
        let msq = sq / n as f64;
        let (mut nc, mut nd) = (0i64, 0i64);
        for i in 0..n {
            for j in 0..n {
                if truth[i] > truth[j] {
                    if pred[i] > pred[j] {
                        nc += 1;
                    } else {
                        nd += 1;
                    }
                }
            }
        }
        let kd = (nc - nd) as f64 / (n * (n - 1) / 2) as f64;
        let s = 2.0;
        let pos: Vec<bool> = truth.iter().map(|t| libm::exp(*t) > s).collect();
        let tp = pos.iter().zip(&pred).filter(|(p, f)| **p && **f > 0.0).count() as f64;
        let tn = pos.iter().zip(&pred).filter(|(p, f)| !**p && **f <= 0.0).count() as f64;
        let np = pos.iter().filter(|p| **p).count() as f64;
        let nn = n as f64 - np;
        let cm = classification_metrics(&pred, &truth, s).unwrap();
        let ok = smaxae(&pred, &truth).unwrap() == max_ae
            && smsqe(&pred, &truth).unwrap() == msq
            && skdt(&pred, &truth).unwrap() == kd
            && cm.sensitivity == (np > 0.0).then(|| tp / np)
            && cm.specificity == (nn > 0.0).then(|| tn / nn);
        if !ok {
            mismatches += 1;
        }
    }
    verdict(9, mismatches == 0, format!("{mismatches} mismatches over 100 fuzzed vectors of length {n}"));
}

/// `metric -> method -> values` over replicates.
type MetricTable = BTreeMap<String, BTreeMap<String, Vec<f64>>>;

fn read_metrics(path: &Path) -> MetricTable {
    let mut out = MetricTable::new();
    let mut rdr = csv::Reader::from_path(path).unwrap();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        if let Ok(v) = rec[3].parse::<f64>() {
            out.entry(rec[2].to_string()).or_default().entry(rec[1].to_string()).or_default().push(v);
        }
    }
    out
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len();
    if k % 2 == 1 {
        s[k / 2]
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2])
    }
}

struct Study {
    metrics: MetricTable,
    failures: usize,
    elapsed: Duration,
    _dir: tempfile::TempDir,
}

fn plan(config: &str, threads: usize) -> BenchmarkPlan {
    let raw = RawConfig::parse(config).unwrap();
    BenchmarkPlan {
        experiment: raw.experiment().unwrap(),
        seed: raw.seed().unwrap(),
        replicates: raw.replicates().unwrap(),
        trace_points: raw.trace_points().unwrap(),
        threads,
        config_hash: raw.hash(),
    }
}

/// The scaled simulation study shared by the regression and classification criteria.
fn study() -> &'static Study {
    static STUDY: OnceLock<Study> = OnceLock::new();
    STUDY.get_or_init(|| {
        let config = "seed = 2024\nn = 500\nsigma = 0.25\np = 1\ntau = 6\nm = 3\nreplicates = 30\n\
                      n_trees = 50\nn_iterations = 2\nmethods = N,CUT,IMP\nregression = true\nthresholds = 2,3\n";
        let dir = tempfile::tempdir().unwrap();
        let t = Instant::now();
        let summary = run_benchmark(&plan(config, 0), dir.path()).unwrap();
        Study { metrics: read_metrics(&dir.path().join(METRICS_FILE)), failures: summary.failures, elapsed: t.elapsed(), _dir: dir }
    })
}

#[test]
fn criterion_10_regression_ordering() {
    let st = study();
    let med = |metric: &str, method: &str| median(&st.metrics[metric][method]);
    let (cut, imp, naive) = (med("smsqe", "CUT"), med("smsqe", "IMP"), med("smsqe", "N"));
    let (kcut, knaive) = (med("skdt", "CUT"), med("skdt", "N"));
    let n_reps = st.metrics["smsqe"]["CUT"].len();
    verdict(
        10,
        st.failures == 0 && n_reps == 30 && cut < naive && imp < naive && kcut > knaive,
        format!(
            "median SMSqE CUT {cut:.4} IMP {imp:.4} N {naive:.4}; median SKDT CUT {kcut:.4} N {knaive:.4}; {n_reps} replicates in {:.0?}",
            st.elapsed
        ),
    );
}

#[test]
fn criterion_11_classification_ordering() {
    let st = study();
    let mut pass = st.failures == 0;
    let mut detail = Vec::new();
    for s in ["2", "3"] {
        let sens = &st.metrics[&format!("sensitivity_s{s}")];
        let (cut, naive) = (median(&sens["CUT"]), median(&sens["N"]));
        pass &= cut >= naive && sens["CUT"].len() == 30;
        detail.push(format!("s={s}: median sensitivity CUT {cut:.4} N {naive:.4}"));
        let worst = st.metrics[&format!("max_abs_output_s{s}")].values().flatten().fold(0.0_f64, |a, v| a.max(*v));
        pass &= worst <= 1.0;
        detail.push(format!("max |f| {worst}"));
    }
    verdict(11, pass, detail.join("; "));
}

#[test]
fn criterion_12_convergence_traces() {
    let config = "seed = 12\nreplicates = 5\nn_trees = 50\nn_iterations = 2\nregression = true\n";
    let p = plan(config, 0);
    // full traces, in memory
    let reports = with_threads(0, || {
        use rayon::prelude::*;
        (0..5).into_par_iter().map(|r| run_replicate(&p.experiment, p.seed, r, &RayonExecutor).unwrap()).collect::<Vec<_>>()
    });
    let mut full_ok = true;
    let mut fits = 0;
    for rep in reports.iter().flatten() {
        let trace = &rep.regression.as_ref().unwrap().risk_trace;
        full_ok &= trace.windows(2).all(|w| w[1] <= w[0]) && trace.last() < trace.first();
        fits += 1;
    }
    // emitted CSV
    let dir = tempfile::tempdir().unwrap();
    run_benchmark(&p, dir.path()).unwrap();
    let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    let mut rdr = csv::Reader::from_path(dir.path().join(TRACES_FILE)).unwrap();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        groups.entry((rec[0].to_string(), rec[1].to_string())).or_default().push(rec[3].parse().unwrap());
    }
    let csv_ok = groups.len() == 25 && groups.values().all(|t| t.windows(2).all(|w| w[1] <= w[0]));
    let methods: Vec<&str> = Method::ALL.iter().map(|m| m.label()).collect();
    verdict(
        12,
        full_ok && csv_ok && fits == 25,
        format!("{fits} regression fits ({}) x 5 replicates nonincreasing; traces.csv groups {}", methods.join(","), groups.len()),
    );
}

#[test]
fn criterion_13_determinism() {
    let config = "seed = 13\nn = 100\nreplicates = 3\nn_trees = 10\nn_iterations = 2\nthresholds = 2\nmax_iterations = 20000\n";
    let dirs: Vec<tempfile::TempDir> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    for (dir, threads) in dirs.iter().zip([1, 1, 8]) {
        run_benchmark(&plan(config, threads), dir.path()).unwrap();
    }
    let mut same = true;
    for name in [METRICS_FILE, TRACES_FILE, FAILURES_FILE] {
        let first = std::fs::read(dirs[0].path().join(name)).unwrap();
        for d in &dirs[1..] {
            same &= std::fs::read(d.path().join(name)).unwrap() == first;
        }
    }
    verdict(13, same, "metrics.csv, traces.csv and failures.csv identical over two 1-thread runs and one 8-thread run");
}
