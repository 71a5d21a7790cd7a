//! Replication study: every method on every replicate, written as long-format
//! CSV.
//!
//! Each finished replicate is checkpointed under `replicates/rNNNNN/`; a rerun
//! with the same configuration reuses those files verbatim and only computes
//! the missing replicates. The merged tables are rebuilt from the checkpoints
//! in replicate order, so they do not depend on scheduling or thread count.
//!
//! Outputs in the run directory:
//!
//! - `metrics.csv`: `replicate,method,metric,value`
//! - `traces.csv`: `replicate,method,iteration,risk` (log-spaced rows of each
//!   regression risk trace)
//! - `failures.csv`: `replicate,method,error`
//! - `timings.csv`: `replicate,method,icrf_secs,transform_secs,boosting_secs`
//!   (wall-clock, so not reproducible byte for byte)
//! - `manifest.csv`

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{AppError, AppResult};
use crate::experiment::{run_replicate, run_replication, ExperimentConfig, Method, MethodReport};
use crate::io::create;
use crate::manifest::{RunManifest, MANIFEST_FILE};
use crate::parallel::{with_threads, RayonExecutor};

pub const METRICS_FILE: &str = "metrics.csv";
pub const TRACES_FILE: &str = "traces.csv";
pub const FAILURES_FILE: &str = "failures.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
const CHECKPOINT_DIR: &str = "replicates";
const DONE_MARKER: &str = "done";

const HEADERS: [(&str, &[&str]); 4] = [
    (METRICS_FILE, &["replicate", "method", "metric", "value"]),
    (TRACES_FILE, &["replicate", "method", "iteration", "risk"]),
    (FAILURES_FILE, &["replicate", "method", "error"]),
    (TIMINGS_FILE, &["replicate", "method", "icrf_secs", "transform_secs", "boosting_secs"]),
];

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkPlan {
    pub experiment: ExperimentConfig,
    pub seed: u64,
    pub replicates: usize,
    pub trace_points: usize,
    pub threads: usize,
    pub config_hash: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchmarkSummary {
    pub computed: Vec<usize>,
    pub reused: Vec<usize>,
    pub failures: usize,
    pub outputs: Vec<PathBuf>,
}

/// Rows of one replicate, one vector per output table.
#[derive(Debug, Clone, Default, PartialEq)]
struct ReplicateRows {
    metrics: Vec<Vec<String>>,
    traces: Vec<Vec<String>>,
    failures: Vec<Vec<String>>,
    timings: Vec<Vec<String>>,
}

impl ReplicateRows {
    fn tables(&self) -> [&Vec<Vec<String>>; 4] {
        [&self.metrics, &self.traces, &self.failures, &self.timings]
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

/// Iteration indices kept from a trace of length `len`: log-spaced, always
/// including the first and the last.
pub fn log_spaced(len: usize, points: usize) -> Vec<usize> {
    if len == 0 {
        return Vec::new();
    }
    let last = len - 1;
    if last == 0 {
        return vec![0];
    }
    if points < 2 {
        return vec![0, last];
    }
    let mut out = vec![0];
    let top = (last as f64).ln();
    for k in 0..points - 1 {
        let i = (top * k as f64 / (points - 2).max(1) as f64).exp().round() as usize;
        out.push(i.min(last));
    }
    out.push(last);
    out.sort_unstable();
    out.dedup();
    out
}

fn report_rows(report: &MethodReport, trace_points: usize, rows: &mut ReplicateRows) {
    let rep = report.replicate.to_string();
    let method = report.method.label().to_string();
    let mut metric = |name: String, value: String| rows.metrics.push(vec![rep.clone(), method.clone(), name, value]);
    if let Some(r) = &report.regression {
        metric("smaxae".into(), r.smaxae.to_string());
        metric("smsqe".into(), r.smsqe.to_string());
        metric("skdt".into(), r.skdt.to_string());
        metric("stop_iteration".into(), r.stop_iteration.to_string());
        metric("converged".into(), flag(r.converged));
    }
    for c in &report.classification {
        let s = c.threshold;
        metric(format!("sensitivity_s{s}"), opt(c.sensitivity));
        metric(format!("specificity_s{s}"), opt(c.specificity));
        metric(format!("max_abs_output_s{s}"), c.max_abs_output.to_string());
        metric(format!("stop_iteration_s{s}"), c.stop_iteration.to_string());
        metric(format!("converged_s{s}"), flag(c.converged));
    }
    if let Some(r) = &report.regression {
        for i in log_spaced(r.risk_trace.len(), trace_points) {
            rows.traces.push(vec![rep.clone(), method.clone(), i.to_string(), r.risk_trace[i].to_string()]);
        }
    }
    let t = report.times;
    rows.timings.push(vec![rep, method, t.icrf_secs.to_string(), t.transform_secs.to_string(), t.boosting_secs.to_string()]);
}

/// All methods on one replicate. A failing replicate is retried method by
/// method so that one bad method does not hide the others.
fn compute_replicate(plan: &BenchmarkPlan, replicate: usize) -> ReplicateRows {
    let exec = RayonExecutor;
    let mut rows = ReplicateRows::default();
    let reports: Vec<Result<MethodReport, (Method, AppError)>> = match run_replicate(&plan.experiment, plan.seed, replicate, &exec) {
        Ok(reports) => reports.into_iter().map(Ok).collect(),
        Err(_) => plan
            .experiment
            .methods
            .iter()
            .map(|&m| run_replication(&plan.experiment, m, plan.seed, replicate, &exec).map_err(|e| (m, e)))
            .collect(),
    };
    for r in reports {
        match r {
            Ok(report) => report_rows(&report, plan.trace_points, &mut rows),
            Err((m, e)) => rows.failures.push(vec![replicate.to_string(), m.label().into(), e.to_string()]),
        }
    }
    rows
}

fn checkpoint_dir(out: &Path, replicate: usize) -> PathBuf {
    out.join(CHECKPOINT_DIR).join(format!("r{replicate:05}"))
}

fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> AppResult<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_table(path: &Path) -> AppResult<Vec<Vec<String>>> {
    let mut rdr = csv::Reader::from_path(path)?;
    Ok(rdr.records().map(|r| r.map(|r| r.iter().map(str::to_string).collect())).collect::<Result<_, _>>()?)
}

fn save_checkpoint(out: &Path, replicate: usize, rows: &ReplicateRows) -> AppResult<()> {
    let dir = checkpoint_dir(out, replicate);
    for ((name, header), table) in HEADERS.iter().zip(rows.tables()) {
        write_table(&dir.join(name), header, table)?;
    }
    fs::write(dir.join(DONE_MARKER), b"")?;
    Ok(())
}

fn load_checkpoint(out: &Path, replicate: usize) -> AppResult<Option<ReplicateRows>> {
    let dir = checkpoint_dir(out, replicate);
    if !dir.join(DONE_MARKER).exists() {
        return Ok(None);
    }
    let mut t = HEADERS.iter().map(|(name, _)| read_table(&dir.join(name)));
    let mut next = || t.next().expect("four tables");
    Ok(Some(ReplicateRows { metrics: next()?, traces: next()?, failures: next()?, timings: next()? }))
}

/// Refuses to mix results of different configurations in one directory.
fn check_previous_run(out: &Path, config_hash: &str) -> AppResult<()> {
    let path = out.join(MANIFEST_FILE);
    if !path.exists() {
        return Ok(());
    }
    let previous = RunManifest::read(&path)?;
    match previous.get("config_hash") {
        Some(h) if h == config_hash => Ok(()),
        _ => Err(AppError::usage(format!(
            "{} holds results of a different configuration; choose another --out",
            out.display()
        ))),
    }
}

pub fn run_benchmark(plan: &BenchmarkPlan, out: &Path) -> AppResult<BenchmarkSummary> {
    check_previous_run(out, &plan.config_hash)?;
    fs::create_dir_all(out)?;
    let started = Instant::now();
    let mut done: Vec<Option<ReplicateRows>> = (0..plan.replicates).map(|r| load_checkpoint(out, r)).collect::<AppResult<_>>()?;
    let reused: Vec<usize> = (0..plan.replicates).filter(|&r| done[r].is_some()).collect();
    let todo: Vec<usize> = (0..plan.replicates).filter(|&r| done[r].is_none()).collect();

    // The manifest goes first so an interrupted run can be resumed.
    let mut manifest = RunManifest::new("benchmark", &plan.config_hash, plan.seed);
    manifest.push("replicates", plan.replicates);
    manifest.clone().write(out)?;

    let computed: Vec<AppResult<(usize, ReplicateRows)>> = with_threads(plan.threads, || {
        todo.par_iter()
            .map(|&r| {
                let rows = compute_replicate(plan, r);
                save_checkpoint(out, r, &rows)?;
                Ok((r, rows))
            })
            .collect()
    });
    for c in computed {
        let (r, rows) = c?;
        done[r] = Some(rows);
    }

    let mut merged = ReplicateRows::default();
    for rows in done.into_iter().flatten() {
        merged.metrics.extend(rows.metrics);
        merged.traces.extend(rows.traces);
        merged.failures.extend(rows.failures);
        merged.timings.extend(rows.timings);
    }
    let mut outputs = Vec::new();
    for ((name, header), table) in HEADERS.iter().zip(merged.tables()) {
        let path = out.join(name);
        write_table(&path, header, table)?;
        manifest.output(&path);
        outputs.push(path);
    }
    manifest.push("computed_replicates", todo.len());
    manifest.push("reused_replicates", reused.len());
    manifest.push("total_secs", started.elapsed().as_secs_f64());
    outputs.push(manifest.write(out)?);
    Ok(BenchmarkSummary { computed: todo, reused, failures: merged.failures.len(), outputs })
}
