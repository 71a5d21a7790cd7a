//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Every key must appear
//! in [`REGISTRY`]; unknown or repeated keys are errors.

use std::collections::BTreeMap;
use std::path::Path;

use icboost_core::boost::{BoostConfig, Task};
use icboost_core::icrf::{IcrfParams, SplitRule, TerminalRule};
use icboost_core::sim::{ErrorDist, SimConfig};
use sha2::{Digest, Sha256};

use crate::error::{AppError, AppResult};
use crate::experiment::{ExperimentConfig, Method};

/// Known keys with their defaults and meaning.
pub const REGISTRY: &[(&str, &str, &str)] = &[
    ("seed", "1", "base seed; --seed overrides it"),
    ("n", "500", "subjects per simulated data set (train + test)"),
    ("p", "1", "features: 1, or at least 5"),
    ("sigma", "0.25", "sd of the normal log-time error"),
    ("tau", "6", "study horizon; visits are uniform on [0, tau]"),
    ("m", "3", "monitoring visits per subject"),
    ("error_dist", "normal", "normal | logistic (scale 1/8)"),
    ("beta0", "1", "coefficient of |x1 - 0.5|"),
    ("beta1", "0.8", "coefficient of x3^3"),
    ("beta2", "0.8", "coefficient of sin(pi x5)"),
    ("train_fraction", "0.8", "share of subjects used for training"),
    ("df", "20", "degrees of freedom of each spline learner"),
    ("shrink_u", "0.01", "boosting step size u"),
    ("stop_w", "5", "stopping exponent w in eta = n^-w"),
    ("max_iterations", "100000", "cap on boosting iterations"),
    ("task", "regression", "fit/evaluate target: regression | classification"),
    ("threshold", "2", "survival-status threshold s for classification fits"),
    ("n_trees", "300", "trees per forest round"),
    ("n_iterations", "5", "forest rounds"),
    ("split_rule", "gwrs", "gwrs | glr"),
    ("terminal_rule", "exploitative", "exploitative | quasi_honest"),
    ("min_node_size", "6", "smallest terminal node"),
    ("mtry", "auto", "features tried per node; auto = ceil(sqrt(p))"),
    ("bootstrap_fraction", "0.95", "in-bag share of each tree"),
    ("feature_with_replacement", "false", "draw per-node features with replacement"),
    ("replicates", "30", "benchmark replicates"),
    ("methods", "O,R,N,CUT,IMP", "benchmark methods"),
    ("regression", "true", "benchmark the log-time regression target"),
    ("thresholds", "", "benchmark classification thresholds, comma separated"),
    ("trace_points", "60", "log-spaced risk-trace rows per fit in traces.csv"),
    ("verify_n", "50", "design size for the operator check"),
    ("verify_df", "20", "spline df for the theory checks"),
    ("verify_u", "0.01", "shrinkage for the theory checks"),
    ("verify_sigma", "0.25", "noise sd for the theory checks"),
    ("verify_mc_n", "30", "design size of the Monte Carlo MSE check"),
    ("verify_mc_df", "8", "spline df of the Monte Carlo MSE check"),
    ("verify_mc_reps", "5000", "Monte Carlo replicates"),
    ("verify_smoother", "spline", "spline | projection (unshrunk least-squares line; verify_u is ignored)"),
    ("verify_tolerance_scale", "1", "multiplier on every theory tolerance (0 forces failures)"),
];

/// Parsed key/value pairs with defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl Default for RawConfig {
    fn default() -> Self {
        Self { values: REGISTRY.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect() }
    }
}

impl RawConfig {
    pub fn parse(text: &str) -> AppResult<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::BTreeSet::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| AppError::usage(format!("config line {}: expected key = value", lineno + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !cfg.values.contains_key(k) {
                return Err(AppError::usage(format!("config line {}: unknown key {k:?}", lineno + 1)));
            }
            if !seen.insert(k.to_string()) {
                return Err(AppError::usage(format!("config line {}: duplicate key {k:?}", lineno + 1)));
            }
            cfg.values.insert(k.to_string(), v.to_string());
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> AppResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> AppResult<()> {
        match self.values.get_mut(key) {
            Some(v) => {
                *v = value.to_string();
                Ok(())
            }
            None => Err(AppError::usage(format!("unknown key {key:?}"))),
        }
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).expect("registered key")
    }

    fn num<T: std::str::FromStr>(&self, key: &str) -> AppResult<T> {
        self.get(key)
            .parse()
            .map_err(|_| AppError::usage(format!("config key {key}: cannot parse {:?}", self.get(key))))
    }

    fn flag(&self, key: &str) -> AppResult<bool> {
        match self.get(key).to_ascii_lowercase().as_str() {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            v => Err(AppError::usage(format!("config key {key}: expected true or false, got {v:?}"))),
        }
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> AppResult<Vec<T>> {
        self.get(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| AppError::usage(format!("config key {key}: cannot parse {s:?}"))))
            .collect()
    }

    /// Effective configuration as sorted `key=value` lines.
    pub fn canonical(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// SHA-256 of [`canonical`](Self::canonical), hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn seed(&self) -> AppResult<u64> {
        self.num("seed")
    }

    /// Study horizon used when loading data files.
    pub fn tau(&self) -> AppResult<f64> {
        let tau: f64 = self.num("tau")?;
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(AppError::usage("config key tau: must be positive and finite"));
        }
        Ok(tau)
    }

    pub fn sim(&self) -> AppResult<SimConfig> {
        let error_dist = match self.get("error_dist").to_ascii_lowercase().as_str() {
            "normal" => ErrorDist::Normal,
            "logistic" => ErrorDist::Logistic,
            v => return Err(AppError::usage(format!("config key error_dist: expected normal or logistic, got {v:?}"))),
        };
        let sim = SimConfig {
            n: self.num("n")?,
            p: self.num("p")?,
            sigma: self.num("sigma")?,
            tau: self.num("tau")?,
            m: self.num("m")?,
            error_dist,
            beta: [self.num("beta0")?, self.num("beta1")?, self.num("beta2")?],
            train_fraction: self.num("train_fraction")?,
        };
        sim.validate().map_err(|e| AppError::usage(format!("invalid simulation config: {e}")))?;
        Ok(sim)
    }

    /// Boosting settings; the task comes from `task` and `threshold`.
    pub fn boost(&self) -> AppResult<BoostConfig> {
        let task = match self.get("task").to_ascii_lowercase().as_str() {
            "regression" => Task::Regression,
            "classification" => Task::Classification(self.num("threshold")?),
            v => return Err(AppError::usage(format!("config key task: expected regression or classification, got {v:?}"))),
        };
        let cfg = BoostConfig {
            task,
            df: self.num("df")?,
            shrink_u: self.num("shrink_u")?,
            stop_w: self.num("stop_w")?,
            max_iterations: self.num("max_iterations")?,
            ..BoostConfig::default()
        };
        cfg.validate().map_err(|e| AppError::usage(format!("invalid boosting config: {e}")))?;
        Ok(cfg)
    }

    pub fn icrf(&self, p: usize) -> AppResult<IcrfParams> {
        let split_rule = match self.get("split_rule").to_ascii_lowercase().as_str() {
            "gwrs" => SplitRule::Gwrs,
            "glr" => SplitRule::Glr,
            v => return Err(AppError::usage(format!("config key split_rule: expected gwrs or glr, got {v:?}"))),
        };
        let terminal_rule = match self.get("terminal_rule").to_ascii_lowercase().as_str() {
            "exploitative" => TerminalRule::Exploitative,
            "quasi_honest" => TerminalRule::QuasiHonest,
            v => return Err(AppError::usage(format!("config key terminal_rule: expected exploitative or quasi_honest, got {v:?}"))),
        };
        let mtry = match self.get("mtry") {
            "auto" => None,
            _ => Some(self.num("mtry")?),
        };
        let params = IcrfParams {
            n_trees: self.num("n_trees")?,
            n_iterations: self.num("n_iterations")?,
            split_rule,
            terminal_rule,
            min_node_size: self.num("min_node_size")?,
            mtry,
            bootstrap_fraction: self.num("bootstrap_fraction")?,
            feature_with_replacement: self.flag("feature_with_replacement")?,
            seed: self.seed()?,
        };
        params.validate(p).map_err(|e| AppError::usage(format!("invalid forest config: {e}")))?;
        Ok(params)
    }

    pub fn experiment(&self) -> AppResult<ExperimentConfig> {
        let sim = self.sim()?;
        let methods: Vec<Method> = self.list("methods")?;
        if methods.is_empty() {
            return Err(AppError::usage("config key methods: need at least one method"));
        }
        let thresholds: Vec<f64> = self.list("thresholds")?;
        if thresholds.iter().any(|s| !(*s > 0.0)) {
            return Err(AppError::usage("config key thresholds: thresholds must be positive"));
        }
        let regression = self.flag("regression")?;
        if !regression && thresholds.is_empty() {
            return Err(AppError::usage("nothing to benchmark: regression is off and no thresholds given"));
        }
        Ok(ExperimentConfig { icrf: self.icrf(sim.p)?, boost: self.boost()?, sim, regression, thresholds, methods })
    }

    pub fn replicates(&self) -> AppResult<usize> {
        self.num("replicates")
    }

    pub fn trace_points(&self) -> AppResult<usize> {
        self.num("trace_points")
    }

    pub fn verify(&self) -> AppResult<VerifyConfig> {
        let projection = match self.get("verify_smoother").to_ascii_lowercase().as_str() {
            "spline" => false,
            "projection" => true,
            v => return Err(AppError::usage(format!("config key verify_smoother: expected spline or projection, got {v:?}"))),
        };
        let v = VerifyConfig {
            n: self.num("verify_n")?,
            df: self.num("verify_df")?,
            u: self.num("verify_u")?,
            sigma: self.num("verify_sigma")?,
            mc_n: self.num("verify_mc_n")?,
            mc_df: self.num("verify_mc_df")?,
            mc_reps: self.num("verify_mc_reps")?,
            projection,
            tolerance_scale: self.num("verify_tolerance_scale")?,
            seed: self.seed()?,
        };
        if v.n < 4 || v.mc_n < 4 || v.mc_reps < 2 {
            return Err(AppError::usage("verify_n and verify_mc_n need at least 4 points and verify_mc_reps at least 2"));
        }
        if !(v.u > 0.0 && v.u <= 1.0) || !(v.sigma > 0.0) || !(v.tolerance_scale >= 0.0) {
            return Err(AppError::usage("verify_u must lie in (0, 1], verify_sigma must be positive and the tolerance scale nonnegative"));
        }
        if !(v.df > 2.0 && v.df <= v.n as f64) || !(v.mc_df > 2.0 && v.mc_df <= v.mc_n as f64) {
            return Err(AppError::usage("verify df values must lie in (2, n]"));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyConfig {
    pub n: usize,
    pub df: f64,
    pub u: f64,
    pub sigma: f64,
    pub mc_n: usize,
    pub mc_df: f64,
    pub mc_reps: usize,
    /// Use a least-squares line instead of splines for the spectral checks.
    pub projection: bool,
    pub tolerance_scale: f64,
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        RawConfig::default().verify().expect("defaults are valid")
    }
}

/// Documentation of every key, one `key = default  # meaning` line each.
pub fn registry_help() -> String {
    REGISTRY.iter().map(|(k, v, d)| format!("{k} = {v}  # {d}\n")).collect()
}
