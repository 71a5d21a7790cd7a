//! Run manifests: what ran, with which configuration, how long each stage
//! took and which files it wrote.

use std::path::{Path, PathBuf};

use crate::error::AppResult;
use crate::experiment::StageTimes;
use crate::io::{create, write_pairs};

pub const MANIFEST_FILE: &str = "manifest.csv";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunManifest {
    rows: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(command: &str, config_hash: &str, seed: u64) -> Self {
        let mut m = Self::default();
        m.push("command", command);
        m.push("config_hash", config_hash);
        m.push("seed", seed);
        m.push("icboost_version", env!("CARGO_PKG_VERSION"));
        m.push("icboost_core_version", icboost_core::VERSION);
        m
    }

    pub fn push(&mut self, field: &str, value: impl ToString) {
        self.rows.push((field.to_string(), value.to_string()));
    }

    pub fn times(&mut self, times: &StageTimes) {
        self.push("icrf_secs", times.icrf_secs);
        self.push("transform_secs", times.transform_secs);
        self.push("boosting_secs", times.boosting_secs);
    }

    pub fn output(&mut self, path: &Path) {
        self.push("output", path.display());
    }

    pub fn get(&self, field: &str) -> Option<&str> {
        self.rows.iter().find(|(k, _)| k == field).map(|(_, v)| v.as_str())
    }

    /// Writes `manifest.csv` into `dir`, listing itself among the outputs.
    pub fn write(mut self, dir: &Path) -> AppResult<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        self.output(&path);
        write_pairs(create(&path)?, ["field", "value"], &self.rows)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> AppResult<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let rows = rdr
            .records()
            .map(|r| r.map(|r| (r.get(0).unwrap_or_default().to_string(), r.get(1).unwrap_or_default().to_string())))
            .collect::<Result<_, _>>()?;
        Ok(Self { rows })
    }
}
