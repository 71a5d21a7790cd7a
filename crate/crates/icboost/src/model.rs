//! Saved boosting models (JSON).

use std::io::{Read, Write};

use icboost_core::boost::BoostModel;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};
use crate::experiment::Method;

pub const MODEL_FORMAT: &str = "icboost-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredModel {
    pub format: String,
    pub version: u32,
    pub method: Method,
    pub feature_dim: usize,
    pub model: BoostModel,
}

impl StoredModel {
    pub fn new(method: Method, model: BoostModel) -> Self {
        Self { format: MODEL_FORMAT.into(), version: MODEL_VERSION, method, feature_dim: model.feature_dim, model }
    }

    pub fn write<W: Write>(&self, sink: W) -> AppResult<()> {
        serde_json::to_writer(sink, self)?;
        Ok(())
    }

    pub fn read<R: Read>(source: R) -> AppResult<Self> {
        let stored: Self = serde_json::from_reader(source).map_err(|e| AppError::usage(format!("not a model file: {e}")))?;
        if stored.format != MODEL_FORMAT || stored.version != MODEL_VERSION {
            return Err(AppError::usage(format!("unsupported model format {} v{}", stored.format, stored.version)));
        }
        if stored.feature_dim != stored.model.feature_dim {
            return Err(AppError::usage("model file is inconsistent: feature_dim disagrees with the model"));
        }
        Ok(stored)
    }

    /// Predictions at `rows`; a feature count other than the model's is a usage error.
    pub fn predict(&self, rows: &[Vec<f64>]) -> AppResult<Vec<f64>> {
        if let Some(x) = rows.iter().find(|x| x.len() != self.feature_dim) {
            return Err(AppError::usage(format!("model expects {} features, got {}", self.feature_dim, x.len())));
        }
        Ok(self.model.predict_many(rows)?)
    }
}
