//! CSV formats.
//!
//! - data sets: `id,left,right,x1,...,xp[,y][,phi]`, with `right = inf` for
//!   right-censored subjects;
//! - feature / truth sets: `id,x1,...,xp[,phi]`;
//! - predictions: `id,prediction`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use icboost_core::data::{Dataset, IntervalObservation};

use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedData {
    pub ids: Vec<String>,
    pub dataset: Dataset,
    pub y: Option<Vec<f64>>,
    pub phi: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub phi: Option<Vec<f64>>,
}

struct Layout {
    id: usize,
    features: Vec<usize>,
    named: Vec<(String, usize)>,
}

impl Layout {
    fn new(headers: &csv::StringRecord) -> AppResult<Self> {
        let id = position(headers, "id").ok_or_else(|| AppError::usage("missing column \"id\""))?;
        let mut features: Vec<(usize, usize)> = headers
            .iter()
            .enumerate()
            .filter_map(|(i, h)| h.trim().strip_prefix('x').and_then(|k| k.parse::<usize>().ok()).map(|k| (k, i)))
            .collect();
        features.sort_unstable();
        if features.is_empty() {
            return Err(AppError::usage("no feature columns x1, x2, ..."));
        }
        if features.iter().enumerate().any(|(j, &(k, _))| k != j + 1) {
            return Err(AppError::usage("feature columns must be x1..xp without gaps"));
        }
        let named = headers.iter().enumerate().map(|(i, h)| (h.trim().to_string(), i)).collect();
        Ok(Self { id, features: features.into_iter().map(|(_, i)| i).collect(), named })
    }

    fn column(&self, name: &str) -> Option<usize> {
        self.named.iter().find(|(h, _)| h == name).map(|&(_, i)| i)
    }
}

fn position(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim() == name)
}

fn field(rec: &csv::StringRecord, col: usize, name: &str, row: usize) -> AppResult<f64> {
    let raw = rec.get(col).ok_or_else(|| AppError::usage(format!("missing {name} at row {row}")))?;
    raw.trim()
        .parse::<f64>()
        .map_err(|_| AppError::usage(format!("cannot parse {name} {raw:?} at row {row}")))
}

fn reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source)
}

/// Parses a data set. `tau` defaults to the largest finite endpoint.
pub fn load_dataset<R: Read>(source: R, tau: Option<f64>) -> AppResult<LoadedData> {
    let mut rdr = reader(source);
    let layout = Layout::new(rdr.headers()?)?;
    let left = layout.column("left").ok_or_else(|| AppError::usage("missing column \"left\""))?;
    let right = layout.column("right").ok_or_else(|| AppError::usage("missing column \"right\""))?;
    let (ycol, phicol) = (layout.column("y"), layout.column("phi"));
    let mut ids = Vec::new();
    let mut obs = Vec::new();
    let mut y = Vec::new();
    let mut phi = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = k + 1;
        let l = field(&rec, left, "left", row)?;
        let r = field(&rec, right, "right", row)?;
        if !(l >= 0.0) || l.is_infinite() || r < 0.0 {
            return Err(AppError::usage(format!("negative or non-finite left endpoint at row {row}")));
        }
        if l >= r {
            return Err(AppError::usage(format!("left ≥ right at row {row}")));
        }
        let x = layout.features.iter().map(|&c| field(&rec, c, "feature", row)).collect::<AppResult<Vec<_>>>()?;
        obs.push(IntervalObservation::new(x, l, r).map_err(|e| AppError::usage(format!("row {row}: {e}")))?);
        ids.push(rec.get(layout.id).unwrap_or_default().to_string());
        if let Some(c) = ycol {
            y.push(field(&rec, c, "y", row)?);
        }
        if let Some(c) = phicol {
            phi.push(field(&rec, c, "phi", row)?);
        }
    }
    if obs.is_empty() {
        return Err(AppError::usage("data set has no rows"));
    }
    let tau = match tau {
        Some(t) => t,
        None => obs.iter().flat_map(|o| [o.left, o.right]).filter(|t| t.is_finite()).fold(0.0, f64::max),
    };
    let dataset = Dataset::new(obs, tau).map_err(|e| AppError::usage(format!("invalid data set: {e}")))?;
    Ok(LoadedData { ids, dataset, y: ycol.map(|_| y), phi: phicol.map(|_| phi) })
}

pub fn load_features<R: Read>(source: R) -> AppResult<FeatureTable> {
    let mut rdr = reader(source);
    let layout = Layout::new(rdr.headers()?)?;
    let phicol = layout.column("phi");
    let (mut ids, mut rows, mut phi) = (Vec::new(), Vec::new(), Vec::new());
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = k + 1;
        rows.push(layout.features.iter().map(|&c| field(&rec, c, "feature", row)).collect::<AppResult<Vec<_>>>()?);
        ids.push(rec.get(layout.id).unwrap_or_default().to_string());
        if let Some(c) = phicol {
            phi.push(field(&rec, c, "phi", row)?);
        }
    }
    Ok(FeatureTable { ids, rows, phi: phicol.map(|_| phi) })
}

/// Predictions keyed by id.
pub fn load_predictions<R: Read>(source: R) -> AppResult<(Vec<String>, Vec<f64>)> {
    let mut rdr = reader(source);
    let headers = rdr.headers()?.clone();
    let id = position(&headers, "id").ok_or_else(|| AppError::usage("missing column \"id\""))?;
    let pred = position(&headers, "prediction").ok_or_else(|| AppError::usage("missing column \"prediction\""))?;
    let (mut ids, mut values) = (Vec::new(), Vec::new());
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        ids.push(rec.get(id).unwrap_or_default().to_string());
        values.push(field(&rec, pred, "prediction", k + 1)?);
    }
    Ok((ids, values))
}

fn feature_header(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

pub fn write_dataset<W: Write>(sink: W, data: &LoadedData) -> AppResult<()> {
    let mut w = csv::Writer::from_writer(sink);
    let p = data.dataset.feature_dim;
    let mut header = vec!["id".to_string(), "left".into(), "right".into()];
    header.extend(feature_header(p));
    if data.y.is_some() {
        header.push("y".into());
    }
    if data.phi.is_some() {
        header.push("phi".into());
    }
    w.write_record(&header)?;
    for (i, o) in data.dataset.observations.iter().enumerate() {
        let mut rec = vec![data.ids[i].clone(), o.left.to_string(), o.right.to_string()];
        rec.extend(o.features.iter().map(f64::to_string));
        if let Some(y) = &data.y {
            rec.push(y[i].to_string());
        }
        if let Some(phi) = &data.phi {
            rec.push(phi[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_features<W: Write>(sink: W, table: &FeatureTable) -> AppResult<()> {
    let mut w = csv::Writer::from_writer(sink);
    let p = table.rows.first().map_or(0, Vec::len);
    let mut header = vec!["id".to_string()];
    header.extend(feature_header(p));
    if table.phi.is_some() {
        header.push("phi".into());
    }
    w.write_record(&header)?;
    for (i, x) in table.rows.iter().enumerate() {
        let mut rec = vec![table.ids[i].clone()];
        rec.extend(x.iter().map(f64::to_string));
        if let Some(phi) = &table.phi {
            rec.push(phi[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_predictions<W: Write>(sink: W, ids: &[String], values: &[f64]) -> AppResult<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["id", "prediction"])?;
    for (id, v) in ids.iter().zip(values) {
        w.write_record([id.as_str(), &v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Two-column `key,value` table.
pub fn write_pairs<W: Write>(sink: W, header: [&str; 2], rows: &[(String, String)]) -> AppResult<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(header)?;
    for (k, v) in rows {
        w.write_record([k, v])?;
    }
    w.flush()?;
    Ok(())
}

pub fn open(path: &Path) -> AppResult<File> {
    File::open(path).map_err(|e| AppError::usage(format!("cannot open {}: {e}", path.display())))
}

pub fn create(path: &Path) -> AppResult<File> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(File::create(path)?)
}
