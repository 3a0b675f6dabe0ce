//! Dataset CSV ingestion and model JSON persistence (`f64` only).
//!
//! Dataset files are long in time and replicate, wide in genes:
//!
//! ```text
//! replicate,time,<gene1>,...,<geneP>
//! r1,1,0.12,...
//! ```
//!
//! Every (replicate, time) pair must appear exactly once and every
//! replicate must cover the same set of times.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::em::{BudgetMode, FitResult, NonzeroCounts};
use crate::model::{Dataset, Dims, ModelParams};
use crate::selection::{argmin_row, SelectionRow, SelectionTable, SELECTION_CSV_HEADER};
use crate::{NetinfError, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Parses dataset CSV text. Replicates keep first-appearance order; times
/// are sorted ascending. The returned dataset carries `k` in its dims.
pub fn parse_dataset(text: &str, center: bool, k: usize) -> Result<Dataset<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();

    let header = match records.next() {
        Some(rec) => rec?,
        None => return Err(NetinfError::Data("empty dataset file".into())),
    };
    let header: Vec<String> = header.iter().map(|s| s.trim().to_string()).collect();
    if header.len() < 3 || header[0] != "replicate" || header[1] != "time" {
        return Err(NetinfError::Data(
            "header must be replicate,time,<gene1>,...,<geneP>".into(),
        ));
    }
    let genes: Vec<String> = header[2..].to_vec();
    if let Some(i) = genes.iter().position(|g| g.is_empty()) {
        return Err(NetinfError::Data(format!("header column {} has an empty gene name", i + 3)));
    }
    let ncol = header.len();

    let mut rep_order: Vec<String> = Vec::new();
    let mut by_rep: HashMap<String, BTreeMap<TimeKey, (usize, DVector<f64>)>> = HashMap::new();
    for (i, rec) in records.enumerate() {
        let line = i + 2;
        let rec = rec?;
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if rec.len() != ncol {
            return Err(NetinfError::Data(format!(
                "ragged row at line {line}: {} fields, header has {ncol}",
                rec.len()
            )));
        }
        let cell = |c: usize| -> Result<&str> {
            let v = rec[c].trim();
            if v.is_empty() {
                Err(NetinfError::Data(format!(
                    "missing value at line {line}, column '{}'",
                    header[c]
                )))
            } else {
                Ok(v)
            }
        };
        let number = |c: usize| -> Result<f64> {
            let v = cell(c)?;
            match v.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(NetinfError::Data(format!(
                    "non-numeric value '{v}' at line {line}, column '{}'",
                    header[c]
                ))),
            }
        };
        let rep = cell(0)?.to_string();
        let time = number(1)?;
        let y = DVector::from_iterator(genes.len(), (2..ncol).map(number).collect::<Result<Vec<_>>>()?);
        let series = by_rep.entry(rep.clone()).or_insert_with(|| {
            rep_order.push(rep.clone());
            BTreeMap::new()
        });
        if let Some((first, _)) = series.insert(TimeKey(time), (line, y)) {
            return Err(NetinfError::Data(format!(
                "duplicate (replicate, time) pair ({rep}, {time}) at lines {first} and {line}"
            )));
        }
    }
    if rep_order.is_empty() {
        return Err(NetinfError::Data("dataset has no data rows".into()));
    }

    let reference: Vec<TimeKey> = by_rep[&rep_order[0]].keys().copied().collect();
    let mut values = Vec::with_capacity(rep_order.len());
    for rep in &rep_order {
        let series = by_rep.remove(rep).expect("replicate recorded");
        let times: Vec<TimeKey> = series.keys().copied().collect();
        if times != reference {
            let missing = reference
                .iter()
                .find(|t| !series.contains_key(t))
                .map(|t| format!("({rep}, {})", t.0));
            let extra = times
                .iter()
                .find(|t| !reference.contains(t))
                .map(|t| format!("({rep}, {})", t.0));
            return Err(NetinfError::Data(match (missing, extra) {
                (Some(pair), _) => format!("missing (replicate, time) pair {pair}"),
                (None, Some(pair)) => format!(
                    "(replicate, time) pair {pair} has no counterpart in replicate {}",
                    rep_order[0]
                ),
                (None, None) => unreachable!("time sets differ"),
            }));
        }
        values.push(series.into_values().map(|(_, y)| y).collect());
    }
    let data = Dataset::new(values, genes, k)?;
    Ok(if center { data.centered() } else { data })
}

pub fn load_dataset(path: &Path, center: bool, k: usize) -> Result<Dataset<f64>> {
    let text = fs::read_to_string(path)?;
    parse_dataset(&text, center, k)
}

/// Renders a dataset in the CSV format read by [`parse_dataset`]. Replicates
/// are named `r1..rn` and times `1..T`.
pub fn dataset_to_csv(data: &Dataset<f64>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["replicate".to_string(), "time".to_string()];
    header.extend(data.gene_names().iter().cloned());
    w.write_record(&header)?;
    for (r, series) in data.replicates().iter().enumerate() {
        for (t, y) in series.iter().enumerate() {
            let mut row = vec![format!("r{}", r + 1), format!("{}", t + 1)];
            row.extend(y.iter().map(|v| format!("{v}")));
            w.write_record(&row)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| NetinfError::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| NetinfError::Parse(e.to_string()))
}

/// Total order on finite time stamps.
#[derive(Debug, Clone, Copy, PartialEq)]
struct TimeKey(f64);

impl Eq for TimeKey {}

impl PartialOrd for TimeKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for TimeKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub p: usize,
    pub k: usize,
}

/// On-disk model document. Matrices are lists of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: u32,
    pub dims: ModelDims,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gene_names: Option<Vec<String>>,
    #[serde(rename = "F")]
    pub f: Vec<Vec<f64>>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "Z")]
    pub z: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "Q0")]
    pub q0: Vec<Vec<f64>>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn matrix_from_rows(name: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(NetinfError::DimensionMismatch(format!(
            "matrix {name} must be {nrows}x{ncols}"
        )));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl ModelFile {
    pub fn from_params(params: &ModelParams<f64>, gene_names: Option<&[String]>) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            dims: ModelDims { p: params.p(), k: params.k() },
            gene_names: gene_names.map(<[String]>::to_vec),
            f: rows_of(&params.f),
            a: rows_of(&params.a),
            z: rows_of(&params.z),
            b: rows_of(&params.b),
            q0: rows_of(&params.q0),
        }
    }

    pub fn to_params(&self) -> Result<ModelParams<f64>> {
        let ModelDims { p, k } = self.dims;
        if let Some(names) = &self.gene_names {
            if names.len() != p {
                return Err(NetinfError::DimensionMismatch(format!(
                    "{} gene names for p={p}",
                    names.len()
                )));
            }
        }
        let params = ModelParams::new(
            matrix_from_rows("F", &self.f, k, k)?,
            matrix_from_rows("A", &self.a, k, p)?,
            matrix_from_rows("Z", &self.z, p, k)?,
            matrix_from_rows("B", &self.b, p, p)?,
            matrix_from_rows("Q0", &self.q0, k, k)?,
        )?;
        params.validate()?;
        Ok(params)
    }
}

/// Serializes with shortest round-trip decimals, so loading gives back
/// bit-identical matrices.
pub fn model_to_json(params: &ModelParams<f64>, gene_names: Option<&[String]>) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ModelFile::from_params(params, gene_names))? + "\n")
}

/// Parses and validates a model document. Returns the gene names when the
/// document carries them.
pub fn model_from_json(text: &str) -> Result<(ModelParams<f64>, Option<Vec<String>>)> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let version = value
        .get("format_version")
        .ok_or_else(|| NetinfError::Parse("model document has no format_version".into()))?;
    let found = version
        .as_u64()
        .ok_or_else(|| NetinfError::Parse("format_version must be an integer".into()))?;
    if found != u64::from(MODEL_FORMAT_VERSION) {
        return Err(NetinfError::VersionMismatch {
            found: u32::try_from(found).unwrap_or(u32::MAX),
            expected: MODEL_FORMAT_VERSION,
        });
    }
    let file: ModelFile = serde_json::from_value(value)?;
    let params = file.to_params()?;
    Ok((params, file.gene_names))
}

pub fn save_model(params: &ModelParams<f64>, gene_names: Option<&[String]>, path: &Path) -> Result<()> {
    fs::write(path, model_to_json(params, gene_names)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(ModelParams<f64>, Option<Vec<String>>)> {
    model_from_json(&fs::read_to_string(path)?)
}

/// A finished EM run: dims, convergence record and fitted model. Written
/// next to the model so reports can be rebuilt without refitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitRecord {
    pub format_version: u32,
    pub n_times: usize,
    pub n_reps: usize,
    pub initial_loglik: f64,
    pub loglik_trace: Vec<f64>,
    pub n_iter: usize,
    pub converged: bool,
    pub model: ModelFile,
}

impl FitRecord {
    pub fn new(fit: &FitResult<f64>, dims: &Dims, gene_names: Option<&[String]>) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            n_times: dims.n_times,
            n_reps: dims.n_reps,
            initial_loglik: fit.initial_loglik,
            loglik_trace: fit.loglik_trace.clone(),
            n_iter: fit.n_iter,
            converged: fit.converged,
            model: ModelFile::from_params(&fit.params, gene_names),
        }
    }

    /// Rebuilds the fit, its dims and the gene names carried by the model.
    pub fn into_parts(self) -> Result<(FitResult<f64>, Dims, Option<Vec<String>>)> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(NetinfError::VersionMismatch {
                found: self.format_version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let params = self.model.to_params()?;
        let dims = Dims::new(params.p(), params.k(), self.n_times, self.n_reps)?;
        let fit = FitResult {
            nonzero_counts: NonzeroCounts::of(&params),
            params,
            loglik_trace: self.loglik_trace,
            initial_loglik: self.initial_loglik,
            n_iter: self.n_iter,
            converged: self.converged,
        };
        Ok((fit, dims, self.model.gene_names))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Reads a selection table written by [`SelectionTable::to_csv`] and
/// recomputes the selected row. Iteration counts are not stored in the
/// CSV and come back as 0.
pub fn selection_from_csv(text: &str, mode: BudgetMode) -> Result<SelectionTable<f64>> {
    let mut lines = text.lines();
    if lines.next() != Some(SELECTION_CSV_HEADER) {
        return Err(NetinfError::Parse(format!(
            "selection table must start with '{SELECTION_CSV_HEADER}'"
        )));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 10 {
            return Err(NetinfError::Parse(format!("ragged row at line {line_no}")));
        }
        let bad = |col: usize| {
            NetinfError::Parse(format!("bad value '{}' at line {line_no}, column {}", cells[col], col + 1))
        };
        let num = |col: usize| cells[col].parse::<f64>().map_err(|_| bad(col));
        let count = |col: usize| cells[col].parse::<usize>().map_err(|_| bad(col));
        rows.push(SelectionRow {
            penalties: [num(0)?, num(1)?, num(2)?, num(3)?],
            k: count(4)?,
            loglik: num(5)?,
            p_eff: count(6)?,
            n_obs: count(7)?,
            aicc: num(8)?,
            converged: cells[9].parse::<bool>().map_err(|_| bad(9))?,
            n_iter: 0,
        });
    }
    if rows.is_empty() {
        return Err(NetinfError::Parse("selection table has no rows".into()));
    }
    Ok(SelectionTable { best_index: argmin_row(&rows), rows, mode })
}
