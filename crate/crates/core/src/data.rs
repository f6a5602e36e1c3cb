//! Time-ordered count data, time normalization, and batching.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::{Error, Result};

/// Affine map from raw times to the unit interval, fixed by the training data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeScale {
    pub min: f64,
    pub max: f64,
}

impl TimeScale {
    pub fn unit() -> Self {
        Self { min: 0.0, max: 1.0 }
    }

    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) || max < min {
            return Err(Error::Config(format!("invalid time range [{min}, {max}]")));
        }
        Ok(Self { min, max })
    }

    /// Scale spanning the given times.
    pub fn fit<'a>(times: impl IntoIterator<Item = &'a f64>) -> Result<Self> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &t in times {
            lo = lo.min(t);
            hi = hi.max(t);
        }
        if lo > hi {
            return Err(Error::data("cannot fit a time scale to an empty dataset"));
        }
        Self::new(lo, hi)
    }

    fn span(&self) -> f64 {
        let s = self.max - self.min;
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }

    pub fn normalize(&self, t: f64) -> f64 {
        (t - self.min) / self.span()
    }

    pub fn denormalize(&self, u: f64) -> f64 {
        self.min + u * self.span()
    }
}

/// Batch of a normalized time: `[(s-1)/S, s/S)`, with `u = 1` closing batch
/// `S`. Times past 1 continue the grid (`S+1, S+2, ...`).
pub fn batch_of(u: f64, batches: usize) -> Result<usize> {
    if !u.is_finite() || u < 0.0 {
        return Err(Error::data(format!(
            "time maps to {u}, before the start of the model's time axis"
        )));
    }
    let s = batches as f64;
    let idx = (u * s).floor() as usize + 1;
    if u <= 1.0 && idx > batches {
        Ok(batches)
    } else {
        Ok(idx)
    }
}

/// Normalized midpoint `(2s-1)/(2S)` of batch `s`.
pub fn batch_midpoint(s: usize, batches: usize) -> f64 {
    (2.0 * s as f64 - 1.0) / (2.0 * batches as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    /// Position of the row in the input, before sorting.
    pub index: usize,
    /// Raw time as supplied.
    pub time: f64,
    /// Normalized time.
    pub u: f64,
    /// Observed count; absent for rows that only need predictions.
    pub y: Option<u64>,
    /// Values aligned with [`BatchDataset::columns`].
    pub covariates: Vec<f64>,
    pub batch: usize,
}

/// One row as supplied by a caller, before normalization and batching.
#[derive(Clone, Debug, PartialEq)]
pub struct RawRow {
    pub time: f64,
    pub y: Option<u64>,
    pub covariates: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchDataset {
    columns: Vec<String>,
    rows: Vec<Row>,
    scale: TimeScale,
    batches: usize,
    horizon: usize,
}

impl BatchDataset {
    /// Normalizes, sorts (stable, by time) and batches the rows.
    pub fn new(
        columns: Vec<String>,
        raw: Vec<RawRow>,
        scale: TimeScale,
        batches: usize,
    ) -> Result<Self> {
        if batches == 0 {
            return Err(Error::Config("batch count S must be at least 1".into()));
        }
        let mut rows = Vec::with_capacity(raw.len());
        for (i, r) in raw.into_iter().enumerate() {
            if r.covariates.len() != columns.len() {
                return Err(Error::data(format!(
                    "row {i} has {} covariates, expected {}",
                    r.covariates.len(),
                    columns.len()
                )));
            }
            if !r.time.is_finite() || r.covariates.iter().any(|v| !v.is_finite()) {
                return Err(Error::data(format!("row {i} has a non-finite value")));
            }
            let u = scale.normalize(r.time);
            let batch = batch_of(u, batches)?;
            rows.push(Row {
                index: i,
                time: r.time,
                u,
                y: r.y,
                covariates: r.covariates,
                batch,
            });
        }
        rows.sort_by(|a, b| a.time.total_cmp(&b.time));
        let horizon = rows.last().map_or(0, |r| r.batch).max(batches);
        Ok(Self {
            columns,
            rows,
            scale,
            batches,
            horizon,
        })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn scale(&self) -> TimeScale {
        self.scale
    }

    pub fn batches(&self) -> usize {
        self.batches
    }

    /// Last batch a recursion over this dataset runs through: batch `S` or
    /// the last non-empty batch, whichever is later, unless changed by
    /// [`extend_to`](Self::extend_to) or a split.
    pub fn last_batch(&self) -> usize {
        self.horizon
    }

    /// Makes the recursion run through batch `last` even if trailing batches
    /// are empty.
    pub fn extend_to(mut self, last: usize) -> Self {
        self.horizon = self.horizon.max(last);
        self
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Splits into batches `<= k` and `> k`. The head runs through batch `k`.
    pub fn split_at_batch(&self, k: usize) -> (Self, Self) {
        let cut = self.rows.partition_point(|r| r.batch <= k);
        let head = Self {
            columns: self.columns.clone(),
            rows: self.rows[..cut].to_vec(),
            scale: self.scale,
            batches: self.batches,
            horizon: k,
        };
        let tail = Self {
            columns: self.columns.clone(),
            rows: self.rows[cut..].to_vec(),
            scale: self.scale,
            batches: self.batches,
            horizon: self.horizon.max(k),
        };
        (head, tail)
    }

    /// Contiguous row ranges per non-empty batch, in batch order.
    pub fn batch_ranges(&self) -> Vec<(usize, std::ops::Range<usize>)> {
        let mut out: Vec<(usize, std::ops::Range<usize>)> = Vec::new();
        for (i, r) in self.rows.iter().enumerate() {
            match out.last_mut() {
                Some((b, range)) if *b == r.batch => range.end = i + 1,
                _ => out.push((r.batch, i..i + 1)),
            }
        }
        out
    }

    /// Observed counts; errors if any row lacks one.
    pub fn counts(&self) -> Result<Vec<u64>> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r.y.ok_or_else(|| Error::data(format!("row {i} has no observed count")))
            })
            .collect()
    }

    /// Concatenation with another dataset on the same columns and scale.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.columns != other.columns
            || self.scale != other.scale
            || self.batches != other.batches
        {
            return Err(Error::data(
                "datasets differ in columns, time scale, or batch count",
            ));
        }
        let raw = self
            .rows
            .iter()
            .chain(other.rows.iter())
            .map(|r| RawRow {
                time: r.time,
                y: r.y,
                covariates: r.covariates.clone(),
            })
            .collect();
        let ds = Self::new(self.columns.clone(), raw, self.scale, self.batches)?;
        let horizon = ds.horizon.max(self.horizon).max(other.horizon);
        Ok(ds.extend_to(horizon))
    }
}

/// Column roles of a dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub time_column: String,
    pub count_column: String,
    /// Declared binary coding of categorical columns: a cell equal to the
    /// given level becomes 1, any other value 0.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub binary_coding: BTreeMap<String, String>,
}

impl Default for DatasetSchema {
    fn default() -> Self {
        Self {
            time_column: "t".into(),
            count_column: "y".into(),
            binary_coding: BTreeMap::new(),
        }
    }
}

/// How strictly the count column is required when loading.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Counts {
    Required,
    /// Read counts when the column exists.
    Optional,
}

/// Reads a CSV file with a header row. Lines starting with `#` are comments.
///
/// Times are normalized with `scale` when given, otherwise with the file's
/// own min/max. Every malformed row is reported with its line number.
pub fn load_dataset(
    path: impl AsRef<Path>,
    schema: &DatasetSchema,
    config: &ModelConfig,
    scale: Option<TimeScale>,
    counts: Counts,
) -> Result<BatchDataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_dataset(file, schema, config, scale, counts)
}

pub fn read_dataset<R: std::io::Read>(
    reader: R,
    schema: &DatasetSchema,
    config: &ModelConfig,
    scale: Option<TimeScale>,
    counts: Counts,
) -> Result<BatchDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse(format!("cannot read CSV header: {e}")))?
        .clone();
    let find = |name: &str| header.iter().position(|h| h == name);

    let columns = config.covariate_names();
    let mut missing = Vec::new();
    let time_idx = find(&schema.time_column);
    if time_idx.is_none() {
        missing.push(schema.time_column.clone());
    }
    let count_idx = find(&schema.count_column);
    if count_idx.is_none() && counts == Counts::Required {
        missing.push(schema.count_column.clone());
    }
    let cov_idx: Vec<Option<usize>> = columns.iter().map(|c| find(c)).collect();
    for (c, idx) in columns.iter().zip(&cov_idx) {
        if idx.is_none() {
            missing.push(c.clone());
        }
    }
    if !missing.is_empty() {
        return Err(Error::data(format!(
            "missing column(s): {}",
            missing.join(", ")
        )));
    }
    let time_idx = time_idx.unwrap_or_default();

    let mut raw = Vec::new();
    let mut bad_lines = Vec::new();
    let mut first_problem: Option<String> = None;
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let mut problem = None;

        let cell = |i: usize| record.get(i).unwrap_or("");
        let time = parse_real(cell(time_idx));
        let y = match count_idx {
            Some(i) => match parse_count(cell(i)) {
                Ok(y) => Some(y),
                Err(msg) => {
                    problem = Some(format!("column '{}': {msg}", schema.count_column));
                    None
                }
            },
            None => None,
        };
        if time.is_none() {
            problem.get_or_insert(format!(
                "column '{}': not a finite number",
                schema.time_column
            ));
        }
        let mut covs = Vec::with_capacity(columns.len());
        for (name, idx) in columns.iter().zip(&cov_idx) {
            let text = cell(idx.unwrap_or_default());
            let v = match schema.binary_coding.get(name) {
                Some(_) if text.is_empty() => None,
                Some(level) => Some(if text == level { 1.0 } else { 0.0 }),
                None => parse_real(text),
            };
            match v {
                Some(v) => covs.push(v),
                None => {
                    problem.get_or_insert(format!("column '{name}': missing or non-numeric value"));
                }
            }
        }
        match (problem, time) {
            (None, Some(time)) => raw.push(RawRow {
                time,
                y,
                covariates: covs,
            }),
            (p, _) => {
                bad_lines.push(line);
                if first_problem.is_none() {
                    first_problem = p;
                }
            }
        }
    }
    if !bad_lines.is_empty() {
        return Err(Error::Data {
            message: first_problem.unwrap_or_else(|| "malformed row".into()),
            lines: bad_lines,
        });
    }
    let scale = match scale {
        Some(s) => s,
        None if raw.is_empty() => TimeScale::unit(),
        None => TimeScale::fit(raw.iter().map(|r| &r.time))?,
    };
    BatchDataset::new(columns, raw, scale, config.batches)
}

/// Writes rows as CSV (time, count, covariates) in row order, optionally
/// preceded by a `# comment` line.
pub fn write_dataset<W: std::io::Write>(
    mut writer: W,
    dataset: &BatchDataset,
    schema: &DatasetSchema,
    comment: Option<&str>,
) -> Result<()> {
    if let Some(c) = comment {
        writeln!(writer, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![schema.time_column.clone(), schema.count_column.clone()];
    header.extend(dataset.columns().iter().cloned());
    let csv_err = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for r in dataset.rows() {
        let mut rec = vec![
            r.time.to_string(),
            r.y.map_or_else(String::new, |y| y.to_string()),
        ];
        rec.extend(r.covariates.iter().map(f64::to_string));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_real(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn parse_count(s: &str) -> std::result::Result<u64, String> {
    if s.is_empty() {
        return Err("missing value".into());
    }
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    match s.parse::<f64>() {
        Ok(v) if v < 0.0 => Err(format!("negative count {s}")),
        Ok(v) if v.is_finite() && v.fract() == 0.0 && v <= u32::MAX as f64 => Ok(v as u64),
        _ => Err(format!("'{s}' is not a non-negative integer")),
    }
}
