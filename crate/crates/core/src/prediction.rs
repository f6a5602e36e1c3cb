//! Forecasting the state, plug-in intensity prediction, and coefficient
//! band series.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::config::{DesignRow, ModelConfig, SlotKind};
use crate::data::{batch_midpoint, BatchDataset};
use crate::error::{Error, Result};
use crate::family::Family;
use crate::filter::{filter_step, predict_step, prepare_batches, GaussianState, NewtonOptions};
use crate::snapshot::{BatchSummary, ModelSnapshot};

/// State `k` batches ahead: `k` repeated prediction steps.
pub fn k_step_state(
    state: &GaussianState,
    k: usize,
    config: &ModelConfig,
) -> Result<GaussianState> {
    if k == 0 {
        return Err(Error::Argument(
            "forecast horizon must be at least 1".into(),
        ));
    }
    let system = config.system()?;
    let mut s = predict_step(state, &system, config.batches)?;
    for _ in 1..k {
        s = predict_step(&s, &system, config.batches)?;
    }
    Ok(s)
}

/// Plug-in means: the family mean map at the linear predictors of the state
/// mean.
pub fn predict_mean_counts(
    state_mean: &DVector<f64>,
    designs: &[DesignRow],
    family: &Family,
) -> Result<Vec<f64>> {
    designs
        .iter()
        .map(|z| {
            if z.columns().iter().any(|c| c.len() != state_mean.len()) {
                return Err(Error::Argument("design/state dimension mismatch".into()));
            }
            let eta = z.eta(state_mean);
            family.mean(&eta[..family.predictors()])
        })
        .collect()
}

/// Design rows of every dataset row, in dataset order.
pub fn dataset_designs(config: &ModelConfig, dataset: &BatchDataset) -> Result<Vec<DesignRow>> {
    let find = |n: &str| {
        dataset.column_index(n).ok_or_else(|| {
            Error::data(format!("dataset has no column '{n}' required by the model"))
        })
    };
    let mean_idx: Vec<usize> = config.mean.names().map(find).collect::<Result<_>>()?;
    let zero_idx: Vec<usize> = match config.zero_predictor() {
        Some(z) => z.names().map(find).collect::<Result<_>>()?,
        None => Vec::new(),
    };
    dataset
        .rows()
        .iter()
        .map(|r| {
            let xm: Vec<f64> = mean_idx.iter().map(|&j| r.covariates[j]).collect();
            let xz: Vec<f64> = zero_idx.iter().map(|&j| r.covariates[j]).collect();
            config.build_design_row_split(&xm, &xz)
        })
        .collect()
}

/// How states for rows after the snapshot are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForecastMode {
    /// One batch ahead of the latest information: after each batch is
    /// predicted its observed counts are filtered in before moving on.
    Rolling,
    /// Pure forecasts from the snapshot to each row's batch.
    Multistep,
    /// The same `K`-step-ahead state for every row.
    Fixed(usize),
}

/// Per-row predictions for a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionResult {
    pub mode: ForecastMode,
    /// Batch index of every row.
    pub batches: Vec<usize>,
    /// Predicted means, in dataset row order.
    pub means: Vec<f64>,
    /// Plug-in pmf values `P(Y = 0..=k_max)` per row.
    pub pmf: Vec<Vec<f64>>,
    /// Predicted state used for each forecast batch, in batch order.
    pub states: Vec<GaussianState>,
}

/// Predicts every row of `data`.
///
/// Rows at or before the snapshot's batch get in-sample values from the
/// snapshot history's filtered means.
pub fn predict_dataset(
    snapshot: &ModelSnapshot,
    data: &BatchDataset,
    mode: ForecastMode,
    k_max: u64,
) -> Result<PredictionResult> {
    let config = &snapshot.config;
    if data.scale() != snapshot.time_scale {
        return Err(Error::data(
            "data was not normalized with the snapshot's time scale",
        ));
    }
    if let ForecastMode::Fixed(0) = mode {
        return Err(Error::Argument(
            "forecast horizon must be at least 1".into(),
        ));
    }
    let family = config.observation_family()?;
    let designs = dataset_designs(config, data)?;
    let current = snapshot.state.batch_index;
    let system = config.system()?;
    let newton = NewtonOptions::default();

    let fixed = match mode {
        ForecastMode::Fixed(k) => Some(k_step_state(&snapshot.state, k, config)?),
        _ => None,
    };
    let refilter = if mode == ForecastMode::Rolling {
        let future = data.split_at_batch(current).1;
        // Only rows with counts are filtered in.
        let observed: Vec<_> = future
            .rows()
            .iter()
            .filter(|r| r.y.is_some())
            .cloned()
            .collect();
        let raw = observed
            .into_iter()
            .map(|r| crate::data::RawRow {
                time: r.time,
                y: r.y,
                covariates: r.covariates,
            })
            .collect();
        let ds = BatchDataset::new(data.columns().to_vec(), raw, data.scale(), data.batches())?;
        prepare_batches(config, &ds)?
    } else {
        Vec::new()
    };
    let mut pending = refilter.iter().peekable();

    let mut means = Vec::with_capacity(data.len());
    let mut states: Vec<GaussianState> = Vec::new();
    let mut filtered = snapshot.state.clone();
    for (row, design) in data.rows().iter().zip(&designs) {
        let mean_vec: DVector<f64> = if row.batch <= current {
            history_mean(&snapshot.history, row.batch)?
        } else if let Some(state) = &fixed {
            if states.is_empty() {
                states.push(state.clone());
            }
            state.mean.clone()
        } else {
            if states.last().is_none_or(|s| s.batch_index != row.batch) {
                if mode == ForecastMode::Rolling {
                    // Absorb every observed batch before this one.
                    while let Some(b) = pending.next_if(|b| b.index < row.batch) {
                        while filtered.batch_index < b.index {
                            filtered = predict_step(&filtered, &system, config.batches)?;
                        }
                        filtered = filter_step(&family, &filtered, b, &newton)
                            .map_err(|e| e.at_batch(b.index))?
                            .state;
                    }
                }
                let base = if mode == ForecastMode::Rolling {
                    &filtered
                } else {
                    &snapshot.state
                };
                states.push(k_step_state(base, row.batch - base.batch_index, config)?);
            }
            states.last().map(|s| s.mean.clone()).unwrap_or_default()
        };
        means.push(predict_mean_counts(&mean_vec, std::slice::from_ref(design), &family)?[0]);
    }

    let pmf = data
        .rows()
        .iter()
        .zip(&designs)
        .enumerate()
        .map(|(i, (row, design))| {
            let mean_vec = if row.batch <= current {
                history_mean(&snapshot.history, row.batch)
            } else if let Some(state) = &fixed {
                Ok(state.mean.clone())
            } else {
                states
                    .iter()
                    .find(|s| s.batch_index == row.batch)
                    .map(|s| s.mean.clone())
                    .ok_or_else(|| Error::Argument(format!("no forecast state for row {i}")))
            }?;
            let eta = design.eta(&mean_vec);
            (0..=k_max)
                .map(|k| family.pmf(k, &eta[..family.predictors()]))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(PredictionResult {
        mode,
        batches: data.rows().iter().map(|r| r.batch).collect(),
        means,
        pmf,
        states,
    })
}

fn history_mean(history: &[BatchSummary], batch: usize) -> Result<DVector<f64>> {
    history
        .iter()
        .rev()
        .find(|h| h.batch_index == batch)
        .map(|h| DVector::from_column_slice(&h.mean))
        .ok_or_else(|| {
            Error::Sequencing(format!(
                "row falls in batch {batch}, which the snapshot has no record of"
            ))
        })
}

/// Normal quantile multiplier `z_{(1+level)/2}`.
pub fn band_multiplier(level: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&level) {
        return Err(Error::Argument(format!(
            "band level must lie in [0, 1), got {level}"
        )));
    }
    if level == 0.0 {
        return Ok(0.0);
    }
    let normal = Normal::standard();
    Ok(normal.inverse_cdf((1.0 + level) / 2.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandKind {
    Filtered,
    Forecast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandPoint {
    pub batch: usize,
    /// Normalized time of the batch midpoint.
    pub t: f64,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub kind: BandKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientBand {
    pub name: String,
    pub slot: SlotKind,
    pub points: Vec<BandPoint>,
}

/// Pointwise bands `mean ± z sd` for every coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientBandSeries {
    pub level: f64,
    pub coefficients: Vec<CoefficientBand>,
}

/// One state's contribution to a band series.
#[derive(Clone, Copy, Debug)]
pub struct BandInput<'a> {
    pub batch: usize,
    pub mean: &'a [f64],
    pub variance: &'a [f64],
    pub kind: BandKind,
}

impl<'a> BandInput<'a> {
    pub fn summary(h: &'a BatchSummary) -> Self {
        Self {
            batch: h.batch_index,
            mean: &h.mean,
            variance: &h.cov_diagonal,
            kind: BandKind::Filtered,
        }
    }
}

/// Builds band series from filtered and forecast states. Inputs must be in
/// strictly increasing batch order.
pub fn coefficient_bands(
    config: &ModelConfig,
    inputs: &[BandInput<'_>],
    level: f64,
) -> Result<CoefficientBandSeries> {
    let z = band_multiplier(level)?;
    if inputs.windows(2).any(|w| w[0].batch >= w[1].batch) {
        return Err(Error::Argument(
            "band inputs must be in increasing batch order".into(),
        ));
    }
    let d = config.state_dimension();
    if inputs
        .iter()
        .any(|i| i.mean.len() != d || i.variance.len() != d)
    {
        return Err(Error::Argument("band input dimension mismatch".into()));
    }
    let layout = config.layout();
    let coefficients = layout
        .coefficients()
        .map(|slot| CoefficientBand {
            name: slot.name.clone(),
            slot: slot.kind,
            points: inputs
                .iter()
                .map(|inp| {
                    let m = inp.mean[slot.index];
                    let half = z * inp.variance[slot.index].max(0.0).sqrt();
                    BandPoint {
                        batch: inp.batch,
                        t: batch_midpoint(inp.batch, config.batches),
                        mean: m,
                        lower: m - half,
                        upper: m + half,
                        kind: inp.kind,
                    }
                })
                .collect(),
        })
        .collect();
    Ok(CoefficientBandSeries {
        level,
        coefficients,
    })
}

/// Bands over the snapshot history followed by `horizon` pure forecast
/// batches.
pub fn snapshot_bands(
    snapshot: &ModelSnapshot,
    horizon: usize,
    level: f64,
) -> Result<CoefficientBandSeries> {
    let mut forecasts = Vec::with_capacity(horizon);
    let mut s = snapshot.state.clone();
    for _ in 0..horizon {
        s = k_step_state(&s, 1, &snapshot.config)?;
        forecasts.push((s.batch_index, s.mean.as_slice().to_vec(), s.cov_diagonal()));
    }
    let mut inputs: Vec<BandInput<'_>> = snapshot.history.iter().map(BandInput::summary).collect();
    inputs.extend(forecasts.iter().map(|(b, m, v)| BandInput {
        batch: *b,
        mean: m,
        variance: v,
        kind: BandKind::Forecast,
    }));
    coefficient_bands(&snapshot.config, &inputs, level)
}
