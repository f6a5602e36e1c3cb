//! Batch Kalman recursion with a Laplace (posterior-mode) filtering step.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::config::{ModelConfig, SystemMatrices};
use crate::data::{batch_midpoint, BatchDataset};
use crate::error::{Error, Result};
use crate::family::{EtaDerivs, Obs, ObservationModel};
use crate::smoothing::batch_predictive_loglik;
use crate::snapshot::{BatchSummary, ModelSnapshot};

const JITTER: f64 = 1e-8;

/// Gaussian belief about the state at the midpoint of a batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StateRecord", into = "StateRecord")]
pub struct GaussianState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// 0 before any data.
    pub batch_index: usize,
    /// Normalized time of the batch midpoint.
    pub timepoint: f64,
}

#[derive(Serialize, Deserialize)]
struct StateRecord {
    batch_index: usize,
    timepoint: f64,
    mean: Vec<f64>,
    /// Row-major.
    cov: Vec<f64>,
}

impl From<GaussianState> for StateRecord {
    fn from(s: GaussianState) -> Self {
        Self {
            batch_index: s.batch_index,
            timepoint: s.timepoint,
            mean: s.mean.as_slice().to_vec(),
            cov: s.cov.transpose().as_slice().to_vec(),
        }
    }
}

impl TryFrom<StateRecord> for GaussianState {
    type Error = String;

    fn try_from(r: StateRecord) -> std::result::Result<Self, String> {
        let d = r.mean.len();
        if r.cov.len() != d * d {
            return Err(format!(
                "covariance has {} entries, expected {}",
                r.cov.len(),
                d * d
            ));
        }
        Ok(Self {
            mean: DVector::from_vec(r.mean),
            cov: DMatrix::from_row_slice(d, d, &r.cov),
            batch_index: r.batch_index,
            timepoint: r.timepoint,
        })
    }
}

impl GaussianState {
    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    pub fn cov_diagonal(&self) -> Vec<f64> {
        self.cov.diagonal().as_slice().to_vec()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub max_iter: usize,
    /// Converged when `max |step_i| / (1 + |gamma_i|)` falls below this.
    pub tolerance: f64,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tolerance: 1e-8,
            max_halvings: 20,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterOptions {
    pub newton: NewtonOptions,
    /// Also accumulate the per-batch predictive log-likelihood.
    pub predictive: bool,
}

impl Default for FilterOptions {
    fn default() -> Self {
        Self {
            newton: NewtonOptions::default(),
            predictive: true,
        }
    }
}

/// Observations of one batch with their design rows stacked as matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedBatch {
    pub index: usize,
    pub obs: Vec<Obs>,
    /// `n x d` design of the first linear predictor.
    pub count: DMatrix<f64>,
    /// `n x d` design of the second linear predictor (ZIP only).
    pub zero: Option<DMatrix<f64>>,
}

impl PreparedBatch {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub(crate) fn predictors(&self) -> usize {
        if self.zero.is_some() {
            2
        } else {
            1
        }
    }

    /// Linear predictors of row `i`.
    pub(crate) fn eta(&self, i: usize, gamma: &DVector<f64>) -> [f64; 2] {
        let e0 = self.count.row(i).transpose().dot(gamma);
        let e1 = self
            .zero
            .as_ref()
            .map_or(0.0, |z| z.row(i).transpose().dot(gamma));
        [e0, e1]
    }
}

/// Groups the dataset's rows into prepared batches (non-empty batches only).
pub fn prepare_batches(config: &ModelConfig, dataset: &BatchDataset) -> Result<Vec<PreparedBatch>> {
    config.validate()?;
    let d = config.state_dimension();
    let columns = dataset.columns();
    let locate = |names: Vec<&str>| -> Result<Vec<usize>> {
        names
            .into_iter()
            .map(|n| {
                columns.iter().position(|c| c == n).ok_or_else(|| {
                    Error::data(format!("dataset has no column '{n}' required by the model"))
                })
            })
            .collect()
    };
    let mean_idx = locate(config.mean.names().collect())?;
    let zero_idx = match config.zero_predictor() {
        Some(z) => Some(locate(z.names().collect())?),
        None => None,
    };

    let mut out = Vec::new();
    for (index, range) in dataset.batch_ranges() {
        let rows = &dataset.rows()[range];
        let n = rows.len();
        let mut count = DMatrix::zeros(n, d);
        let mut zero = zero_idx.as_ref().map(|_| DMatrix::zeros(n, d));
        let mut obs = Vec::with_capacity(n);
        let mut xm = vec![0.0; mean_idx.len()];
        let mut xz = vec![0.0; zero_idx.as_ref().map_or(0, Vec::len)];
        for (i, row) in rows.iter().enumerate() {
            let y = row.y.ok_or_else(|| {
                Error::data(format!("row at time {} has no observed count", row.time))
            })?;
            obs.push(Obs::count(y));
            for (slot, &j) in xm.iter_mut().zip(&mean_idx) {
                *slot = row.covariates[j];
            }
            if let Some(zi) = &zero_idx {
                for (slot, &j) in xz.iter_mut().zip(zi) {
                    *slot = row.covariates[j];
                }
            }
            let design = config.build_design_row_split(&xm, &xz)?;
            let cols = design.columns();
            count.row_mut(i).copy_from(&cols[0].transpose());
            if let Some(z) = zero.as_mut() {
                z.row_mut(i).copy_from(&cols[1].transpose());
            }
        }
        out.push(PreparedBatch {
            index,
            obs,
            count,
            zero,
        });
    }
    Ok(out)
}

/// Diffuse initial state `N(0, cI)` at batch 0.
pub fn init_state(config: &ModelConfig) -> GaussianState {
    let d = config.state_dimension();
    GaussianState {
        mean: DVector::zeros(d),
        cov: DMatrix::identity(d, d) * config.prior_scale,
        batch_index: 0,
        timepoint: batch_midpoint(0, config.batches),
    }
}

/// `mean <- T mean`, `cov <- T cov T' + Q`, advanced by one batch.
pub fn predict_step(
    state: &GaussianState,
    system: &SystemMatrices,
    batches: usize,
) -> Result<GaussianState> {
    let t = &system.transition;
    let d = state.dimension();
    if t.shape() != (d, d) || system.noise.shape() != (d, d) {
        return Err(Error::Argument(format!(
            "system matrices do not match state dimension {d}"
        )));
    }
    let cov = t * &state.cov * t.transpose() + &system.noise;
    Ok(GaussianState {
        mean: t * &state.mean,
        cov: symmetrize(cov),
        batch_index: state.batch_index + 1,
        timepoint: batch_midpoint(state.batch_index + 1, batches),
    })
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Cholesky factor, retried once with `1e-8 * I` added.
pub(crate) fn spd_factor(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).or_else(|| {
        let n = m.nrows();
        Cholesky::new(m + DMatrix::identity(n, n) * JITTER)
    })
}

/// Result of a filtering step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub state: GaussianState,
    pub iterations: usize,
    /// Whether any linear predictor was clamped at the mode.
    pub clamped: bool,
    /// Laplace approximation of the log marginal likelihood of the whole
    /// batch under the prior.
    pub log_evidence: f64,
}

struct Objective<'a, M> {
    model: &'a M,
    batch: &'a PreparedBatch,
    prior_mean: &'a DVector<f64>,
    precision: DMatrix<f64>,
}

struct Evaluation {
    value: f64,
    loglik: f64,
    grad: DVector<f64>,
    neg_hess: DMatrix<f64>,
    clamped: bool,
}

impl<M: ObservationModel> Objective<'_, M> {
    fn derivs(&self, i: usize, gamma: &DVector<f64>) -> EtaDerivs {
        self.model
            .eval(&self.batch.obs[i], self.batch.eta(i, gamma))
    }

    fn prior_term(&self, gamma: &DVector<f64>) -> (DVector<f64>, f64) {
        let diff = gamma - self.prior_mean;
        let pd = &self.precision * &diff;
        let quad = diff.dot(&pd);
        (pd, -0.5 * quad)
    }

    fn value(&self, gamma: &DVector<f64>) -> f64 {
        let loglik: f64 = (0..self.batch.len())
            .map(|i| self.derivs(i, gamma).loglik)
            .sum();
        loglik + self.prior_term(gamma).1
    }

    fn evaluate(&self, gamma: &DVector<f64>) -> Evaluation {
        let d = gamma.len();
        let mut grad = DVector::zeros(d);
        let mut neg_hess = self.precision.clone();
        let mut loglik = 0.0;
        let mut clamped = false;
        let b = self.batch;
        for i in 0..b.len() {
            let e = self.derivs(i, gamma);
            loglik += e.loglik;
            clamped |= e.clamped;
            let zc = b.count.row(i).transpose();
            grad.axpy(e.grad[0], &zc, 1.0);
            neg_hess.ger(-e.hess[0][0], &zc, &zc, 1.0);
            if let Some(zz) = &b.zero {
                let zz = zz.row(i).transpose();
                grad.axpy(e.grad[1], &zz, 1.0);
                neg_hess.ger(-e.hess[0][1], &zc, &zz, 1.0);
                neg_hess.ger(-e.hess[1][0], &zz, &zc, 1.0);
                neg_hess.ger(-e.hess[1][1], &zz, &zz, 1.0);
            }
        }
        let (pd, prior) = self.prior_term(gamma);
        grad -= pd;
        Evaluation {
            value: loglik + prior,
            loglik,
            grad,
            neg_hess,
            clamped,
        }
    }
}

/// Posterior mode and curvature of one batch given its predicted state.
///
/// Newton-Raphson on `sum loglik + log prior` from the prior mean, with
/// step-halving whenever the objective does not increase. An empty batch
/// returns the predicted state unchanged.
pub fn filter_step<M: ObservationModel>(
    model: &M,
    prior: &GaussianState,
    batch: &PreparedBatch,
    options: &NewtonOptions,
) -> Result<StepOutcome> {
    if batch.is_empty() {
        return Ok(StepOutcome {
            state: prior.clone(),
            iterations: 0,
            clamped: false,
            log_evidence: 0.0,
        });
    }
    let d = prior.dimension();
    if batch.count.ncols() != d || batch.zero.as_ref().is_some_and(|z| z.ncols() != d) {
        return Err(Error::Argument(format!(
            "batch design does not match state dimension {d}"
        )));
    }
    if batch.predictors() != model.predictors() {
        return Err(Error::Argument(format!(
            "observation model expects {} linear predictor(s), batch has {}",
            model.predictors(),
            batch.predictors()
        )));
    }
    let prior_chol = spd_factor(&prior.cov)
        .ok_or_else(|| Error::numeric("predicted covariance is not positive definite"))?;
    let objective = Objective {
        model,
        batch,
        prior_mean: &prior.mean,
        precision: prior_chol.inverse(),
    };

    let mut gamma = prior.mean.clone();
    let mut current = objective.evaluate(&gamma);
    if !current.value.is_finite() {
        return Err(Error::numeric(
            "log posterior is not finite at the prior mean",
        ));
    }
    let mut iterations = 0;
    let mut converged = false;
    while iterations < options.max_iter {
        iterations += 1;
        // Away from the mode a non-concave likelihood (ZIP) can make the
        // negative Hessian indefinite; fall back to a prior-scaled gradient.
        let step = match spd_factor(&current.neg_hess) {
            Some(ch) => ch.solve(&current.grad),
            None => &prior.cov * &current.grad,
        };
        if step.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("Newton step is not finite"));
        }
        let small = step
            .iter()
            .zip(gamma.iter())
            .all(|(s, g)| s.abs() / (1.0 + g.abs()) < options.tolerance);

        let slack = 1e-12 * (1.0 + current.value.abs());
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=options.max_halvings {
            let candidate = &gamma + &step * scale;
            let v = objective.value(&candidate);
            if v.is_finite() && v >= current.value - slack {
                accepted = Some(candidate);
                break;
            }
            scale *= 0.5;
        }
        match accepted {
            Some(candidate) => {
                gamma = candidate;
                current = objective.evaluate(&gamma);
            }
            // No ascent along the Newton direction at working precision.
            None => {
                converged = small || max_relative(&current.grad, &gamma) < options.tolerance;
                break;
            }
        }
        if small {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Convergence {
            iterations,
            batch: Some(batch.index),
            last_iterate: gamma.as_slice().to_vec(),
        });
    }

    let chol = spd_factor(&current.neg_hess).ok_or_else(|| {
        Error::numeric("negative Hessian of the log posterior is not positive definite at the mode")
    })?;
    let cov = symmetrize(chol.inverse());
    let log_det_cov = -2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let log_det_prior = 2.0
        * prior_chol
            .l()
            .diagonal()
            .iter()
            .map(|v| v.ln())
            .sum::<f64>();
    let prior_quad = current.value - current.loglik;
    let log_evidence = current.loglik + prior_quad + 0.5 * (log_det_cov - log_det_prior);
    Ok(StepOutcome {
        state: GaussianState {
            mean: gamma,
            cov,
            batch_index: prior.batch_index,
            timepoint: prior.timepoint,
        },
        iterations,
        clamped: current.clamped,
        log_evidence,
    })
}

fn max_relative(v: &DVector<f64>, gamma: &DVector<f64>) -> f64 {
    v.iter()
        .zip(gamma.iter())
        .map(|(s, g)| s.abs() / (1.0 + g.abs()))
        .fold(0.0, f64::max)
}

/// One processed batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStep {
    pub predicted: GaussianState,
    pub filtered: GaussianState,
    /// Sum of per-observation predictive log-likelihoods; `None` for empty
    /// batches or when not requested.
    pub predictive_loglik: Option<f64>,
    pub iterations: usize,
    pub observations: usize,
    pub clamped: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FilterTrace {
    pub steps: Vec<BatchStep>,
}

impl FilterTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Total predictive log-likelihood over the processed batches.
    pub fn predictive_loglik(&self) -> f64 {
        self.steps.iter().filter_map(|s| s.predictive_loglik).sum()
    }

    pub fn iterations(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.iterations).collect()
    }

    pub fn summaries(&self) -> Vec<BatchSummary> {
        self.steps
            .iter()
            .map(|s| BatchSummary {
                batch_index: s.filtered.batch_index,
                mean: s.filtered.mean.as_slice().to_vec(),
                cov_diagonal: s.filtered.cov_diagonal(),
                predictive_loglik: s.predictive_loglik,
                iterations: s.iterations,
                observations: s.observations,
            })
            .collect()
    }
}

/// Runs predict/filter from `start` through batch `through`.
///
/// `batches` must be sorted by index and lie strictly after `start`; batch
/// indices without an entry are empty (pure prediction).
pub fn run_filter<M: ObservationModel>(
    model: &M,
    system: &SystemMatrices,
    start: GaussianState,
    batches: &[PreparedBatch],
    through: usize,
    batch_count: usize,
    options: &FilterOptions,
) -> Result<(GaussianState, FilterTrace)> {
    let mut state = start;
    if let Some(first) = batches.first() {
        if first.index <= state.batch_index {
            return Err(Error::Sequencing(format!(
                "batch {} is not after the current batch {}",
                first.index, state.batch_index
            )));
        }
    }
    if batches.windows(2).any(|w| w[0].index >= w[1].index) {
        return Err(Error::Sequencing(
            "batches are not strictly increasing".into(),
        ));
    }
    let through = through.max(batches.last().map_or(0, |b| b.index));
    let mut trace = FilterTrace::default();
    let mut pending = batches.iter().peekable();
    while state.batch_index < through {
        let predicted = predict_step(&state, system, batch_count)?;
        let s = predicted.batch_index;
        let step = match pending.next_if(|b| b.index == s) {
            Some(batch) => {
                let predictive = if options.predictive {
                    Some(batch_predictive_loglik(
                        model,
                        &predicted,
                        batch,
                        &options.newton,
                    ))
                } else {
                    None
                };
                let out = filter_step(model, &predicted, batch, &options.newton)
                    .map_err(|e| e.at_batch(s))?;
                BatchStep {
                    predicted,
                    filtered: out.state,
                    predictive_loglik: predictive,
                    iterations: out.iterations,
                    observations: batch.len(),
                    clamped: out.clamped,
                }
            }
            None => BatchStep {
                filtered: predicted.clone(),
                predicted,
                predictive_loglik: None,
                iterations: 0,
                observations: 0,
                clamped: false,
            },
        };
        state = step.filtered.clone();
        trace.steps.push(step);
    }
    Ok((state, trace))
}

/// Snapshot and per-batch trace of a fit or update.
#[derive(Clone, Debug, PartialEq)]
pub struct FitOutput {
    pub snapshot: ModelSnapshot,
    pub trace: FilterTrace,
}

/// Runs the recursion over the whole dataset from the diffuse prior with the
/// config's smoothing parameters.
pub fn fit(dataset: &BatchDataset, config: &ModelConfig) -> Result<FitOutput> {
    fit_with(dataset, config, &FilterOptions::default())
}

pub fn fit_with(
    dataset: &BatchDataset,
    config: &ModelConfig,
    options: &FilterOptions,
) -> Result<FitOutput> {
    if dataset.batches() != config.batches {
        return Err(Error::Config(format!(
            "dataset uses {} batches, config {}",
            dataset.batches(),
            config.batches
        )));
    }
    let family = config.observation_family()?;
    let system = config.system()?;
    let batches = prepare_batches(config, dataset)?;
    let (state, trace) = run_filter(
        &family,
        &system,
        init_state(config),
        &batches,
        dataset.last_batch(),
        config.batches,
        options,
    )?;
    let snapshot = ModelSnapshot::new(config.clone(), dataset.scale(), state, trace.summaries());
    Ok(FitOutput { snapshot, trace })
}

/// Continues the recursion of `snapshot` over later batches. Smoothing
/// parameters are kept.
pub fn update(snapshot: &ModelSnapshot, new_data: &BatchDataset) -> Result<FitOutput> {
    update_with(snapshot, new_data, &FilterOptions::default())
}

pub fn update_with(
    snapshot: &ModelSnapshot,
    new_data: &BatchDataset,
    options: &FilterOptions,
) -> Result<FitOutput> {
    let config = &snapshot.config;
    if new_data.is_empty() {
        return Ok(FitOutput {
            snapshot: snapshot.clone(),
            trace: FilterTrace::default(),
        });
    }
    if new_data.scale() != snapshot.time_scale {
        return Err(Error::data(
            "new data was not normalized with the snapshot's time scale",
        ));
    }
    let current = snapshot.state.batch_index;
    let stale: Vec<&crate::data::Row> = new_data
        .rows()
        .iter()
        .filter(|r| r.batch <= current)
        .collect();
    if let Some(r) = stale.first() {
        return Err(Error::Sequencing(format!(
            "{} row(s) fall in batch {} or earlier (first at time {}), but the snapshot is already at batch {current}",
            stale.len(),
            r.batch,
            r.time
        )));
    }
    let family = config.observation_family()?;
    let system = config.system()?;
    let batches = prepare_batches(config, new_data)?;
    let through = batches.last().map_or(current, |b| b.index);
    let (state, trace) = run_filter(
        &family,
        &system,
        snapshot.state.clone(),
        &batches,
        through,
        config.batches,
        options,
    )?;
    let mut next = snapshot.clone();
    next.state = state;
    next.history.extend(trace.summaries());
    Ok(FitOutput {
        snapshot: next,
        trace,
    })
}
