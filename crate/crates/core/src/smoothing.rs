//! Laplace-approximated predictive log-likelihood and the search over
//! smoothing parameters (and negative-binomial dispersion).

use serde::{Deserialize, Serialize};

use crate::config::{FamilyKind, ModelConfig};
use crate::data::BatchDataset;
use crate::error::{Error, Result};
use crate::family::{Obs, ObservationModel};
use crate::filter::{
    fit_with, prepare_batches, FilterOptions, FitOutput, GaussianState, NewtonOptions,
    PreparedBatch,
};
use crate::optim::{self, Interval, SimplexOptions};
use crate::snapshot::ModelSnapshot;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Grid pass only.
    Grid,
    /// Grid pass, then simplex refinement from the best grid point.
    Simplex,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothingSearchConfig {
    /// Bounds of `log10 tau` (shared by every smoothing parameter).
    pub log10_tau: [f64; 2],
    /// Bounds of `log10 alpha` for the negative-binomial dispersion.
    pub log10_alpha: [f64; 2],
    pub optimizer: Optimizer,
    /// Grid points per axis.
    pub grid_points: usize,
    /// Simplex stopping distance in log10 units.
    pub tolerance: f64,
    pub max_evaluations: usize,
}

impl Default for SmoothingSearchConfig {
    fn default() -> Self {
        Self {
            log10_tau: [-4.0, 8.0],
            log10_alpha: [-2.0, 4.0],
            optimizer: Optimizer::Simplex,
            grid_points: 5,
            tolerance: 1e-3,
            max_evaluations: 200,
        }
    }
}

impl SmoothingSearchConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in [
            ("log10_tau", self.log10_tau),
            ("log10_alpha", self.log10_alpha),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!(
                    "search bounds {name} = [{lo}, {hi}] must be finite with low < high"
                )));
            }
        }
        if self.grid_points < 2 {
            return Err(Error::Config("grid resolution must be at least 2".into()));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::Config("simplex tolerance must be positive".into()));
        }
        if self.max_evaluations == 0 {
            return Err(Error::Config("max_evaluations must be positive".into()));
        }
        Ok(())
    }

    fn bounds(&self, config: &ModelConfig) -> Vec<Interval> {
        let tau = Interval {
            low: self.log10_tau[0],
            high: self.log10_tau[1],
        };
        let mut b = vec![tau; config.tau_len()];
        if config.family == FamilyKind::Nb {
            b.push(Interval {
                low: self.log10_alpha[0],
                high: self.log10_alpha[1],
            });
        }
        b
    }
}

/// Outcome of [`select_smoothing`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub tau: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nb_alpha: Option<f64>,
    /// Objective at the returned point.
    pub predictive_loglik: f64,
    pub evaluations: usize,
    /// Per search coordinate: whether the optimum sits on a search bound.
    pub at_bound: Vec<bool>,
}

impl Selection {
    /// `config` with the selected parameters.
    pub fn apply(&self, config: &ModelConfig) -> Result<ModelConfig> {
        let mut c = config.clone().with_tau(self.tau.clone())?;
        if let Some(a) = self.nb_alpha {
            c = c.with_nb_alpha(a)?;
        }
        Ok(c)
    }
}

/// Sum over batches and observations of the Laplace-approximated
/// `log p(y_i | data of earlier batches)` with the given smoothing
/// parameters (and the config's dispersion).
pub fn predictive_loglik(dataset: &BatchDataset, config: &ModelConfig, tau: &[f64]) -> Result<f64> {
    let config = config.clone().with_tau(tau.to_vec())?;
    let out = fit_with(dataset, &config, &FilterOptions::default())?;
    Ok(out.trace.predictive_loglik())
}

/// Predictive log-likelihood of every observation in `batch` against the
/// predicted state, each conditioned on earlier batches only. Returns
/// negative infinity if any term cannot be computed.
pub fn batch_predictive_loglik<M: ObservationModel>(
    model: &M,
    prior: &GaussianState,
    batch: &PreparedBatch,
    options: &NewtonOptions,
) -> f64 {
    let p = &prior.cov;
    let pc = &batch.count * p;
    let pz = batch.zero.as_ref().map(|z| z * p);
    let mut total = 0.0;
    for i in 0..batch.len() {
        let zc = batch.count.row(i);
        let a0 = zc.dot(&prior.mean.transpose());
        let w00 = pc.row(i).dot(&zc);
        let (a1, w01, w11) = match (&batch.zero, &pz) {
            (Some(z), Some(pz)) => {
                let zz = z.row(i);
                (
                    zz.dot(&prior.mean.transpose()),
                    pc.row(i).dot(&zz),
                    pz.row(i).dot(&zz),
                )
            }
            _ => (0.0, 0.0, 0.0),
        };
        let prior_eta = PredictorPrior {
            mean: [a0, a1],
            cov: [[w00, w01], [w01, w11]],
            dims: model.predictors(),
        };
        match observation_term(model, &batch.obs[i], &prior_eta, options) {
            Some(v) => total += v,
            None => return f64::NEG_INFINITY,
        }
    }
    total
}

/// Gaussian prior of the linear predictor(s) of one observation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredictorPrior {
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
    /// 1 or 2; with 1 only the leading entries are used.
    pub dims: usize,
}

/// Laplace approximation of `log ∫ p(y | eta) N(eta; a, W) d eta`.
///
/// Equal to the same approximation over the full state, since the
/// likelihood only sees the state through the linear predictor(s):
/// `l(eta*) - (eta*-a)' W^{-1} (eta*-a) / 2 - log det(I + W H) / 2` with
/// `H` the negative Hessian of `l` at the mode.
pub fn observation_term<M: ObservationModel>(
    model: &M,
    obs: &Obs,
    prior: &PredictorPrior,
    options: &NewtonOptions,
) -> Option<f64> {
    let a = prior.mean;
    // For a single predictor pad the second coordinate with an independent
    // unit-variance component the likelihood does not touch; it contributes
    // nothing to the result.
    let w = if prior.dims == 1 {
        [[prior.cov[0][0], 0.0], [0.0, 1.0]]
    } else {
        prior.cov
    };
    let det_w = w[0][0] * w[1][1] - w[0][1] * w[1][0];
    if !(w[0][0] > 0.0 && det_w > 0.0) {
        // Degenerate prior: the predictor is known exactly.
        if prior.dims == 1 && w[0][0] == 0.0 {
            let v = model.eval(obs, [a[0], 0.0]).loglik;
            return v.is_finite().then_some(v);
        }
        return None;
    }
    let prec = [
        [w[1][1] / det_w, -w[0][1] / det_w],
        [-w[1][0] / det_w, w[0][0] / det_w],
    ];
    let one = prior.dims == 1;
    let eval = |eta: [f64; 2]| {
        let mut e = model.eval(obs, eta);
        if one {
            e.grad[1] = 0.0;
            e.hess = [[e.hess[0][0], 0.0], [0.0, 0.0]];
        }
        e
    };
    let objective = |eta: [f64; 2], loglik: f64| {
        let d = [eta[0] - a[0], eta[1] - a[1]];
        loglik - 0.5 * quad(&prec, d)
    };

    let mut eta = a;
    let mut e = eval(eta);
    let mut value = objective(eta, e.loglik);
    if !value.is_finite() {
        return None;
    }
    let mut converged = false;
    for _ in 0..options.max_iter {
        let d = [eta[0] - a[0], eta[1] - a[1]];
        let g = [
            e.grad[0] - (prec[0][0] * d[0] + prec[0][1] * d[1]),
            e.grad[1] - (prec[1][0] * d[0] + prec[1][1] * d[1]),
        ];
        let nh = neg_hess(&e.hess, &prec);
        let step = solve_spd(&nh, g).unwrap_or_else(|| {
            [
                w[0][0] * g[0] + w[0][1] * g[1],
                w[1][0] * g[0] + w[1][1] * g[1],
            ]
        });
        if !(step[0].is_finite() && step[1].is_finite()) {
            return None;
        }
        let small = (0..2).all(|j| step[j].abs() / (1.0 + eta[j].abs()) < options.tolerance);
        let slack = 1e-12 * (1.0 + value.abs());
        let mut scale = 1.0;
        let mut moved = false;
        for _ in 0..=options.max_halvings {
            let cand = [eta[0] + scale * step[0], eta[1] + scale * step[1]];
            let ec = eval(cand);
            let vc = objective(cand, ec.loglik);
            if vc.is_finite() && vc >= value - slack {
                eta = cand;
                e = ec;
                value = vc;
                moved = true;
                break;
            }
            scale *= 0.5;
        }
        if small || !moved {
            converged = small || g.iter().all(|v| v.abs() < options.tolerance);
            break;
        }
    }
    if !converged {
        return None;
    }
    let h = [
        [-e.hess[0][0], -e.hess[0][1]],
        [-e.hess[1][0], -e.hess[1][1]],
    ];
    // I + W H
    let m = [
        [
            1.0 + w[0][0] * h[0][0] + w[0][1] * h[1][0],
            w[0][0] * h[0][1] + w[0][1] * h[1][1],
        ],
        [
            w[1][0] * h[0][0] + w[1][1] * h[1][0],
            1.0 + w[1][0] * h[0][1] + w[1][1] * h[1][1],
        ],
    ];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if !(det > 0.0) || solve_spd(&neg_hess(&e.hess, &prec), [0.0, 0.0]).is_none() {
        return None;
    }
    let v = value - 0.5 * det.ln();
    v.is_finite().then_some(v)
}

fn quad(m: &[[f64; 2]; 2], d: [f64; 2]) -> f64 {
    d[0] * (m[0][0] * d[0] + m[0][1] * d[1]) + d[1] * (m[1][0] * d[0] + m[1][1] * d[1])
}

fn neg_hess(hess: &[[f64; 2]; 2], prec: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            out[r][c] = prec[r][c] - hess[r][c];
        }
    }
    out
}

/// Solves a 2x2 system when the matrix is positive definite.
fn solve_spd(m: &[[f64; 2]; 2], b: [f64; 2]) -> Option<[f64; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if !(m[0][0] > 0.0 && det > 0.0 && det.is_finite()) {
        return None;
    }
    Some([
        (m[1][1] * b[0] - m[0][1] * b[1]) / det,
        (m[0][0] * b[1] - m[1][0] * b[0]) / det,
    ])
}

fn to_params(config: &ModelConfig, theta: &[f64]) -> (Vec<f64>, Option<f64>) {
    let k = config.tau_len();
    let tau = theta[..k].iter().map(|v| 10f64.powf(*v)).collect();
    let alpha = (config.family == FamilyKind::Nb).then(|| 10f64.powf(theta[k]));
    (tau, alpha)
}

fn objective_at(
    dataset: &BatchDataset,
    base: &ModelConfig,
    batches: &[PreparedBatch],
    theta: &[f64],
) -> f64 {
    let (tau, alpha) = to_params(base, theta);
    let Ok(mut config) = base.clone().with_tau(tau) else {
        return f64::NEG_INFINITY;
    };
    if let Some(a) = alpha {
        match config.with_nb_alpha(a) {
            Ok(c) => config = c,
            Err(_) => return f64::NEG_INFINITY,
        }
    }
    let (Ok(family), Ok(system)) = (config.observation_family(), config.system()) else {
        return f64::NEG_INFINITY;
    };
    match crate::filter::run_filter(
        &family,
        &system,
        crate::filter::init_state(&config),
        batches,
        dataset.last_batch(),
        config.batches,
        &FilterOptions::default(),
    ) {
        Ok((_, trace)) => trace.predictive_loglik(),
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Maximizes the predictive log-likelihood over `log10 tau` (plus
/// `log10 alpha` for the negative binomial): a grid pass followed, unless
/// disabled, by a bounded simplex search from the best grid point.
pub fn select_smoothing(
    dataset: &BatchDataset,
    config: &ModelConfig,
    search: &SmoothingSearchConfig,
) -> Result<Selection> {
    search.validate()?;
    config.validate()?;
    let batches = prepare_batches(config, dataset)?;
    if batches.len() < 2 {
        return Err(Error::Selection(format!(
            "need at least 2 non-empty batches, found {}",
            batches.len()
        )));
    }
    let bounds = search.bounds(config);
    let f = |theta: &[f64]| objective_at(dataset, config, &batches, theta);

    let points = optim::grid(&bounds, search.grid_points);
    let values = optim::evaluate_all(&points, f);
    let best = optim::argmax(&values).ok_or_else(|| {
        Error::Selection("the predictive log-likelihood is -inf at every grid point".into())
    })?;
    let mut theta = points[best].clone();
    let mut value = values[best];
    let mut evaluations = points.len();

    if search.optimizer == Optimizer::Simplex {
        let step = 0.5 / (search.grid_points - 1) as f64;
        let options = SimplexOptions {
            initial_step: step,
            x_tolerance: search.tolerance,
            max_evaluations: search.max_evaluations,
            ..SimplexOptions::default()
        };
        let r = optim::nelder_mead(f, &theta, &bounds, &options);
        evaluations += r.evaluations;
        if r.value > value {
            theta = r.x;
            value = r.value;
        }
    }

    let at_bound = theta
        .iter()
        .zip(&bounds)
        .map(|(x, b)| {
            (x - b.low).abs() <= search.tolerance || (b.high - x).abs() <= search.tolerance
        })
        .collect();
    let (tau, nb_alpha) = to_params(config, &theta);
    Ok(Selection {
        tau,
        nb_alpha,
        predictive_loglik: value,
        evaluations,
        at_bound,
    })
}

/// Re-selects the smoothing parameters on all accumulated data and refits
/// from the diffuse prior.
pub fn refresh_smoothing(
    snapshot: &ModelSnapshot,
    all_data: &BatchDataset,
    search: &SmoothingSearchConfig,
) -> Result<(FitOutput, Selection)> {
    let selection = select_smoothing(all_data, &snapshot.config, search)?;
    let config = selection.apply(&snapshot.config)?;
    let mut out = fit_with(all_data, &config, &FilterOptions::default())?;
    out.snapshot.schema = snapshot.schema.clone();
    out.snapshot.search = Some(search.clone());
    Ok((out, selection))
}
