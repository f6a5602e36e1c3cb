//! Per-observation likelihood pieces for the count families.
//!
//! Everything is expressed in terms of the linear predictor(s): one for
//! Poisson and negative binomial (log mean), two for zero-inflated Poisson
//! (log Poisson mean, logit of the structural-zero probability). State-space
//! gradients and Hessians follow by the chain rule through the design rows.

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use crate::config::DesignRow;
use crate::error::{Error, Result};

/// Exponentials of a linear predictor are evaluated at `clamp(eta, ±30)`.
pub const ETA_CLAMP: f64 = 30.0;

/// One observation as seen by an [`ObservationModel`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Obs {
    pub y: f64,
    /// `ln(y!)`, precomputed once per observation.
    pub log_y_factorial: f64,
}

impl Obs {
    pub fn count(y: u64) -> Self {
        let yf = y as f64;
        Self {
            y: yf,
            log_y_factorial: ln_factorial(y),
        }
    }

    /// A real-valued response (for non-count observation models).
    pub fn real(y: f64) -> Self {
        Self {
            y,
            log_y_factorial: 0.0,
        }
    }
}

/// Log-likelihood of one observation and its derivatives with respect to
/// the linear predictor(s). Only the leading `predictors()` entries are used.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EtaDerivs {
    pub loglik: f64,
    pub grad: [f64; 2],
    pub hess: [[f64; 2]; 2],
    pub clamped: bool,
}

/// Observation density of the state-space model, seen through its linear
/// predictors. The count families implement it through [`Family`]; the
/// filter is generic so that other models (e.g. a Gaussian test model) can
/// be plugged in.
pub trait ObservationModel: Sync {
    /// Number of linear predictors (1 or 2).
    fn predictors(&self) -> usize;

    fn eval(&self, obs: &Obs, eta: [f64; 2]) -> EtaDerivs;
}

/// Count observation families.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Family {
    Poisson,
    /// Zero-inflated Poisson; predictors are (log lambda, logit phi).
    Zip,
    /// NB2 with mean `mu` and variance `mu + mu^2 / alpha`.
    NegBin {
        alpha: f64,
    },
}

/// Full-state gradient and Hessian contribution of one observation.
#[derive(Clone, Debug, PartialEq)]
pub struct FamilyEval {
    pub loglik: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
    pub clamped: bool,
}

pub fn ln_factorial(k: u64) -> f64 {
    if k < 2 {
        0.0
    } else if k < 32 {
        (2..=k).map(|j| (j as f64).ln()).sum()
    } else {
        ln_gamma(k as f64 + 1.0)
    }
}

#[inline]
fn clamp_eta(eta: f64) -> (f64, bool) {
    if eta > ETA_CLAMP {
        (ETA_CLAMP, true)
    } else if eta < -ETA_CLAMP {
        (-ETA_CLAMP, true)
    } else {
        (eta, false)
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `ln Γ(y + a) - ln Γ(a)` for integer-valued `y`.
fn ln_rising(a: f64, y: f64) -> f64 {
    if y < 64.0 {
        (0..y as u64).map(|j| (a + j as f64).ln()).sum()
    } else {
        ln_gamma(y + a) - ln_gamma(a)
    }
}

fn check_count(y: f64) -> Result<()> {
    if !(y.is_finite() && y >= 0.0 && y.fract() == 0.0) {
        return Err(Error::data(format!(
            "count must be a non-negative integer, got {y}"
        )));
    }
    Ok(())
}

impl Family {
    pub fn predictors(&self) -> usize {
        match self {
            Family::Zip => 2,
            _ => 1,
        }
    }

    fn check_eta(&self, eta: &[f64]) -> Result<[f64; 2]> {
        if eta.len() != self.predictors() {
            return Err(Error::Argument(format!(
                "family expects {} linear predictor(s), got {}",
                self.predictors(),
                eta.len()
            )));
        }
        if eta.iter().any(|e| e.is_nan()) {
            return Err(Error::Argument("linear predictor is NaN".into()));
        }
        Ok([eta[0], eta.get(1).copied().unwrap_or(0.0)])
    }

    /// Exact log-pmf of count `y` at the given linear predictor(s).
    pub fn loglik(&self, y: f64, eta: &[f64]) -> Result<f64> {
        check_count(y)?;
        let eta = self.check_eta(eta)?;
        Ok(self.eval(&Obs::count(y as u64), eta).loglik)
    }

    /// Mean of the response.
    pub fn mean(&self, eta: &[f64]) -> Result<f64> {
        let eta = self.check_eta(eta)?;
        Ok(self.mean_unchecked(eta))
    }

    pub(crate) fn mean_unchecked(&self, eta: [f64; 2]) -> f64 {
        let lambda = clamp_eta(eta[0]).0.exp();
        match self {
            Family::Poisson | Family::NegBin { .. } => lambda,
            Family::Zip => logistic(-eta[1]) * lambda,
        }
    }

    /// Probability of count `k`.
    pub fn pmf(&self, k: u64, eta: &[f64]) -> Result<f64> {
        let eta = self.check_eta(eta)?;
        Ok(self.pmf_unchecked(k, eta))
    }

    pub(crate) fn pmf_unchecked(&self, k: u64, eta: [f64; 2]) -> f64 {
        self.eval(&Obs::count(k), eta).loglik.exp().min(1.0)
    }

    /// Gradient and Hessian of one observation's log-likelihood with respect
    /// to the full state vector.
    pub fn grad_hess(
        &self,
        y: f64,
        design: &DesignRow,
        gamma: &DVector<f64>,
    ) -> Result<FamilyEval> {
        check_count(y)?;
        let cols = design.columns();
        if cols.len() != self.predictors() {
            return Err(Error::Argument(format!(
                "family expects {} design vector(s), got {}",
                self.predictors(),
                cols.len()
            )));
        }
        if cols.iter().any(|c| c.len() != gamma.len()) {
            return Err(Error::Argument("design/state dimension mismatch".into()));
        }
        let e = self.eval(&Obs::count(y as u64), design.eta(gamma));
        let d = gamma.len();
        let mut grad = DVector::zeros(d);
        let mut hess = DMatrix::zeros(d, d);
        for (a, za) in cols.iter().enumerate() {
            grad.axpy(e.grad[a], za, 1.0);
            for (b, zb) in cols.iter().enumerate() {
                hess.ger(e.hess[a][b], za, zb, 1.0);
            }
        }
        Ok(FamilyEval {
            loglik: e.loglik,
            grad,
            hess,
            clamped: e.clamped,
        })
    }
}

impl ObservationModel for Family {
    fn predictors(&self) -> usize {
        Family::predictors(self)
    }

    fn eval(&self, obs: &Obs, eta: [f64; 2]) -> EtaDerivs {
        let y = obs.y;
        let (eb, clamped) = clamp_eta(eta[0]);
        let lambda = eb.exp();
        match *self {
            Family::Poisson => EtaDerivs {
                loglik: y * eb - lambda - obs.log_y_factorial,
                grad: [y - lambda, 0.0],
                hess: [[-lambda, 0.0], [0.0, 0.0]],
                clamped,
            },
            Family::NegBin { alpha } => {
                let denom = alpha + lambda;
                // alpha * ln(alpha / (alpha + mu)) + y * ln(mu / (alpha + mu))
                let log_p0 = -alpha * (lambda / alpha).ln_1p();
                let loglik =
                    ln_rising(alpha, y) - obs.log_y_factorial + log_p0 + y * (eb - denom.ln());
                EtaDerivs {
                    loglik,
                    grad: [alpha * (y - lambda) / denom, 0.0],
                    hess: [
                        [-alpha * lambda * (y + alpha) / (denom * denom), 0.0],
                        [0.0, 0.0],
                    ],
                    clamped,
                }
            }
            Family::Zip => {
                let eg = eta[1];
                let phi = logistic(eg);
                let log_norm = softplus(eg);
                if y == 0.0 {
                    // posterior probability that the zero is structural
                    let w = logistic(eg + lambda);
                    let ww = w * (1.0 - w);
                    EtaDerivs {
                        loglik: log_sum_exp(eg, -lambda) - log_norm,
                        grad: [-lambda * (1.0 - w), w - phi],
                        hess: [
                            [-lambda * (1.0 - w) + lambda * lambda * ww, lambda * ww],
                            [lambda * ww, ww - phi * (1.0 - phi)],
                        ],
                        clamped,
                    }
                } else {
                    EtaDerivs {
                        loglik: y * eb - lambda - obs.log_y_factorial - log_norm,
                        grad: [y - lambda, -phi],
                        hess: [[-lambda, 0.0], [0.0, -phi * (1.0 - phi)]],
                        clamped,
                    }
                }
            }
        }
    }
}
