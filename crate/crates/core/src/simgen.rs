//! Synthetic claim-count data with time-varying coefficients.
//!
//! The default design draws `t, x1, x2` independently and uniformly, sets
//! `log lambda = beta0(t) + beta1(t) x1 + 0.25 x2` with `beta0(t) = t - 2`
//! and `beta1(t) = 0.2 ln t + 0.5`, and splits the time-sorted rows into an
//! early training part and a late test part.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::config::{FamilyKind, ModelConfig, PredictorSpec};
use crate::data::{BatchDataset, RawRow, TimeScale};
use crate::error::{Error, Result};

/// Name of the pseudo-random generator, recorded in dataset headers.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha 0.9, seed_from_u64)";

/// Times below this are redrawn so `ln t` stays finite.
const MIN_TIME: f64 = 1e-12;

/// A coefficient as a function of time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Curve {
    Constant {
        value: f64,
    },
    /// `intercept + slope * t`
    Linear {
        intercept: f64,
        slope: f64,
    },
    /// `scale * ln t + shift`
    Log {
        scale: f64,
        shift: f64,
    },
}

impl Curve {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Curve::Constant { value } => value,
            Curve::Linear { intercept, slope } => intercept + slope * t,
            Curve::Log { scale, shift } => scale * t.ln() + shift,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum SimFamily {
    Poisson,
    /// Structural zero with probability `logistic(zero_logit(t))`.
    Zip {
        zero_logit: Curve,
    },
    /// Gamma-mixed Poisson with mean `lambda`, variance `lambda + lambda^2 / alpha`.
    NegBin {
        alpha: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub n: usize,
    pub seed: u64,
    pub intercept: Curve,
    /// Coefficient of `x1`.
    pub slope: Curve,
    /// Constant coefficient of `x2`.
    pub constant: f64,
    /// Covariates are uniform on this interval.
    pub covariate_range: [f64; 2],
    pub family: SimFamily,
    /// Fraction of time-sorted rows in the training part.
    pub train_fraction: f64,
    pub batches: usize,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self {
            n: 100_000,
            seed: 20_240_501,
            intercept: Curve::Linear {
                intercept: -2.0,
                slope: 1.0,
            },
            slope: Curve::Log {
                scale: 0.2,
                shift: 0.5,
            },
            constant: 0.25,
            covariate_range: [-0.5, 0.5],
            family: SimFamily::Poisson,
            train_fraction: 0.75,
            batches: 50,
        }
    }
}

impl SimSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::Config(format!(
                "simulation needs n >= 10, got {}",
                self.n
            )));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        let [lo, hi] = self.covariate_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!(
                "invalid covariate range [{lo}, {hi}]"
            )));
        }
        if self.batches == 0 {
            return Err(Error::Config("batch count must be at least 1".into()));
        }
        if let SimFamily::NegBin { alpha } = self.family {
            if !(alpha.is_finite() && alpha > 0.0) {
                return Err(Error::Config(format!(
                    "dispersion must be positive, got {alpha}"
                )));
            }
        }
        Ok(())
    }

    /// Log of the true Poisson (or NB) mean at `t` for covariates `x1, x2`.
    pub fn log_intensity(&self, t: f64, x1: f64, x2: f64) -> f64 {
        self.intercept.eval(t) + self.slope.eval(t) * x1 + self.constant * x2
    }

    /// True response mean (accounting for structural zeros).
    pub fn true_mean(&self, t: f64, x1: f64, x2: f64) -> f64 {
        let lambda = self.log_intensity(t, x1, x2).exp();
        match self.family {
            SimFamily::Zip { zero_logit } => lambda / (1.0 + zero_logit.eval(t).exp()),
            _ => lambda,
        }
    }

    pub fn header_comment(&self) -> String {
        format!(
            "generator: {RNG_ALGORITHM}; seed = {}; n = {}; family = {}",
            self.seed,
            self.n,
            match self.family {
                SimFamily::Poisson => "poisson",
                SimFamily::Zip { .. } => "zip",
                SimFamily::NegBin { .. } => "nb",
            }
        )
    }
}

/// Generated data, split by time.
#[derive(Clone, Debug, PartialEq)]
pub struct SimData {
    pub spec: SimSpec,
    /// Training rows, time-normalized on their own span.
    pub train: BatchDataset,
    /// Later rows, normalized with the training scale (so `u > 1`).
    pub test: BatchDataset,
    /// True response means aligned with `train.rows()` / `test.rows()`.
    pub train_truth: Vec<f64>,
    pub test_truth: Vec<f64>,
}

/// Covariate columns of generated datasets.
pub const COLUMNS: [&str; 2] = ["x1", "x2"];

/// Draws all rows, sorted by time, on the raw `[0, 1]` time axis.
pub fn generate_rows(spec: &SimSpec) -> Result<Vec<RawRow>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let [lo, hi] = spec.covariate_range;
    let gamma = match spec.family {
        SimFamily::NegBin { alpha } => {
            Some(Gamma::new(alpha, 1.0 / alpha).map_err(|e| Error::Config(e.to_string()))?)
        }
        _ => None,
    };
    let mut rows = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let t = loop {
            let t: f64 = rng.random();
            if t >= MIN_TIME {
                break t;
            }
        };
        let x1 = lo + (hi - lo) * rng.random::<f64>();
        let x2 = lo + (hi - lo) * rng.random::<f64>();
        let mut lambda = spec.log_intensity(t, x1, x2).exp();
        if let Some(g) = &gamma {
            lambda *= g.sample(&mut rng);
        }
        let structural_zero = match spec.family {
            SimFamily::Zip { zero_logit } => {
                let phi = 1.0 / (1.0 + (-zero_logit.eval(t)).exp());
                rng.random::<f64>() < phi
            }
            _ => false,
        };
        let y = if structural_zero || lambda <= 0.0 {
            0
        } else {
            let p = Poisson::new(lambda).map_err(|e| Error::numeric(e.to_string()))?;
            p.sample(&mut rng) as u64
        };
        rows.push(RawRow {
            time: t,
            y: Some(y),
            covariates: vec![x1, x2],
        });
    }
    rows.sort_by(|a, b| a.time.total_cmp(&b.time));
    Ok(rows)
}

pub fn generate(spec: &SimSpec) -> Result<SimData> {
    let mut rows = generate_rows(spec)?;
    let cut = ((spec.n as f64) * spec.train_fraction).round() as usize;
    let cut = cut.clamp(1, spec.n - 1);
    let test_rows = rows.split_off(cut);
    let scale = TimeScale::fit(rows.iter().map(|r| &r.time))?;
    let truth = |rs: &[RawRow]| -> Vec<f64> {
        rs.iter()
            .map(|r| spec.true_mean(r.time, r.covariates[0], r.covariates[1]))
            .collect()
    };
    let train_truth = truth(&rows);
    let test_truth = truth(&test_rows);
    let columns: Vec<String> = COLUMNS.iter().map(|c| c.to_string()).collect();
    let train = BatchDataset::new(columns.clone(), rows, scale, spec.batches)?;
    let test = BatchDataset::new(columns, test_rows, scale, spec.batches)?;
    Ok(SimData {
        spec: spec.clone(),
        train,
        test,
        train_truth,
        test_truth,
    })
}

/// Model matching the generator: `x1` varying, `x2` constant; for ZIP the
/// zero-inflation predictor is a varying intercept.
pub fn default_model_config(spec: &SimSpec) -> Result<ModelConfig> {
    let mean = PredictorSpec::new(["x1"], ["x2"]);
    match spec.family {
        SimFamily::Poisson => ModelConfig::new(FamilyKind::Poisson, mean, spec.batches),
        SimFamily::Zip { .. } => {
            ModelConfig::new(FamilyKind::Zip, mean, spec.batches)?.with_zero_predictor(
                PredictorSpec::new(Vec::<String>::new(), Vec::<String>::new()),
            )
        }
        SimFamily::NegBin { alpha } => {
            ModelConfig::new(FamilyKind::Nb, mean, spec.batches)?.with_nb_alpha(alpha)
        }
    }
}
