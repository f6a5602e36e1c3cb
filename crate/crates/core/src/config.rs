//! Model definition and the structural matrices of the state-space form.
//!
//! Each varying coefficient contributes a (value, derivative) pair to the
//! state, driven by an integrated Wiener process; each constant coefficient
//! contributes a single slot with identity transition and no process noise.
//! For the zero-inflated family the whole pattern is repeated for the
//! zero-probability predictor, which is appended after the count predictor.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::Family;

/// Name of the intercept slot in [`StateLayout`].
pub const INTERCEPT: &str = "(intercept)";
/// Prefix for slots that belong to the zero-inflation predictor.
pub const ZERO_PREFIX: &str = "zero:";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Poisson,
    Zip,
    Nb,
}

impl FamilyKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "poisson" => Ok(FamilyKind::Poisson),
            "zip" | "zero-inflated-poisson" => Ok(FamilyKind::Zip),
            "nb" | "negbin" | "negative-binomial" => Ok(FamilyKind::Nb),
            other => Err(Error::Config(format!("unknown family '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Poisson => "poisson",
            FamilyKind::Zip => "zip",
            FamilyKind::Nb => "nb",
        }
    }
}

/// Covariates entering one linear predictor, split into those with
/// time-varying and those with constant coefficients. The intercept is
/// implicit and always varying.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictorSpec {
    pub varying: Vec<String>,
    pub constant: Vec<String>,
}

impl PredictorSpec {
    pub fn new<S: Into<String>>(
        varying: impl IntoIterator<Item = S>,
        constant: impl IntoIterator<Item = S>,
    ) -> Self {
        Self {
            varying: varying.into_iter().map(Into::into).collect(),
            constant: constant.into_iter().map(Into::into).collect(),
        }
    }

    /// Covariate names in design order: varying first, then constant.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.varying
            .iter()
            .chain(self.constant.iter())
            .map(String::as_str)
    }

    pub fn arity(&self) -> usize {
        self.varying.len() + self.constant.len()
    }

    /// Number of state slots: two per varying coefficient (intercept
    /// included), one per constant.
    pub fn dimension(&self) -> usize {
        2 * (self.varying.len() + 1) + self.constant.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub family: FamilyKind,
    /// Predictor of the log mean (the Poisson part for ZIP).
    pub mean: PredictorSpec,
    /// Predictor of the logit zero-inflation probability. ZIP only;
    /// `None` means "same covariates as `mean`".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero: Option<PredictorSpec>,
    /// Number of equal batch intervals on the normalized time axis.
    pub batches: usize,
    /// Diffuse prior variance `c` of the initial state `N(0, cI)`.
    pub prior_scale: f64,
    /// Smoothing parameters, one per varying coefficient in layout order
    /// (count predictor first, then the zero predictor for ZIP).
    pub tau: Vec<f64>,
    /// Negative-binomial dispersion: variance is `mu + mu^2 / nb_alpha`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nb_alpha: Option<f64>,
}

impl ModelConfig {
    /// Builds a config with unit smoothing parameters and `c = 100`.
    pub fn new(family: FamilyKind, mean: PredictorSpec, batches: usize) -> Result<Self> {
        let mut cfg = Self {
            family,
            mean,
            zero: None,
            batches,
            prior_scale: 100.0,
            tau: Vec::new(),
            nb_alpha: None,
        };
        cfg.tau = vec![1.0; cfg.tau_len()];
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_tau(mut self, tau: Vec<f64>) -> Result<Self> {
        self.tau = tau;
        self.validate()?;
        Ok(self)
    }

    pub fn with_prior_scale(mut self, c: f64) -> Result<Self> {
        self.prior_scale = c;
        self.validate()?;
        Ok(self)
    }

    pub fn with_nb_alpha(mut self, alpha: f64) -> Result<Self> {
        self.nb_alpha = Some(alpha);
        self.validate()?;
        Ok(self)
    }

    pub fn with_zero_predictor(mut self, zero: PredictorSpec) -> Result<Self> {
        self.zero = Some(zero);
        if self.tau.len() != self.tau_len() {
            self.tau = vec![1.0; self.tau_len()];
        }
        self.validate()?;
        Ok(self)
    }

    /// The zero-inflation predictor spec for ZIP, `None` otherwise.
    pub fn zero_predictor(&self) -> Option<&PredictorSpec> {
        match self.family {
            FamilyKind::Zip => Some(self.zero.as_ref().unwrap_or(&self.mean)),
            _ => None,
        }
    }

    pub fn q1(&self) -> usize {
        self.mean.varying.len()
    }

    pub fn q2(&self) -> usize {
        self.mean.constant.len()
    }

    /// Number of smoothing parameters the config expects.
    pub fn tau_len(&self) -> usize {
        let mut n = self.mean.varying.len() + 1;
        if let Some(z) = self.zero_predictor() {
            n += z.varying.len() + 1;
        }
        n
    }

    pub fn validate(&self) -> Result<()> {
        if self.batches == 0 {
            return Err(Error::Config("batch count S must be at least 1".into()));
        }
        if !(self.prior_scale.is_finite() && self.prior_scale > 0.0) {
            return Err(Error::Config(format!(
                "prior scale must be positive and finite, got {}",
                self.prior_scale
            )));
        }
        if self.mean.arity() == 0 {
            return Err(Error::Config(
                "at least one covariate is required (q1 + q2 >= 1)".into(),
            ));
        }
        for spec in std::iter::once(&self.mean).chain(self.zero_predictor()) {
            let mut seen = std::collections::HashSet::new();
            for name in spec.names() {
                if !seen.insert(name) {
                    return Err(Error::Config(format!("covariate '{name}' listed twice")));
                }
            }
        }
        if self.tau.len() != self.tau_len() {
            return Err(Error::Config(format!(
                "expected {} smoothing parameters, got {}",
                self.tau_len(),
                self.tau.len()
            )));
        }
        if let Some(t) = self.tau.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(Error::Config(format!(
                "smoothing parameters must be positive and finite, got {t}"
            )));
        }
        if let Some(a) = self.nb_alpha {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::Config(format!(
                    "negative-binomial dispersion must be positive, got {a}"
                )));
            }
        }
        Ok(())
    }

    /// Total length of the state vector.
    pub fn state_dimension(&self) -> usize {
        self.mean.dimension() + self.zero_predictor().map_or(0, PredictorSpec::dimension)
    }

    /// Number of linear predictors (1, or 2 for ZIP).
    pub fn predictors(&self) -> usize {
        if self.family == FamilyKind::Zip {
            2
        } else {
            1
        }
    }

    /// The observation family with its parameters resolved.
    pub fn observation_family(&self) -> Result<Family> {
        match self.family {
            FamilyKind::Poisson => Ok(Family::Poisson),
            FamilyKind::Zip => Ok(Family::Zip),
            FamilyKind::Nb => match self.nb_alpha {
                Some(alpha) => Ok(Family::NegBin { alpha }),
                None => Err(Error::Config(
                    "negative-binomial family needs nb_alpha".into(),
                )),
            },
        }
    }

    /// All covariate names the model reads, without duplicates, in first-use
    /// order (count predictor, then zero predictor).
    pub fn covariate_names(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for spec in std::iter::once(&self.mean).chain(self.zero_predictor()) {
            for n in spec.names() {
                if !out.iter().any(|o| o == n) {
                    out.push(n.to_string());
                }
            }
        }
        out
    }

    pub fn layout(&self) -> StateLayout {
        StateLayout::new(self)
    }

    /// Block-diagonal transition over one batch interval of width `1/S`.
    pub fn transition_matrix(&self) -> DMatrix<f64> {
        let d = self.state_dimension();
        let h = 1.0 / self.batches as f64;
        let mut t = DMatrix::identity(d, d);
        for block in self.layout().varying_blocks() {
            t[(block, block + 1)] = h;
        }
        t
    }

    /// Block-diagonal process noise: `tau_j^{-1} * Q` per varying coefficient,
    /// with `Q = [[h^3/3, h^2/2], [h^2/2, h]]` and `h = 1/S`; zero for
    /// constant coefficients.
    pub fn process_noise(&self) -> Result<DMatrix<f64>> {
        self.validate()?;
        let d = self.state_dimension();
        let h = 1.0 / self.batches as f64;
        let q = [h.powi(3) / 3.0, h.powi(2) / 2.0, h];
        let mut m = DMatrix::zeros(d, d);
        for (block, tau) in self.layout().varying_blocks().zip(&self.tau) {
            let s = 1.0 / tau;
            m[(block, block)] = s * q[0];
            m[(block, block + 1)] = s * q[1];
            m[(block + 1, block)] = s * q[1];
            m[(block + 1, block + 1)] = s * q[2];
        }
        Ok(m)
    }

    /// Transition and process-noise pair for the current smoothing parameters.
    pub fn system(&self) -> Result<SystemMatrices> {
        Ok(SystemMatrices {
            transition: self.transition_matrix(),
            noise: self.process_noise()?,
        })
    }

    /// Design vector(s) for one covariate row. `x` holds the covariates of
    /// the count predictor in [`PredictorSpec::names`] order; for ZIP with a
    /// shared covariate list it is reused for the zero predictor.
    pub fn build_design_row(&self, x: &[f64]) -> Result<DesignRow> {
        match self.zero_predictor() {
            Some(z) if self.zero.is_some() && z != &self.mean => Err(Error::Config(
                "zero predictor has its own covariate list; use build_design_row_split".into(),
            )),
            _ => self.build_design_row_split(x, x),
        }
    }

    /// Like [`build_design_row`](Self::build_design_row) with separate
    /// covariate vectors for the count and zero predictors (the latter is
    /// ignored outside ZIP).
    pub fn build_design_row_split(&self, x_mean: &[f64], x_zero: &[f64]) -> Result<DesignRow> {
        let d = self.state_dimension();
        let mut count = DVector::zeros(d);
        fill_part(&self.mean, x_mean, 0, count.as_mut_slice())?;
        match self.zero_predictor() {
            None => Ok(DesignRow::Single(count)),
            Some(z) => {
                let mut zero = DVector::zeros(d);
                fill_part(z, x_zero, self.mean.dimension(), zero.as_mut_slice())?;
                Ok(DesignRow::Pair { count, zero })
            }
        }
    }
}

fn fill_part(spec: &PredictorSpec, x: &[f64], offset: usize, out: &mut [f64]) -> Result<()> {
    if x.len() != spec.arity() {
        return Err(Error::Config(format!(
            "covariate row has {} entries, predictor expects {}",
            x.len(),
            spec.arity()
        )));
    }
    if let Some(v) = x.iter().find(|v| !v.is_finite()) {
        return Err(Error::data(format!("non-finite covariate value {v}")));
    }
    let q1 = spec.varying.len();
    out[offset] = 1.0;
    for (j, v) in x[..q1].iter().enumerate() {
        out[offset + 2 * (j + 1)] = *v;
    }
    let base = offset + 2 * (q1 + 1);
    out[base..base + spec.constant.len()].copy_from_slice(&x[q1..]);
    Ok(())
}

/// Design vector(s) of one observation.
#[derive(Clone, Debug, PartialEq)]
pub enum DesignRow {
    Single(DVector<f64>),
    /// ZIP: `count` feeds the log-mean predictor, `zero` the logit of the
    /// zero-inflation probability.
    Pair {
        count: DVector<f64>,
        zero: DVector<f64>,
    },
}

impl DesignRow {
    pub fn columns(&self) -> Vec<&DVector<f64>> {
        match self {
            DesignRow::Single(z) => vec![z],
            DesignRow::Pair { count, zero } => vec![count, zero],
        }
    }

    /// Linear predictor(s) at state `gamma`.
    pub fn eta(&self, gamma: &DVector<f64>) -> [f64; 2] {
        match self {
            DesignRow::Single(z) => [z.dot(gamma), 0.0],
            DesignRow::Pair { count, zero } => [count.dot(gamma), zero.dot(gamma)],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SystemMatrices {
    pub transition: DMatrix<f64>,
    pub noise: DMatrix<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotKind {
    Value,
    Derivative,
    Constant,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Slot {
    /// Coefficient name; zero-predictor coefficients carry [`ZERO_PREFIX`].
    pub name: String,
    pub kind: SlotKind,
    pub index: usize,
}

/// Map from coefficient names to state slots.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateLayout {
    slots: Vec<Slot>,
}

impl StateLayout {
    pub fn new(config: &ModelConfig) -> Self {
        let mut slots = Vec::with_capacity(config.state_dimension());
        push_part(&mut slots, &config.mean, "");
        if let Some(z) = config.zero_predictor() {
            push_part(&mut slots, z, ZERO_PREFIX);
        }
        Self { slots }
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn dimension(&self) -> usize {
        self.slots.len()
    }

    /// Slot index of the value (or constant) of a coefficient.
    pub fn value_slot(&self, name: &str) -> Option<usize> {
        self.slots
            .iter()
            .find(|s| s.name == name && s.kind != SlotKind::Derivative)
            .map(|s| s.index)
    }

    pub fn derivative_slot(&self, name: &str) -> Option<usize> {
        self.slots
            .iter()
            .find(|s| s.name == name && s.kind == SlotKind::Derivative)
            .map(|s| s.index)
    }

    /// Coefficients in layout order with their value slot and kind.
    pub fn coefficients(&self) -> impl Iterator<Item = &Slot> {
        self.slots.iter().filter(|s| s.kind != SlotKind::Derivative)
    }

    /// First index of every (value, derivative) block.
    pub fn varying_blocks(&self) -> impl Iterator<Item = usize> + '_ {
        self.slots
            .iter()
            .filter(|s| s.kind == SlotKind::Value)
            .map(|s| s.index)
    }
}

fn push_part(slots: &mut Vec<Slot>, spec: &PredictorSpec, prefix: &str) {
    let mut push = |name: String, kind| {
        let index = slots.len();
        slots.push(Slot { name, kind, index });
    };
    for name in std::iter::once(INTERCEPT).chain(spec.varying.iter().map(String::as_str)) {
        push(format!("{prefix}{name}"), SlotKind::Value);
        push(format!("{prefix}{name}"), SlotKind::Derivative);
    }
    for name in &spec.constant {
        push(format!("{prefix}{name}"), SlotKind::Constant);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cfg(family: FamilyKind, q1: usize, q2: usize, s: usize) -> ModelConfig {
        let v: Vec<String> = (1..=q1).map(|i| format!("v{i}")).collect();
        let c: Vec<String> = (1..=q2).map(|i| format!("c{i}")).collect();
        ModelConfig {
            family,
            mean: PredictorSpec {
                varying: v,
                constant: c,
            },
            zero: None,
            batches: s,
            prior_scale: 100.0,
            tau: Vec::new(),
            nb_alpha: None,
        }
        .with_default_tau()
    }

    impl ModelConfig {
        fn with_default_tau(mut self) -> Self {
            self.tau = vec![1.0; self.tau_len()];
            self
        }
    }

    #[test]
    fn state_dimensions() {
        assert_eq!(cfg(FamilyKind::Poisson, 1, 1, 50).state_dimension(), 5);
        assert_eq!(cfg(FamilyKind::Poisson, 0, 0, 50).state_dimension(), 2);
        assert_eq!(cfg(FamilyKind::Nb, 2, 3, 50).state_dimension(), 9);
        assert_eq!(cfg(FamilyKind::Zip, 1, 1, 50).state_dimension(), 10);
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let base =
            ModelConfig::new(FamilyKind::Poisson, PredictorSpec::new(["x"], []), 10).unwrap();
        assert!(base.clone().with_tau(vec![1.0, -1.0]).is_err());
        assert!(base.clone().with_tau(vec![1.0]).is_err());
        assert!(base.clone().with_prior_scale(0.0).is_err());
        assert!(ModelConfig::new(FamilyKind::Poisson, PredictorSpec::default(), 10).is_err());
        assert!(ModelConfig::new(FamilyKind::Poisson, PredictorSpec::new(["x"], []), 0).is_err());
        assert!(
            ModelConfig::new(FamilyKind::Poisson, PredictorSpec::new(["x"], ["x"]), 3).is_err()
        );
        let nb = ModelConfig::new(FamilyKind::Nb, PredictorSpec::new(["x"], []), 10).unwrap();
        assert!(matches!(nb.observation_family(), Err(Error::Config(_))));
        assert!(nb.with_nb_alpha(2.0).unwrap().observation_family().is_ok());
    }

    #[test]
    fn design_rows_follow_interleaved_layout() {
        let c = cfg(FamilyKind::Poisson, 1, 1, 50);
        let DesignRow::Single(z) = c.build_design_row(&[0.5, 0.3]).unwrap() else {
            panic!("expected single design row")
        };
        assert_eq!(z.as_slice(), &[1.0, 0.0, 0.5, 0.0, 0.3]);

        let c = cfg(FamilyKind::Poisson, 2, 0, 50);
        let DesignRow::Single(z) = c.build_design_row(&[7.0, -2.0]).unwrap() else {
            panic!()
        };
        assert_eq!(z.as_slice(), &[1.0, 0.0, 7.0, 0.0, -2.0, 0.0]);

        let c = cfg(FamilyKind::Zip, 0, 1, 50);
        let DesignRow::Pair { count, zero } = c.build_design_row(&[0.2]).unwrap() else {
            panic!()
        };
        assert_eq!(count.as_slice(), &[1.0, 0.0, 0.2, 0.0, 0.0, 0.0]);
        assert_eq!(zero.as_slice(), &[0.0, 0.0, 0.0, 1.0, 0.0, 0.2]);
    }

    #[test]
    fn design_row_errors() {
        let c = cfg(FamilyKind::Poisson, 1, 1, 50);
        assert!(matches!(c.build_design_row(&[1.0]), Err(Error::Config(_))));
        assert!(matches!(
            c.build_design_row(&[1.0, f64::NAN]),
            Err(Error::Data { .. })
        ));
    }

    #[test]
    fn zip_with_distinct_zero_covariates() {
        let c = ModelConfig::new(FamilyKind::Zip, PredictorSpec::new(["a"], ["b"]), 4)
            .unwrap()
            .with_zero_predictor(PredictorSpec::new([], ["b"]))
            .unwrap();
        assert_eq!(c.state_dimension(), 5 + 3);
        assert_eq!(c.tau_len(), 3);
        assert!(c.build_design_row(&[1.0, 2.0]).is_err());
        let DesignRow::Pair { count, zero } =
            c.build_design_row_split(&[1.0, 2.0], &[2.0]).unwrap()
        else {
            panic!()
        };
        assert_eq!(count.as_slice(), &[1.0, 0.0, 1.0, 0.0, 2.0, 0.0, 0.0, 0.0]);
        assert_eq!(zero.as_slice(), &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 2.0]);
        assert_eq!(c.covariate_names(), vec!["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn transition_blocks() {
        let t = cfg(FamilyKind::Poisson, 0, 0, 50).transition_matrix();
        assert_eq!(t, DMatrix::from_row_slice(2, 2, &[1.0, 0.02, 0.0, 1.0]));

        let t = cfg(FamilyKind::Poisson, 0, 1, 1).transition_matrix();
        let want = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(t, want);

        let t = cfg(FamilyKind::Poisson, 1, 0, 4).transition_matrix();
        let mut want = DMatrix::identity(4, 4);
        want[(0, 1)] = 0.25;
        want[(2, 3)] = 0.25;
        assert_eq!(t, want);

        let t = cfg(FamilyKind::Zip, 0, 1, 2).transition_matrix();
        assert_eq!(t[(0, 1)], 0.5);
        assert_eq!(t[(3, 4)], 0.5);
        assert_eq!(t.sum(), 6.0 + 1.0);
    }

    #[test]
    fn process_noise_blocks() {
        let q = cfg(FamilyKind::Poisson, 0, 1, 50).process_noise().unwrap();
        let h: f64 = 1.0 / 50.0;
        assert_abs_diff_eq!(q[(0, 0)], h.powi(3) / 3.0, epsilon = 1e-18);
        assert_abs_diff_eq!(q[(0, 0)], 2.666_666_666_666_667e-6, epsilon = 1e-15);
        assert_abs_diff_eq!(q[(0, 1)], 2.0e-4, epsilon = 1e-15);
        assert_abs_diff_eq!(q[(1, 0)], 2.0e-4, epsilon = 1e-15);
        assert_abs_diff_eq!(q[(1, 1)], 0.02, epsilon = 1e-15);

        let q = cfg(FamilyKind::Poisson, 0, 2, 50).process_noise().unwrap();
        assert_eq!(q.shape(), (4, 4));
        for k in 2..4 {
            for j in 0..4 {
                assert_eq!(q[(k, j)], 0.0);
                assert_eq!(q[(j, k)], 0.0);
            }
        }

        // large tau shrinks the block toward zero
        let c = cfg(FamilyKind::Poisson, 0, 1, 50)
            .with_tau(vec![1e12])
            .unwrap();
        assert!(c.process_noise().unwrap().amax() < 1e-13);

        let mut bad = cfg(FamilyKind::Poisson, 0, 1, 50);
        bad.tau = vec![0.0];
        assert!(matches!(bad.process_noise(), Err(Error::Config(_))));
    }

    #[test]
    fn zip_noise_uses_second_tau_block() {
        let c = cfg(FamilyKind::Zip, 0, 1, 10)
            .with_tau(vec![2.0, 5.0])
            .unwrap();
        let q = c.process_noise().unwrap();
        assert_abs_diff_eq!(q[(1, 1)], 0.1 / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q[(4, 4)], 0.1 / 5.0, epsilon = 1e-15);
    }

    #[test]
    fn layout_is_a_bijection() {
        for (fam, q1, q2) in [
            (FamilyKind::Poisson, 0, 0),
            (FamilyKind::Poisson, 3, 2),
            (FamilyKind::Zip, 2, 1),
            (FamilyKind::Nb, 1, 4),
        ] {
            let c = cfg(fam, q1, q2, 7);
            let layout = c.layout();
            let d = c.state_dimension();
            assert_eq!(layout.dimension(), d);
            let mut seen = vec![false; d];
            for s in layout.slots() {
                assert!(!seen[s.index]);
                seen[s.index] = true;
            }
            assert!(seen.into_iter().all(|b| b));
        }
        let layout = cfg(FamilyKind::Poisson, 1, 1, 5).layout();
        assert_eq!(layout.value_slot(INTERCEPT), Some(0));
        assert_eq!(layout.derivative_slot(INTERCEPT), Some(1));
        assert_eq!(layout.value_slot("v1"), Some(2));
        assert_eq!(layout.derivative_slot("v1"), Some(3));
        assert_eq!(layout.value_slot("c1"), Some(4));
        assert_eq!(layout.derivative_slot("c1"), None);
        let zl = cfg(FamilyKind::Zip, 0, 1, 5).layout();
        assert_eq!(zl.value_slot("zero:(intercept)"), Some(3));
        assert_eq!(zl.value_slot("zero:c1"), Some(5));
    }
}
