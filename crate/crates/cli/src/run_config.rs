//! The TOML run-configuration document shared by all subcommands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use claimstate_core::{
    DatasetSchema, Error, FamilyKind, ModelConfig, PredictorSpec, Result, SmoothingSearchConfig,
    TimeScale,
};

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub family: Option<String>,
    pub time_column: Option<String>,
    pub count_column: Option<String>,
    #[serde(default)]
    pub varying: Vec<String>,
    #[serde(default)]
    pub constant: Vec<String>,
    /// Zero-inflation predictor (ZIP). Omitting both lists reuses the count
    /// predictor's covariates.
    pub zero_varying: Option<Vec<String>>,
    pub zero_constant: Option<Vec<String>>,
    pub batches: Option<usize>,
    pub prior_scale: Option<f64>,
    pub tau: Option<Vec<f64>>,
    /// Use `tau` (and `nb_alpha`) as given instead of searching.
    #[serde(default)]
    pub fix_tau: bool,
    pub nb_alpha: Option<f64>,
    /// Raw time mapped to 0; defaults to the training data minimum.
    pub time_min: Option<f64>,
    /// Raw time mapped to 1; defaults to the training data maximum.
    pub time_max: Option<f64>,
    #[serde(default)]
    pub search: Option<SmoothingSearchConfig>,
    #[serde(default)]
    pub binary_coding: BTreeMap<String, String>,
    #[serde(default)]
    pub output: Outputs,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    pub snapshot: Option<PathBuf>,
    pub bands: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config '{}': {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text)
            .map_err(|e| Error::Config(format!("invalid config document: {}", e.message())))
    }

    pub fn schema(&self) -> DatasetSchema {
        let d = DatasetSchema::default();
        DatasetSchema {
            time_column: self.time_column.clone().unwrap_or(d.time_column),
            count_column: self.count_column.clone().unwrap_or(d.count_column),
            binary_coding: self.binary_coding.clone(),
        }
    }

    pub fn search(&self) -> SmoothingSearchConfig {
        self.search.clone().unwrap_or_default()
    }

    /// Fixed time scale, if the document pins one.
    pub fn time_scale(&self) -> Result<Option<TimeScale>> {
        match (self.time_min, self.time_max) {
            (Some(lo), Some(hi)) => Ok(Some(TimeScale::new(lo, hi)?)),
            (None, None) => Ok(None),
            _ => Err(Error::Config(
                "time_min and time_max must be given together".into(),
            )),
        }
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let family = FamilyKind::parse(
            self.family
                .as_deref()
                .ok_or_else(|| Error::Config("config document needs 'family'".into()))?,
        )?;
        let batches = self
            .batches
            .ok_or_else(|| Error::Config("config document needs 'batches'".into()))?;
        let mean = PredictorSpec::new(self.varying.iter().cloned(), self.constant.iter().cloned());
        let mut config = ModelConfig::new(family, mean, batches)?;
        if self.zero_varying.is_some() || self.zero_constant.is_some() {
            if family != FamilyKind::Zip {
                return Err(Error::Config(
                    "zero_varying / zero_constant only apply to the zip family".into(),
                ));
            }
            let zero = PredictorSpec::new(
                self.zero_varying.clone().unwrap_or_default(),
                self.zero_constant.clone().unwrap_or_default(),
            );
            config = config.with_zero_predictor(zero)?;
        }
        if let Some(c) = self.prior_scale {
            config = config.with_prior_scale(c)?;
        }
        if let Some(tau) = &self.tau {
            config = config.with_tau(tau.clone())?;
        } else if self.fix_tau {
            return Err(Error::Config("fix_tau requires 'tau'".into()));
        }
        if let Some(a) = self.nb_alpha {
            config = config.with_nb_alpha(a)?;
        }
        if self.fix_tau && family == FamilyKind::Nb && self.nb_alpha.is_none() {
            return Err(Error::Config(
                "fix_tau with the nb family requires 'nb_alpha'".into(),
            ));
        }
        self.search().validate()?;
        Ok(config)
    }
}
