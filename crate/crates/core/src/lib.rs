//! Dynamic count regression for insurance claim frequencies.
//!
//! Regression coefficients evolve smoothly in time as an integrated Wiener
//! process. Data arrive in time batches; each batch is absorbed by a Kalman
//! step whose update is a Laplace (posterior-mode) approximation, so the
//! model can be refreshed online without refitting history. Smoothing
//! parameters are chosen by maximizing a Laplace-approximated predictive
//! log-likelihood.
//!
//! ```no_run
//! use claimstate_core::{simgen, fit, select_smoothing, ModelConfig, SmoothingSearchConfig};
//!
//! let sim = simgen::generate(&simgen::SimSpec::default()).unwrap();
//! let config = simgen::default_model_config(&sim.spec).unwrap();
//! let chosen = select_smoothing(&sim.train, &config, &SmoothingSearchConfig::default()).unwrap();
//! let fitted = fit(&sim.train, &chosen.apply(&config).unwrap()).unwrap();
//! println!("{:?}", fitted.snapshot.state.mean);
//! ```

pub mod config;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod family;
pub mod filter;
pub mod optim;
pub mod prediction;
pub mod simgen;
pub mod smoothing;
pub mod snapshot;

pub use config::{
    DesignRow, FamilyKind, ModelConfig, PredictorSpec, SlotKind, StateLayout, SystemMatrices,
};
pub use data::{
    load_dataset, read_dataset, write_dataset, BatchDataset, Counts, DatasetSchema, RawRow, Row,
    TimeScale,
};
pub use error::{Error, Result};
pub use evaluation::MetricReport;
pub use family::{EtaDerivs, Family, Obs, ObservationModel};
pub use filter::{
    filter_step, fit, init_state, predict_step, update, FilterOptions, FilterTrace, FitOutput,
    GaussianState, NewtonOptions, PreparedBatch,
};
pub use prediction::{CoefficientBandSeries, PredictionResult};
pub use smoothing::{
    predictive_loglik, refresh_smoothing, select_smoothing, Selection, SmoothingSearchConfig,
};
pub use snapshot::{load_snapshot, save_snapshot, ModelSnapshot};
