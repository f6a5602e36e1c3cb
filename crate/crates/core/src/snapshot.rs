//! Versioned JSON persistence of a fitted model.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::data::{DatasetSchema, TimeScale};
use crate::error::{Error, Result};
use crate::filter::GaussianState;
use crate::smoothing::SmoothingSearchConfig;

pub const FORMAT_VERSION: u32 = 1;

/// Per-batch record kept in a snapshot's history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub batch_index: usize,
    pub mean: Vec<f64>,
    pub cov_diagonal: Vec<f64>,
    pub predictive_loglik: Option<f64>,
    pub iterations: usize,
    pub observations: usize,
}

/// Everything needed to resume filtering or predict from a fitted model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub format_version: u32,
    pub config: ModelConfig,
    pub time_scale: TimeScale,
    /// Current filtered state; its `batch_index` is the last processed batch.
    pub state: GaussianState,
    pub history: Vec<BatchSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<DatasetSchema>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SmoothingSearchConfig>,
    pub created_by: String,
}

impl ModelSnapshot {
    pub fn new(
        config: ModelConfig,
        time_scale: TimeScale,
        state: GaussianState,
        history: Vec<BatchSummary>,
    ) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            config,
            time_scale,
            state,
            history,
            schema: None,
            search: None,
            created_by: concat!("claimstate ", env!("CARGO_PKG_VERSION")).to_string(),
        }
    }

    pub fn batch_index(&self) -> usize {
        self.state.batch_index
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Probe {
            format_version: Option<u32>,
        }
        let probe: Probe = serde_json::from_str(text)
            .map_err(|e| Error::Parse(format!("snapshot is not valid JSON: {e}")))?;
        match probe.format_version {
            Some(FORMAT_VERSION) => {}
            Some(found) => {
                return Err(Error::Version {
                    found,
                    expected: FORMAT_VERSION,
                })
            }
            None => return Err(Error::Parse("snapshot has no format_version".into())),
        }
        let snap: Self = serde_json::from_str(text)
            .map_err(|e| Error::Parse(format!("malformed snapshot: {e}")))?;
        snap.config.validate()?;
        if snap.state.dimension() != snap.config.state_dimension() {
            return Err(Error::Parse(format!(
                "state has dimension {}, config implies {}",
                snap.state.dimension(),
                snap.config.state_dimension()
            )));
        }
        Ok(snap)
    }
}

/// Writes atomically: a temporary file in the same directory, then rename.
pub fn save_snapshot(snapshot: &ModelSnapshot, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), snapshot.to_json()?.as_bytes())
}

pub fn load_snapshot(path: impl AsRef<Path>) -> Result<ModelSnapshot> {
    ModelSnapshot::from_json(&std::fs::read_to_string(path)?)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::Argument(format!("'{}' is not a file path", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    Ok(result?)
}
