use std::path::Path;

use road_core::road::{LinearClassifier, Method};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const MODEL_VERSION: u32 = 1;

/// On-disk classifier document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    pub method: Method,
    pub features: Vec<String>,
    pub w: Vec<f64>,
    pub mu_a_hat: Vec<f64>,
    pub lambda: f64,
    pub gamma: f64,
    pub seed: u64,
    pub support: Vec<usize>,
    pub standardize_samples: bool,
    pub cv_error: Option<f64>,
    pub plugin_error: Option<f64>,
    /// Features kept by screening (S-ROAD variants).
    pub screened: Option<Vec<usize>>,
    pub config: serde_json::Value,
}

impl ModelFile {
    pub fn classifier(&self) -> CliResult<LinearClassifier> {
        Ok(LinearClassifier::new(
            self.method,
            self.w.clone(),
            self.mu_a_hat.clone(),
            self.lambda,
            self.gamma,
        )?)
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(self).expect("model serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| json_error(path, &e))?;
        let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != MODEL_VERSION {
            return Err(CliError::ModelVersion {
                path: path.to_path_buf(),
                found: version,
                expected: MODEL_VERSION,
            });
        }
        let model: Self = serde_json::from_value(value).map_err(|e| json_error(path, &e))?;
        if model.w.len() != model.features.len() || model.mu_a_hat.len() != model.features.len() {
            return Err(CliError::Parse {
                path: path.to_path_buf(),
                line: 0,
                message: "weight and feature lengths disagree".into(),
            });
        }
        Ok(model)
    }
}

fn json_error(path: &Path, e: &serde_json::Error) -> CliError {
    CliError::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        message: e.to_string(),
    }
}
