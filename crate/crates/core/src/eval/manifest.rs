use std::path::Path;

use serde::{Deserialize, Serialize};

use super::experiment::{ExperimentConfig, FoldOutcome};
use super::report::{ExperimentReport, CONDITIONS};
use crate::error::{Error, Result};

/// `git describe`-style version of this build.
pub fn version_string() -> &'static str {
    option_env!("VIMU_GIT_DESCRIBE").unwrap_or(concat!("v", env!("CARGO_PKG_VERSION")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub test_subject: String,
    pub validation_subject: Option<String>,
    pub seed: u64,
    pub best_epochs: Vec<usize>,
}

/// Machine-readable record of an experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub version: String,
    pub data: String,
    pub config: ExperimentConfig,
    /// How each classifier condition is standardized.
    pub scalers: Vec<(String, String)>,
    pub folds: Vec<FoldRecord>,
    pub mean_accuracy: Vec<(String, f64)>,
    pub feature_mse_reduction: Option<f64>,
}

impl ExperimentManifest {
    pub fn new(data: &Path, cfg: &ExperimentConfig, report: &ExperimentReport, outcomes: &[FoldOutcome]) -> Self {
        let scalers = [
            "fit on training sensor features",
            "fit on generated training features; test sensor features pass the sensor scaler first",
            "fit on training video features",
        ];
        ExperimentManifest {
            version: version_string().to_owned(),
            data: data.display().to_string(),
            config: cfg.clone(),
            scalers: CONDITIONS.iter().zip(scalers).map(|(c, s)| (c.to_string(), s.to_string())).collect(),
            folds: outcomes
                .iter()
                .map(|o| FoldRecord {
                    test_subject: o.fold.test_subject.to_string(),
                    validation_subject: o.validation_subject.as_ref().map(|s| s.to_string()),
                    seed: o.seed,
                    best_epochs: o.best_epochs.clone(),
                })
                .collect(),
            mean_accuracy: CONDITIONS.iter().map(|c| c.to_string()).zip(report.mean_accuracy()).collect(),
            feature_mse_reduction: report.feature_mse_reduction(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::at_path(path, e))
    }
}
