//! Leave-one-subject-out evaluation of sensor, generated and video inputs.

pub mod experiment;
pub mod folds;
pub mod manifest;
pub mod report;

pub use experiment::{fold_seed, mse_per_window, run_experiment, run_fold, ExperimentConfig, FoldOutcome};
pub use folds::{ensure_excluded, loso_folds, Fold};
pub use manifest::{version_string, ExperimentManifest};
pub use report::{render_csv, render_text, AccuracyRow, ExperimentReport, MseAccumulator, MseRow, MseTable};
