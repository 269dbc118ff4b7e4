//! Virtual accelerometer signals from 2D pose sequences.
//!
//! Pose keypoints are turned into a 3D body-center track, differentiated
//! into acceleration, windowed and summarized as features. A small U-Net
//! learns to map the video-derived windows onto real sensor windows or
//! features, and a random forest classifies activities under
//! leave-one-subject-out evaluation.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod forest;
pub mod net;
pub mod pose;
pub mod signal;
pub mod synthetic;
pub mod types;

pub use error::{Error, Result};
pub use types::{derive_seed, Activity, Provenance, SubjectId};
