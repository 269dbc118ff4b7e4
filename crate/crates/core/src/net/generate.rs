use rayon::prelude::*;

use super::model::{Head, TransformModel};
use super::tensor::Real;
use crate::error::{Error, Result};
use crate::features::{FeatureVector, NUM_FEATURES};
use crate::signal::{Window, WindowSet, NUM_CHANNELS};
use crate::types::Provenance;

/// Flattens a window channel-major into an unpadded network input.
pub fn window_input<T: Real>(w: &Window) -> Vec<T> {
    w.channels.iter().flatten().map(|&v| T::of(v)).collect()
}

fn check_models<T: Real>(models: &[TransformModel<T>], count: usize, head: Head, window_len: usize) -> Result<()> {
    if models.len() != count {
        return Err(Error::Config(format!("expected {count} {head:?} models, got {}", models.len())));
    }
    for (i, m) in models.iter().enumerate() {
        let cfg = m.config();
        if cfg.head != head {
            return Err(Error::Config(format!("model {i} has a {:?} head, expected {head:?}", cfg.head)));
        }
        if cfg.input_channels != NUM_CHANNELS || cfg.signal_len != window_len {
            return Err(Error::Config(format!(
                "model {i} takes {} channels x {} samples, windows are {NUM_CHANNELS} x {window_len}",
                cfg.input_channels, cfg.signal_len
            )));
        }
    }
    Ok(())
}

/// Maps video-derived windows to virtual sensor windows with one signal
/// model per output channel (`x, y, z, tot`).
pub fn generate_signals<T: Real>(models: &[TransformModel<T>], windows: &WindowSet) -> Result<WindowSet> {
    check_models(models, NUM_CHANNELS, Head::Signal, windows.window_len)?;
    let generated = windows
        .windows
        .par_iter()
        .map(|w| {
            let input = window_input::<T>(w);
            let mut channels: [Vec<f64>; NUM_CHANNELS] = Default::default();
            for (c, m) in models.iter().enumerate() {
                channels[c] = m.predict_unpadded(&input)?.into_iter().map(|v| v.to_f64()).collect();
            }
            Ok(Window {
                start_time: w.start_time,
                channels,
                subject: w.subject.clone(),
                activity: w.activity,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WindowSet {
        window_len: windows.window_len,
        provenance: Provenance::Generated,
        windows: generated,
    })
}

/// Maps video-derived windows to standardized feature vectors with one
/// feature model per feature.
pub fn generate_features<T: Real>(models: &[TransformModel<T>], windows: &WindowSet) -> Result<Vec<FeatureVector>> {
    check_models(models, NUM_FEATURES, Head::Feature, windows.window_len)?;
    windows
        .windows
        .par_iter()
        .map(|w| {
            let input = window_input::<T>(w);
            let mut values = [0.0; NUM_FEATURES];
            for (v, m) in values.iter_mut().zip(models) {
                *v = m.predict_unpadded(&input)?[0].to_f64();
            }
            Ok(FeatureVector {
                values,
                subject: w.subject.clone(),
                activity: w.activity,
                standardized: true,
            })
        })
        .collect()
}
