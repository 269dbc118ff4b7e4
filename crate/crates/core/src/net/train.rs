use log::debug;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{Head, TransformModel};
use super::tensor::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub min_delta: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 250,
            patience: 20,
            min_delta: 1e-4,
            batch_size: 32,
            seed: 0,
        }
    }
}

/// A padded network input with its regression target: `signal_len` values
/// for the signal head, one for the feature head.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T = f32> {
    pub input: Vec<T>,
    pub target: Vec<T>,
}

impl<T: Real> Sample<T> {
    /// Pads an unpadded `[C, signal_len]` input for `model`.
    pub fn new(model: &TransformModel<T>, unpadded_input: &[T], target: Vec<T>) -> Result<Self> {
        let want = target_len(model);
        if target.len() != want {
            return Err(Error::shape(format!("expected {want} target values, got {}", target.len())));
        }
        Ok(Sample {
            input: model.pad_input(unpadded_input)?,
            target,
        })
    }
}

fn target_len<T: Real>(model: &TransformModel<T>) -> usize {
    match model.config().head {
        Head::Signal => model.config().signal_len,
        Head::Feature => 1,
    }
}

fn target_offset<T: Real>(model: &TransformModel<T>) -> usize {
    match model.config().head {
        Head::Signal => model.config().pad_left(),
        Head::Feature => 0,
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    /// Training MAE before the first update.
    pub initial_train_mae: f64,
    /// Mean per-sample training loss during each epoch.
    pub train_mae: Vec<f64>,
    /// Validation MAE after each epoch (empty without a validation set).
    pub val_mae: Vec<f64>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

/// Mean per-sample MAE of `model` on `set`.
pub fn evaluate_mae<T: Real>(model: &TransformModel<T>, set: &[Sample<T>]) -> f64 {
    if set.is_empty() {
        return 0.0;
    }
    let offset = target_offset(model);
    let total: f64 = set
        .iter()
        .map(|s| {
            let out = model.forward_raw(&s.input);
            let m = s.target.len() as f64;
            s.target
                .iter()
                .enumerate()
                .map(|(i, &t)| (out[offset + i] - t).abs().to_f64())
                .sum::<f64>()
                / m
        })
        .sum();
    total / set.len() as f64
}

fn check_set<T: Real>(model: &TransformModel<T>, set: &[Sample<T>]) -> Result<()> {
    let in_len = model.config().input_channels * model.config().window_len;
    let t_len = target_len(model);
    for (i, s) in set.iter().enumerate() {
        if s.input.len() != in_len || s.target.len() != t_len {
            return Err(Error::shape(format!(
                "sample {i}: input {} / target {} values, expected {in_len} / {t_len}",
                s.input.len(),
                s.target.len()
            )));
        }
    }
    Ok(())
}

/// Shuffled mini-batch training with Adadelta and early stopping on the
/// validation MAE. On return the model holds the best-validation weights
/// (the last weights when `val_set` is empty).
pub fn train<T: Real>(
    model: &mut TransformModel<T>,
    train_set: &[Sample<T>],
    val_set: &[Sample<T>],
    cfg: &TrainConfig,
) -> Result<History> {
    if train_set.is_empty() {
        return Err(Error::precondition("training set is empty"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Parameter("batch size must be positive".into()));
    }
    check_set(model, train_set)?;
    check_set(model, val_set)?;

    let offset = target_offset(model);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut grad = vec![T::zero(); model.num_params()];

    let mut history = History {
        initial_train_mae: evaluate_mae(model, train_set),
        ..History::default()
    };
    let mut best_val = f64::INFINITY;
    let mut best_params: Option<Vec<T>> = None;
    let mut wait = 0usize;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.fill(T::zero());
            let weight = T::one() / T::of(batch.len() as f64);
            for &i in batch {
                let s = &train_set[i];
                let loss = model.accumulate_gradient(&s.input, &s.target, offset, weight, &mut grad);
                epoch_loss += loss.to_f64();
            }
            model.apply_raw(&grad)?;
        }
        let train_mae = epoch_loss / train_set.len() as f64;
        if !train_mae.is_finite() || model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence { epoch });
        }
        history.train_mae.push(train_mae);
        history.epochs_run = epoch;

        if val_set.is_empty() {
            history.best_epoch = epoch;
            continue;
        }
        let val = evaluate_mae(model, val_set);
        if !val.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        history.val_mae.push(val);
        debug!("epoch {epoch}: train {train_mae:.5} val {val:.5}");
        if val < best_val - cfg.min_delta {
            best_val = val;
            best_params = Some(model.params().to_vec());
            history.best_epoch = epoch;
            wait = 0;
        } else {
            wait += 1;
            if wait >= cfg.patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    if let Some(best) = best_params {
        model.params_mut().copy_from_slice(&best);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::model::ModelConfig;

    fn tiny(head: Head) -> ModelConfig {
        ModelConfig {
            input_channels: 4,
            window_len: 16,
            signal_len: 12,
            encoder_channels: vec![4, 8],
            kernel_size: 3,
            head,
            seed: 2,
        }
    }

    fn inputs(n: usize) -> Vec<Vec<f32>> {
        (0..n)
            .map(|k| (0..48).map(|i| ((i * 7 + k * 13) % 11) as f32 / 5.0 - 1.0).collect())
            .collect()
    }

    #[test]
    fn empty_training_set_rejected() {
        let mut m = TransformModel::<f32>::build(tiny(Head::Feature)).unwrap();
        assert!(matches!(train(&mut m, &[], &[], &TrainConfig::default()), Err(Error::Precondition(_))));
    }

    #[test]
    fn stagnant_validation_stops_early() {
        let mut m = TransformModel::<f32>::build(tiny(Head::Feature)).unwrap();
        let set: Vec<Sample<f32>> = inputs(6).iter().map(|x| Sample::new(&m, x, vec![0.5]).unwrap()).collect();
        let cfg = TrainConfig {
            max_epochs: 250,
            patience: 20,
            // No realistic improvement can beat this margin.
            min_delta: 1e6,
            ..TrainConfig::default()
        };
        let h = train(&mut m, &set, &set, &cfg).unwrap();
        assert!(h.stopped_early);
        assert!(h.epochs_run <= 21, "{}", h.epochs_run);
        assert_eq!(h.best_epoch, 1);
    }

    #[test]
    fn training_is_deterministic() {
        let run = || {
            let mut m = TransformModel::<f32>::build(tiny(Head::Signal)).unwrap();
            let set: Vec<Sample<f32>> = inputs(5)
                .iter()
                .map(|x| Sample::new(&m, x, x[..12].to_vec()).unwrap())
                .collect();
            let cfg = TrainConfig { max_epochs: 5, seed: 9, batch_size: 2, ..TrainConfig::default() };
            let h = train(&mut m, &set, &[], &cfg).unwrap();
            (m.params().to_vec(), h)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn constant_target_drives_bias() {
        let mut m = TransformModel::<f64>::build(tiny(Head::Feature)).unwrap();
        let xs: Vec<Vec<f64>> = inputs(8).iter().map(|x| x.iter().map(|&v| v as f64).collect()).collect();
        let set: Vec<Sample<f64>> = xs.iter().map(|x| Sample::new(&m, x, vec![0.75]).unwrap()).collect();
        let cfg = TrainConfig { max_epochs: 2000, batch_size: 8, seed: 1, ..TrainConfig::default() };
        let h = train(&mut m, &set, &[], &cfg).unwrap();
        let final_mae = evaluate_mae(&m, &set);
        assert!(final_mae < 0.05 * h.initial_train_mae, "{final_mae} vs {}", h.initial_train_mae);
    }
}
