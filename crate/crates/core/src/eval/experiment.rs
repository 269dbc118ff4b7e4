use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::folds::{ensure_excluded, loso_folds, Fold};
use super::report::{AccuracyRow, ExperimentReport, MseAccumulator};
use crate::dataset::PairedWindows;
use crate::error::{Error, Result};
use crate::features::{compute_features, feature_name, FeatureVector, Scaler, NUM_FEATURES};
use crate::forest::{train_forest, ForestConfig};
use crate::net::{generate_features, generate_signals, train, window_input, Head, ModelConfig, Sample, TrainConfig, TransformModel};
use crate::signal::{CHANNEL_NAMES, NUM_CHANNELS};
use crate::types::{derive_seed, SubjectId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Architecture shared by every generation model; head and seed are
    /// set per model.
    pub model: ModelConfig,
    /// Training schedule; the seed is set per model.
    pub train: TrainConfig,
    /// Forest settings; the seed is set per fold and condition.
    pub forest: ForestConfig,
    /// Also train the four signal models and report their errors.
    pub signal_models: bool,
    /// Test hook: hands the held-out subject's windows to the generation
    /// models, which the leakage guard must reject.
    #[doc(hidden)]
    #[serde(skip)]
    pub inject_leakage: bool,
}

impl Default for ExperimentConfig {
    /// Desk-scale settings: narrower network and a shorter schedule than
    /// [`ExperimentConfig::full_scale`].
    fn default() -> Self {
        ExperimentConfig {
            seed: 7,
            model: ModelConfig {
                encoder_channels: vec![8, 16, 32],
                ..ModelConfig::default()
            },
            train: TrainConfig {
                max_epochs: 60,
                patience: 10,
                ..TrainConfig::default()
            },
            forest: ForestConfig::default(),
            signal_models: true,
            inject_leakage: false,
        }
    }
}

impl ExperimentConfig {
    /// Channel widths `[32, 64, 128]` and up to 250 epochs.
    pub fn full_scale() -> Self {
        ExperimentConfig {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            ..ExperimentConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.forest.validate()?;
        if self.model.input_channels != NUM_CHANNELS {
            return Err(Error::Config(format!("models must read {NUM_CHANNELS} channels")));
        }
        if self.train.batch_size == 0 || self.train.max_epochs == 0 {
            return Err(Error::Config("batch size and epoch limit must be positive".into()));
        }
        Ok(())
    }
}

/// Seed of one fold.
pub fn fold_seed(master: u64, fold: usize) -> u64 {
    derive_seed(master, fold as u64)
}

const SIGNAL_STREAM: u64 = 100;
const FOREST_STREAM: u64 = 200;

/// Mean squared sample-wise error between two aligned segments.
pub fn mse_per_window(pred: &[f64], real: &[f64]) -> Result<f64> {
    if pred.len() != real.len() || pred.is_empty() {
        return Err(Error::shape(format!("cannot compare {} with {} samples", pred.len(), real.len())));
    }
    Ok(pred.iter().zip(real).map(|(p, r)| (p - r) * (p - r)).sum::<f64>() / pred.len() as f64)
}

/// Everything one fold contributes to the report.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldOutcome {
    pub fold: Fold,
    pub validation_subject: Option<SubjectId>,
    pub seed: u64,
    pub accuracy: [f64; 3],
    pub signal: MseAccumulator,
    pub feature: MseAccumulator,
    pub naive: MseAccumulator,
    /// Epoch whose weights were kept, per generation model.
    pub best_epochs: Vec<usize>,
}

fn unstandardized(vs: &[FeatureVector]) -> Vec<FeatureVector> {
    vs.iter()
        .map(|v| FeatureVector {
            standardized: false,
            ..v.clone()
        })
        .collect()
}

struct Split {
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
}

fn split_fold(fold: &Fold, subjects: &[SubjectId], inject_leakage: bool) -> Split {
    let val_subject = fold.validation_subject();
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for (i, s) in subjects.iter().enumerate() {
        if *s == fold.test_subject {
            test.push(i);
        } else if Some(s) == val_subject {
            val.push(i);
        } else {
            train.push(i);
        }
    }
    if inject_leakage {
        train.extend(test.iter().copied());
    }
    Split { train, val, test }
}

fn train_model(
    cfg: &ExperimentConfig,
    head: Head,
    seed: u64,
    inputs: &[Vec<f32>],
    targets: &dyn Fn(usize) -> Vec<f32>,
    split: &Split,
) -> Result<(TransformModel<f32>, usize)> {
    let mut model = TransformModel::<f32>::build(cfg.model.clone().with_head(head).with_seed(seed))?;
    let build = |idx: &[usize]| -> Result<Vec<Sample<f32>>> {
        idx.iter().map(|&i| Sample::new(&model, &inputs[i], targets(i))).collect()
    };
    let train_set = build(&split.train)?;
    let val_set = build(&split.val)?;
    let tc = TrainConfig {
        seed: derive_seed(seed, 1),
        ..cfg.train.clone()
    };
    let history = train(&mut model, &train_set, &val_set, &tc)?;
    Ok((model, history.best_epoch))
}

pub fn run_fold(data: &PairedWindows, fold: &Fold, cfg: &ExperimentConfig) -> Result<FoldOutcome> {
    let seed = fold_seed(cfg.seed, fold.index);
    let subjects: Vec<SubjectId> = data.video.windows.iter().map(|w| w.subject.clone()).collect();
    let split = split_fold(fold, &subjects, cfg.inject_leakage);
    let held_out = &fold.test_subject;
    if split.test.is_empty() {
        return Err(Error::precondition(format!("subject {held_out} has no windows")));
    }
    let non_test: Vec<usize> = split.train.iter().chain(&split.val).copied().collect();
    ensure_excluded(held_out, "generation models", non_test.iter().map(|&i| &subjects[i]))?;

    let imu_raw: Vec<FeatureVector> = data.imu.windows.iter().map(compute_features).collect();
    let video_raw: Vec<FeatureVector> = data.video.windows.iter().map(compute_features).collect();
    let pick = |vs: &[FeatureVector], idx: &[usize]| -> Vec<FeatureVector> { idx.iter().map(|&i| vs[i].clone()).collect() };

    let imu_scaler = Scaler::fit_excluding(&pick(&imu_raw, &non_test), held_out)?;
    let video_scaler = Scaler::fit_excluding(&pick(&video_raw, &non_test), held_out)?;
    let imu_std = imu_scaler.apply_all(&imu_raw)?;

    let inputs: Vec<Vec<f32>> = data.video.windows.iter().map(window_input::<f32>).collect();
    info!(
        "fold {} ({held_out}): {} train, {} validation, {} test windows",
        fold.index,
        split.train.len(),
        split.val.len(),
        split.test.len()
    );

    let n_signal = if cfg.signal_models { NUM_CHANNELS } else { 0 };
    let trained: Vec<(TransformModel<f32>, usize)> = (0..NUM_FEATURES + n_signal)
        .into_par_iter()
        .map(|k| {
            if k < NUM_FEATURES {
                let target = |i: usize| vec![imu_std[i].values[k] as f32];
                train_model(cfg, Head::Feature, derive_seed(seed, k as u64), &inputs, &target, &split)
            } else {
                let c = k - NUM_FEATURES;
                let target = |i: usize| data.imu.windows[i].channels[c].iter().map(|&v| v as f32).collect();
                train_model(cfg, Head::Signal, derive_seed(seed, SIGNAL_STREAM + c as u64), &inputs, &target, &split)
            }
        })
        .collect::<Result<_>>()?;
    let best_epochs = trained.iter().map(|t| t.1).collect();
    let (feature_models, signal_models): (Vec<_>, Vec<_>) = {
        let mut models: Vec<TransformModel<f32>> = trained.into_iter().map(|t| t.0).collect();
        let signal = models.split_off(NUM_FEATURES);
        (models, signal)
    };

    let subset = |idx: &[usize]| crate::signal::WindowSet {
        window_len: data.video.window_len,
        provenance: data.video.provenance,
        windows: idx.iter().map(|&i| data.video.windows[i].clone()).collect(),
    };
    let generated_train = generate_features(&feature_models, &subset(&non_test))?;
    let generated_test = generate_features(&feature_models, &subset(&split.test))?;

    let mut feature = MseAccumulator::new(NUM_FEATURES);
    let mut naive = MseAccumulator::new(NUM_FEATURES);
    for (g, &i) in generated_test.iter().zip(&split.test) {
        let truth = &imu_std[i];
        let direct = video_scaler.apply(&video_raw[i])?;
        for f in 0..NUM_FEATURES {
            feature.add(f, truth.activity, (g.values[f] - truth.values[f]).powi(2));
            naive.add(f, truth.activity, (direct.values[f] - truth.values[f]).powi(2));
        }
    }

    let mut signal = MseAccumulator::new(NUM_CHANNELS);
    if cfg.signal_models {
        let generated = generate_signals(&signal_models, &subset(&split.test))?;
        for (g, &i) in generated.windows.iter().zip(&split.test) {
            let real = &data.imu.windows[i];
            for c in 0..NUM_CHANNELS {
                signal.add(c, real.activity, mse_per_window(&g.channels[c], &real.channels[c])?);
            }
        }
    }

    // Classifiers: each condition standardizes with a scaler fitted on its
    // own training features and is scored on the held-out sensor features.
    let forest_cfg = |cond: u64| ForestConfig {
        seed: derive_seed(seed, FOREST_STREAM + cond),
        ..cfg.forest.clone()
    };
    let imu_train = pick(&imu_std, &non_test);
    let imu_test = pick(&imu_std, &split.test);

    let generated_scaler = Scaler::fit_excluding(&unstandardized(&generated_train), held_out)?;
    let gen_train = generated_scaler.apply_all(&unstandardized(&generated_train))?;
    let gen_test = generated_scaler.apply_all(&unstandardized(&imu_test))?;

    let video_train = video_scaler.apply_all(&pick(&video_raw, &non_test))?;
    let video_test = video_scaler.apply_all(&pick(&imu_raw, &split.test))?;

    let conditions = [(imu_train, imu_test), (gen_train, gen_test), (video_train, video_test)];
    let mut accuracy = [0.0; 3];
    for (c, (tr, te)) in conditions.iter().enumerate() {
        ensure_excluded(held_out, "classifier", tr.iter().map(|v| &v.subject))?;
        let forest = train_forest(tr, &forest_cfg(c as u64))?;
        accuracy[c] = forest.accuracy(te)?;
    }
    info!(
        "fold {} ({held_out}): accuracy imu {:.3} generated {:.3} video {:.3}",
        fold.index, accuracy[0], accuracy[1], accuracy[2]
    );

    Ok(FoldOutcome {
        fold: fold.clone(),
        validation_subject: fold.validation_subject().cloned(),
        seed,
        accuracy,
        signal,
        feature,
        naive,
        best_epochs,
    })
}

/// Full leave-one-subject-out comparison of the three classifier inputs.
pub fn run_experiment(data: &PairedWindows, cfg: &ExperimentConfig) -> Result<(ExperimentReport, Vec<FoldOutcome>)> {
    cfg.validate()?;
    if data.video.len() != data.imu.len() {
        return Err(Error::shape("video and sensor window sets are not paired"));
    }
    for (v, i) in data.video.windows.iter().zip(&data.imu.windows) {
        if v.subject != i.subject || v.activity != i.activity {
            return Err(Error::shape(format!("window pair mismatch at {} {}", v.subject, v.activity)));
        }
    }
    let folds = loso_folds(&data.subjects())?;
    let outcomes: Vec<FoldOutcome> = folds.par_iter().map(|f| run_fold(data, f, cfg)).collect::<Result<_>>()?;

    let mut signal = MseAccumulator::new(NUM_CHANNELS);
    let mut feature = MseAccumulator::new(NUM_FEATURES);
    let mut naive = MseAccumulator::new(NUM_FEATURES);
    for o in &outcomes {
        signal.merge(&o.signal);
        feature.merge(&o.feature);
        naive.merge(&o.naive);
    }
    let feature_names = || (0..NUM_FEATURES).map(feature_name);
    let mut signal_table = signal.table(CHANNEL_NAMES.iter().map(|s| s.to_string()));
    if !cfg.signal_models {
        signal_table.rows.clear();
    }
    let report = ExperimentReport {
        folds: outcomes
            .iter()
            .map(|o| AccuracyRow {
                subject: o.fold.test_subject.to_string(),
                accuracy: o.accuracy,
            })
            .collect(),
        signal_mse: signal_table,
        feature_mse: feature.table(feature_names()),
        naive_feature_mse: naive.table(feature_names()),
    };
    Ok((report, outcomes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_mse_examples() {
        assert_eq!(mse_per_window(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse_per_window(&[0.0; 4], &[0.5; 4]).unwrap(), 0.25);
        assert!(mse_per_window(&[0.0; 3], &[0.0; 4]).is_err());
    }

    #[test]
    fn fold_seeds_differ() {
        assert_ne!(fold_seed(7, 0), fold_seed(7, 1));
        assert_eq!(fold_seed(7, 3), fold_seed(7, 3));
    }
}
