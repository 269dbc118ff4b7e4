//! Trains a signal-head network that maps video-derived windows to the
//! sensor's z channel, then saves and reloads it.

use virtual_imu::dataset::{load_corpus, PipelineConfig};
use virtual_imu::eval::ExperimentConfig;
use virtual_imu::net::{evaluate_mae, load_model, save_model, train, window_input, Head, Sample, TrainConfig, TransformModel};
use virtual_imu::synthetic::{generate_corpus, SyntheticConfig};

fn main() -> virtual_imu::Result<()> {
    let dir = std::env::temp_dir().join("virtual-imu-signal-example");
    let synth = SyntheticConfig {
        n_subjects: 2,
        duration: 30.0,
        ..SyntheticConfig::default()
    };
    generate_corpus(&synth, &dir)?;
    let data = load_corpus(&dir, &PipelineConfig::default())?;

    let z = 2;
    let cfg = ExperimentConfig::default().model.with_head(Head::Signal).with_seed(1);
    let mut model = TransformModel::<f32>::build(cfg)?;
    println!("{} parameters", model.num_params());

    let samples = data
        .video
        .windows
        .iter()
        .zip(&data.imu.windows)
        .map(|(v, i)| {
            let target = i.channels[z].iter().map(|&x| x as f32).collect();
            Sample::new(&model, &window_input::<f32>(v), target)
        })
        .collect::<virtual_imu::Result<Vec<_>>>()?;
    let (train_set, val_set) = samples.split_at(samples.len() * 4 / 5);

    let history = train(
        &mut model,
        train_set,
        val_set,
        &TrainConfig {
            max_epochs: 15,
            patience: 5,
            ..TrainConfig::default()
        },
    )?;
    println!(
        "train MAE {:.3} -> {:.3}, kept epoch {} of {}",
        history.initial_train_mae,
        history.train_mae.last().unwrap(),
        history.best_epoch,
        history.epochs_run
    );

    let path = dir.join("z.ckpt");
    save_model(&model, "z", &path)?;
    let back = load_model(&path, Some(model.config()))?;
    println!(
        "reloaded '{}', validation MAE {:.3}",
        back.label,
        evaluate_mae(&back.model, val_set)
    );
    Ok(())
}
