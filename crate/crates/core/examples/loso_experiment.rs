//! The full leave-one-subject-out comparison on a synthetic corpus:
//! classifiers trained on sensor, generated and video features, each
//! tested on the held-out subject's sensor features.
//!
//! Pass `--quick` for a reduced schedule.

use virtual_imu::dataset::{load_corpus, PipelineConfig};
use virtual_imu::eval::{render_text, run_experiment, ExperimentConfig};
use virtual_imu::synthetic::{generate_corpus, SyntheticConfig};

fn main() -> virtual_imu::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let quick = std::env::args().any(|a| a == "--quick");
    let dir = std::env::temp_dir().join("virtual-imu-loso-example");
    let synth = SyntheticConfig {
        duration: if quick { 20.0 } else { 60.0 },
        ..SyntheticConfig::default()
    };
    generate_corpus(&synth, &dir)?;
    let data = load_corpus(&dir, &PipelineConfig::default())?;

    let mut cfg = ExperimentConfig::default();
    if quick {
        cfg.train.max_epochs = 5;
        cfg.signal_models = false;
    }
    let (report, outcomes) = run_experiment(&data, &cfg)?;
    print!("{}", render_text(&report)?);
    if let Some(r) = report.feature_mse_reduction() {
        println!("\nfeature MSE reduction over the video statistics: {:.1}%", 100.0 * r);
    }
    for o in &outcomes {
        println!(
            "fold {}: validation subject {:?}, seed {}",
            o.fold.test_subject,
            o.validation_subject.as_ref().map(|s| s.as_str()),
            o.seed
        );
    }
    Ok(())
}
