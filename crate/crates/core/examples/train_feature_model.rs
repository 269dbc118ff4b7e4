//! Trains feature-head networks for two statistics and compares them with
//! statistics computed straight from the video-derived windows.

use virtual_imu::dataset::{load_corpus, PipelineConfig};
use virtual_imu::eval::ExperimentConfig;
use virtual_imu::features::{compute_features, feature_index, FeatureVector, Scaler};
use virtual_imu::net::{train, window_input, Head, Sample, TrainConfig, TransformModel};
use virtual_imu::synthetic::{generate_corpus, SyntheticConfig};
use virtual_imu::SubjectId;

fn main() -> virtual_imu::Result<()> {
    let dir = std::env::temp_dir().join("virtual-imu-feature-example");
    let synth = SyntheticConfig {
        n_subjects: 3,
        duration: 30.0,
        ..SyntheticConfig::default()
    };
    generate_corpus(&synth, &dir)?;
    let data = load_corpus(&dir, &PipelineConfig::default())?;
    let held_out = SubjectId::new("S03");

    let imu: Vec<FeatureVector> = data.imu.windows.iter().map(compute_features).collect();
    let video: Vec<FeatureVector> = data.video.windows.iter().map(compute_features).collect();
    let (train_idx, test_idx): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|&i| imu[i].subject != held_out);
    let pick = |v: &[FeatureVector]| train_idx.iter().map(|&i| v[i].clone()).collect::<Vec<_>>();
    let imu_std = Scaler::fit_excluding(&pick(&imu), &held_out)?.apply_all(&imu)?;
    let video_std = Scaler::fit_excluding(&pick(&video), &held_out)?.apply_all(&video)?;

    for name in ["z_avg", "tot_var"] {
        let k = feature_index(name).unwrap();
        let cfg = ExperimentConfig::default().model.with_head(Head::Feature).with_seed(k as u64);
        let mut model = TransformModel::<f32>::build(cfg)?;
        let sample = |i: usize| Sample::new(&model, &window_input::<f32>(&data.video.windows[i]), vec![imu_std[i].values[k] as f32]);
        let train_set = train_idx.iter().map(|&i| sample(i)).collect::<virtual_imu::Result<Vec<_>>>()?;
        train(
            &mut model,
            &train_set,
            &[],
            &TrainConfig {
                max_epochs: 20,
                ..TrainConfig::default()
            },
        )?;

        let (mut model_mse, mut naive_mse) = (0.0, 0.0);
        for &i in &test_idx {
            let predicted = model.predict_unpadded(&window_input::<f32>(&data.video.windows[i]))?[0] as f64;
            model_mse += (predicted - imu_std[i].values[k]).powi(2);
            naive_mse += (video_std[i].values[k] - imu_std[i].values[k]).powi(2);
        }
        let n = test_idx.len() as f64;
        println!("{name}: held-out MSE {:.3} with the model, {:.3} from video statistics", model_mse / n, naive_mse / n);
    }
    Ok(())
}
