use virtual_imu::dataset::{calibrate, video_track, PipelineConfig};
use virtual_imu::pose::parse_pose_sequence;
use virtual_imu::signal::{condition_imu, standard_windows, AccelTrack};
use virtual_imu::synthetic::{generate_corpus, generate_subject, subject_profile, CorpusManifest, NoiseConfig, SyntheticConfig};
use virtual_imu::Activity;

fn clean(gravity: f64, posture: bool) -> SyntheticConfig {
    SyntheticConfig {
        n_subjects: 1,
        duration: 30.0,
        noise: NoiseConfig::none(),
        gravity,
        posture,
        seed: 3,
        ..SyntheticConfig::default()
    }
}

/// Video-derived and conditioned sensor tracks of one recording, with the
/// subject's true height as the metric reference.
fn tracks(cfg: &SyntheticConfig, activity: Activity) -> (AccelTrack, AccelTrack, f64) {
    let mut pipeline = PipelineConfig::default();
    pipeline.pose.subject_height = subject_profile(cfg, 0).height;
    let walk = generate_subject(cfg, 0, Activity::Walking).unwrap();
    let cal = calibrate(&walk.pose, &pipeline).unwrap();
    let rec = generate_subject(cfg, 0, activity).unwrap();
    let video = video_track(&rec.pose, &cal, &pipeline).unwrap();
    let imu = condition_imu(&rec.imu).unwrap();
    (video, imu, rec.trajectory.tilt)
}

fn rms(v: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
    (sum / n as f64).sqrt()
}

#[test]
fn noise_free_video_acceleration_matches_sensor() {
    let cfg = clean(0.0, false);
    for activity in Activity::ALL {
        let (video, imu, _) = tracks(&cfg, activity);
        let n = video.len().min(imu.len());
        // Skip the filter edges.
        let range = 25..n - 25;
        for (name, v, i) in [("x", &video.x, &imu.x), ("y", &video.y, &imu.y), ("z", &video.z, &imu.z)] {
            let signal = rms(range.clone().map(|k| i[k]));
            if signal < 1e-3 {
                continue;
            }
            let err = rms(range.clone().map(|k| v[k] - i[k]));
            assert!(err <= 0.05 * signal, "{activity} {name}: error {err:.4} vs signal {signal:.4}");
        }
    }
}

#[test]
fn tilted_gravity_offsets_the_z_channel() {
    let g = 9.81;
    let cfg = clean(g, true);
    let (video, imu, tilt) = tracks(&cfg, Activity::FloorWork);
    assert!(tilt.to_degrees() > 40.0);
    let n = video.len().min(imu.len());
    let mean = |v: &[f64]| v[..n].iter().sum::<f64>() / n as f64;
    let offset = mean(&imu.z) - mean(&video.z);
    let expected = g * tilt.cos();
    assert!(
        (offset - expected).abs() <= 0.02 * expected,
        "offset {offset:.4}, projected gravity {expected:.4}"
    );
}

#[test]
fn corpus_files_and_window_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SyntheticConfig::default();
    let manifest = generate_corpus(&cfg, dir.path()).unwrap();
    assert_eq!(manifest.entries.len(), 24);
    let count = |suffix: &str| {
        std::fs::read_dir(dir.path())
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(suffix))
            .count()
    };
    assert_eq!(count(".pose.json"), 24);
    assert_eq!(count(".imu.csv"), 24);
    assert_eq!(CorpusManifest::load(dir.path()).unwrap(), manifest);

    let pipeline = PipelineConfig::default();
    let read = |name: &str| parse_pose_sequence(std::fs::File::open(dir.path().join(name)).unwrap()).unwrap();
    let s02: Vec<_> = manifest.entries.iter().filter(|e| e.subject.as_str() == "S02").collect();
    let walk = s02.iter().find(|e| e.activity == Activity::Walking).unwrap();
    let cal = calibrate(&read(&walk.pose), &pipeline).unwrap();
    for entry in s02 {
        let seq = read(&entry.pose);
        let video = standard_windows(&video_track(&seq, &cal, &pipeline).unwrap()).unwrap();
        let imu = standard_windows(&condition_imu(&AccelTrack::load(&dir.path().join(&entry.imu)).unwrap()).unwrap()).unwrap();
        assert_eq!((video.len(), imu.len()), (59, 59), "{}", entry.pose);
        assert!(imu.windows.iter().all(|w| w.channels.iter().flatten().all(|v| v.is_finite())));
    }
}
