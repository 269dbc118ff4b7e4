//! Deterministic paired pose / accelerometer data with a known coupling.
//!
//! Each subject and activity gets a smooth hip trajectory built from a few
//! sinusoids. The camera sees a rigid upright body around that trajectory
//! through a pinhole with a centered principal point. The hip sensor reads the
//! analytic second derivative of the trajectory and gravity, both rotated by
//! the trunk tilt, plus white noise.
//!
//! Coordinates are camera-aligned: `x` lateral, `y` image-down, `z` depth.
//! An upright sensor shares these axes and reads gravity as `+g` on `z`.
//! The sensor is fixed to the trunk, so a tilt of `θ` about `x` rotates the
//! whole reading: `R(θ) (a + g ẑ)` with `R(θ) ẑ = (0, sin θ, cos θ)`.

use std::f64::consts::PI;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{write_pose_sequence, Keypoint, PoseFrame, PoseSequence, NUM_KEYPOINTS};
use crate::signal::{AccelTrack, IMU_RATE, TARGET_RATE, WINDOW_SECONDS};
use crate::types::{derive_seed, Activity, Provenance, SubjectId};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CORPUS_FORMAT: u32 = 1;

/// Period of the walking depth sweep; the sweep starts at the near distance
/// and reaches the far one half a period later.
pub const WALK_SWEEP_PERIOD: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    pub focal_px: f64,
    /// Calibration distances; the walking sweep spans exactly this range.
    pub z_near: f64,
    pub z_far: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig {
            focal_px: 1000.0,
            z_near: 2.0,
            z_far: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Standard deviation of the per-keypoint pixel jitter.
    pub pose_jitter_px: f64,
    /// Standard deviation of the white accelerometer noise.
    pub imu_noise_ms2: f64,
    /// Probability that a keypoint is reported with low confidence.
    pub dropout: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            pose_jitter_px: 0.25,
            imu_noise_ms2: 0.1,
            dropout: 0.01,
        }
    }
}

impl NoiseConfig {
    pub fn none() -> Self {
        NoiseConfig {
            pose_jitter_px: 0.0,
            imu_noise_ms2: 0.0,
            dropout: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_subjects: usize,
    pub activities: Vec<Activity>,
    /// Seconds per recording.
    pub duration: f64,
    pub camera: CameraConfig,
    pub noise: NoiseConfig,
    pub gravity: f64,
    /// When false every trunk stays upright.
    pub posture: bool,
    /// When false every subject shares the nominal archetype parameters.
    pub subject_variation: bool,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_subjects: 4,
            activities: Activity::ALL.to_vec(),
            duration: 60.0,
            camera: CameraConfig::default(),
            noise: NoiseConfig::default(),
            gravity: 9.81,
            posture: true,
            subject_variation: true,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let n = &self.noise;
        if n.pose_jitter_px < 0.0 || n.imu_noise_ms2 < 0.0 || !(0.0..1.0).contains(&n.dropout) {
            return Err(Error::Config("noise levels must be non-negative and dropout below 1".into()));
        }
        if self.n_subjects == 0 || self.n_subjects > 99 {
            return Err(Error::Config("subject count must be in 1..=99".into()));
        }
        if self.activities.is_empty() {
            return Err(Error::Config("at least one activity is required".into()));
        }
        if !(self.duration >= WINDOW_SECONDS) {
            return Err(Error::Config(format!("duration must be at least {WINDOW_SECONDS} s")));
        }
        if !(self.camera.focal_px > 0.0 && 0.0 < self.camera.z_near && self.camera.z_near < self.camera.z_far) {
            return Err(Error::Config("camera needs a positive focal length and 0 < z_near < z_far".into()));
        }
        if !(self.gravity >= 0.0) {
            return Err(Error::Config("gravity must be non-negative".into()));
        }
        Ok(())
    }
}

/// One sinusoidal component of the hip motion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Oscillation {
    pub axis: usize,
    pub amplitude: f64,
    pub frequency: f64,
}

/// Motion and posture profile of an activity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Archetype {
    pub activity: Activity,
    pub oscillations: Vec<Oscillation>,
    /// Resting depth; walking sweeps the calibration range instead.
    pub depth: f64,
    pub tilt_deg: f64,
}

const X: usize = 0;
const Y: usize = 1;
const Z: usize = 2;

pub fn archetype(activity: Activity) -> Archetype {
    let osc = |axis, amplitude, frequency| Oscillation {
        axis,
        amplitude,
        frequency,
    };
    let (oscillations, depth, tilt_deg) = match activity {
        Activity::Cleaning => (vec![osc(X, 0.10, 0.8), osc(X, 0.03, 2.4), osc(Z, 0.03, 0.8)], 3.0, 20.0),
        Activity::Climbing => (vec![osc(Y, 0.15, 0.5), osc(Y, 0.04, 1.6), osc(X, 0.02, 0.5)], 4.0, 10.0),
        Activity::FloorWork => (vec![osc(X, 0.05, 1.2), osc(Y, 0.02, 2.5)], 3.5, 60.0),
        Activity::Painting => (vec![osc(Y, 0.06, 0.7), osc(X, 0.03, 1.4)], 2.5, 5.0),
        Activity::Walking => (vec![osc(Y, 0.03, 2.0), osc(X, 0.03, 1.0), osc(Z, 0.02, 2.0)], 3.5, 0.0),
        Activity::HandsUp => (vec![osc(Y, 0.015, 3.0), osc(X, 0.02, 0.6)], 4.5, -15.0),
    };
    Archetype {
        activity,
        oscillations,
        depth,
        tilt_deg,
    }
}

/// Per-subject variation applied to every archetype.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectProfile {
    pub id: SubjectId,
    pub height: f64,
    pub amplitude_scale: f64,
    pub frequency_scale: f64,
    pub tilt_offset_deg: f64,
    pub lateral_offset: f64,
}

pub fn subject_id(index: usize) -> SubjectId {
    SubjectId::new(format!("S{:02}", index + 1))
}

pub fn subject_profile(cfg: &SyntheticConfig, index: usize) -> SubjectProfile {
    let id = subject_id(index);
    if !cfg.subject_variation {
        return SubjectProfile {
            id,
            height: 1.75,
            amplitude_scale: 1.0,
            frequency_scale: 1.0,
            tilt_offset_deg: 0.0,
            lateral_offset: 0.0,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1_000 + index as u64));
    SubjectProfile {
        id,
        height: rng.gen_range(1.60..1.90),
        amplitude_scale: rng.gen_range(0.7..1.3),
        frequency_scale: rng.gen_range(0.85..1.15),
        tilt_offset_deg: rng.gen_range(-5.0..5.0),
        lateral_offset: rng.gen_range(-0.4..0.4),
    }
}

/// The hidden ground truth of one recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub activity: Activity,
    pub base: [f64; 3],
    /// `(axis, amplitude, angular frequency, phase)`.
    pub components: Vec<(usize, f64, f64, f64)>,
    /// Walking depth sweep `(mean, half range)`, replacing the resting depth.
    pub sweep: Option<(f64, f64)>,
    /// Trunk tilt in radians.
    pub tilt: f64,
}

impl Trajectory {
    pub fn new(cfg: &SyntheticConfig, profile: &SubjectProfile, activity: Activity, rng: &mut impl Rng) -> Self {
        let arch = archetype(activity);
        let vary = cfg.subject_variation;
        let components: Vec<_> = arch
            .oscillations
            .iter()
            .map(|o| {
                let phase = if vary { rng.gen_range(0.0..2.0 * PI) } else { 0.0 };
                (
                    o.axis,
                    o.amplitude * profile.amplitude_scale,
                    2.0 * PI * o.frequency * profile.frequency_scale,
                    phase,
                )
            })
            .collect();
        let sweep = (activity == Activity::Walking).then(|| {
            let (n, f) = (cfg.camera.z_near, cfg.camera.z_far);
            (0.5 * (n + f), 0.5 * (f - n))
        });
        let tilt = if cfg.posture {
            (arch.tilt_deg + profile.tilt_offset_deg).to_radians()
        } else {
            0.0
        };
        Trajectory {
            activity,
            base: [profile.lateral_offset, 0.1, arch.depth],
            components,
            sweep,
            tilt,
        }
    }

    pub fn position(&self, t: f64) -> [f64; 3] {
        let mut p = self.base;
        if let Some((mean, half)) = self.sweep {
            p[Z] = mean - half * (2.0 * PI * t / WALK_SWEEP_PERIOD).cos();
        }
        for &(axis, a, w, phi) in &self.components {
            p[axis] += a * (w * t + phi).sin();
        }
        p
    }

    pub fn acceleration(&self, t: f64) -> [f64; 3] {
        let mut acc = [0.0; 3];
        if let Some((_, half)) = self.sweep {
            let w = 2.0 * PI / WALK_SWEEP_PERIOD;
            acc[Z] = half * w * w * (w * t).cos();
        }
        for &(axis, a, w, phi) in &self.components {
            acc[axis] -= a * w * w * (w * t + phi).sin();
        }
        acc
    }

    /// Noise-free sensor reading: the trunk rotation applied to the
    /// acceleration plus the upright gravity reading.
    pub fn sensor_reading(&self, t: f64, g: f64) -> [f64; 3] {
        let [ax, ay, az] = self.acceleration(t);
        let az = az + g;
        let (s, c) = self.tilt.sin_cos();
        [ax, c * ay + s * az, c * az - s * ay]
    }
}

/// Keypoint offsets from the hip midpoint as fractions of body height
/// (lateral, vertical). The eyes and ears share the top row and both ankles
/// the bottom row, so the vertical extent is exactly one body height and
/// survives the loss of any single keypoint.
const BODY: [(f64, f64); NUM_KEYPOINTS] = [
    (0.0, -0.44),   // nose
    (-0.02, -0.47), // left eye
    (0.02, -0.47),  // right eye
    (-0.05, -0.47), // left ear
    (0.05, -0.47),  // right ear
    (-0.13, -0.32), // left shoulder
    (0.13, -0.32),  // right shoulder
    (-0.16, -0.14), // left elbow
    (0.16, -0.14),  // right elbow
    (-0.17, 0.02),  // left wrist
    (0.17, 0.02),   // right wrist
    (-0.08, 0.0),   // left hip
    (0.08, 0.0),    // right hip
    (-0.08, 0.26),  // left knee
    (0.08, 0.26),   // right knee
    (-0.08, 0.53),  // left ankle
    (0.08, 0.53),   // right ankle
];

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// One synthetic recording with its hidden trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub pose: PoseSequence,
    pub imu: AccelTrack,
    pub trajectory: Trajectory,
}

/// Synthesizes the pose sequence (25 fps) and raw accelerometer track
/// (100 Hz) of one subject performing one activity.
pub fn generate_subject(cfg: &SyntheticConfig, subject: usize, activity: Activity) -> Result<Recording> {
    cfg.validate()?;
    let profile = subject_profile(cfg, subject);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(derive_seed(cfg.seed, subject as u64), activity.index() as u64));
    let traj = Trajectory::new(cfg, &profile, activity, &mut rng);

    let jitter = Normal::new(0.0, cfg.noise.pose_jitter_px.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let n_frames = (cfg.duration * TARGET_RATE).round() as usize;
    let f = cfg.camera.focal_px;
    let h = profile.height;
    let frames = (0..n_frames)
        .map(|j| {
            let t = j as f64 / TARGET_RATE;
            let [px, py, pz] = traj.position(t);
            let mut keypoints = [Keypoint::default(); NUM_KEYPOINTS];
            for (kp, &(dx, dy)) in keypoints.iter_mut().zip(&BODY) {
                let mut u = f * (px + dx * h) / pz;
                let mut v = f * (py + dy * h) / pz;
                if cfg.noise.pose_jitter_px > 0.0 {
                    u += jitter.sample(&mut rng);
                    v += jitter.sample(&mut rng);
                }
                let confidence = if rng.gen::<f64>() < cfg.noise.dropout {
                    rng.gen_range(0.0..0.2)
                } else {
                    rng.gen_range(0.6..1.0)
                };
                *kp = Keypoint::new(round3(u), round3(v), round3(confidence));
            }
            PoseFrame {
                timestamp: round3(t),
                keypoints,
            }
        })
        .collect();
    let pose = PoseSequence {
        subject: profile.id.clone(),
        activity,
        frame_rate: TARGET_RATE,
        frames,
    };

    let imu_noise = Normal::new(0.0, cfg.noise.imu_noise_ms2.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let n_imu = (cfg.duration * IMU_RATE).round() as usize;
    let mut axes = [Vec::with_capacity(n_imu), Vec::with_capacity(n_imu), Vec::with_capacity(n_imu)];
    for k in 0..n_imu {
        let t = k as f64 / IMU_RATE;
        let reading = traj.sensor_reading(t, cfg.gravity);
        for (axis, r) in axes.iter_mut().zip(reading) {
            let noise = if cfg.noise.imu_noise_ms2 > 0.0 { imu_noise.sample(&mut rng) } else { 0.0 };
            axis.push(r + noise);
        }
    }
    let [x, y, z] = axes;
    let imu = AccelTrack::from_xyz(IMU_RATE, x, y, z, profile.id, activity, Provenance::RealImu)?;
    Ok(Recording {
        pose,
        imu,
        trajectory: traj,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub subject: SubjectId,
    pub activity: Activity,
    pub pose: String,
    pub imu: String,
}

/// Ground truth and file index written next to a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub format: u32,
    pub generator: String,
    pub config: SyntheticConfig,
    /// Sequence whose depth sweep calibrates each subject.
    pub calibration_activity: Activity,
    pub subjects: Vec<SubjectProfile>,
    pub archetypes: Vec<Archetype>,
    pub entries: Vec<CorpusEntry>,
}

impl CorpusManifest {
    pub fn load(dir: &Path) -> Result<CorpusManifest> {
        let path = dir.join(MANIFEST_FILE);
        let file = File::open(&path).map_err(|e| Error::at_path(&path, e))?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

pub fn pose_file_name(subject: &SubjectId, activity: Activity) -> String {
    format!("{subject}_{}.pose.json", activity.name())
}

pub fn imu_file_name(subject: &SubjectId, activity: Activity) -> String {
    format!("{subject}_{}.imu.csv", activity.name())
}

/// Writes every subject/activity pair as `<id>_<Activity>.pose.json` and
/// `<id>_<Activity>.imu.csv` (with its metadata sidecar), plus
/// `manifest.json`.
pub fn generate_corpus(cfg: &SyntheticConfig, dir: &Path) -> Result<CorpusManifest> {
    cfg.validate()?;
    if cfg.subject_variation && !cfg.activities.contains(&Activity::Walking) {
        return Err(Error::Config("the corpus needs Walking recordings for depth calibration".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::at_path(dir, e))?;
    let mut entries = Vec::new();
    for s in 0..cfg.n_subjects {
        for &activity in &cfg.activities {
            let rec = generate_subject(cfg, s, activity)?;
            let id = rec.pose.subject.clone();
            let pose_name = pose_file_name(&id, activity);
            let pose_path = dir.join(&pose_name);
            let file = File::create(&pose_path).map_err(|e| Error::at_path(&pose_path, e))?;
            write_pose_sequence(&rec.pose, BufWriter::new(file))?;
            let imu_name = imu_file_name(&id, activity);
            rec.imu.save(&dir.join(&imu_name))?;
            entries.push(CorpusEntry {
                subject: id,
                activity,
                pose: pose_name,
                imu: imu_name,
            });
        }
    }
    let manifest = CorpusManifest {
        format: CORPUS_FORMAT,
        generator: format!("virtual-imu {}", env!("CARGO_PKG_VERSION")),
        config: cfg.clone(),
        calibration_activity: Activity::Walking,
        subjects: (0..cfg.n_subjects).map(|s| subject_profile(cfg, s)).collect(),
        archetypes: cfg.activities.iter().map(|&a| archetype(a)).collect(),
        entries,
    };
    let path: PathBuf = dir.join(MANIFEST_FILE);
    let file = File::create(&path).map_err(|e| Error::at_path(&path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short() -> SyntheticConfig {
        SyntheticConfig {
            n_subjects: 2,
            duration: 6.0,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn same_seed_same_recording() {
        let a = generate_subject(&short(), 1, Activity::Cleaning).unwrap();
        let b = generate_subject(&short(), 1, Activity::Cleaning).unwrap();
        assert_eq!(a, b);
        let c = generate_subject(&SyntheticConfig { seed: 1, ..short() }, 1, Activity::Cleaning).unwrap();
        assert_ne!(a.imu, c.imu);
    }

    #[test]
    fn lengths_and_labels() {
        let r = generate_subject(&short(), 0, Activity::HandsUp).unwrap();
        assert_eq!(r.pose.frames.len(), 150);
        assert_eq!(r.imu.len(), 600);
        assert_eq!(r.pose.activity, Activity::HandsUp);
        assert_eq!(r.imu.subject, SubjectId::new("S01"));
        assert!(r.imu.x.iter().chain(&r.imu.y).chain(&r.imu.z).all(|v| v.is_finite()));
    }

    #[test]
    fn acceleration_is_second_derivative_of_position() {
        let r = generate_subject(&short(), 0, Activity::Walking).unwrap();
        let h = 1e-3;
        for t in [0.3, 1.7, 4.1] {
            let (a, b, c) = (r.trajectory.position(t - h), r.trajectory.position(t), r.trajectory.position(t + h));
            let acc = r.trajectory.acceleration(t);
            for k in 0..3 {
                let fd = (a[k] - 2.0 * b[k] + c[k]) / (h * h);
                assert!((fd - acc[k]).abs() < 1e-4, "{fd} vs {}", acc[k]);
            }
        }
    }

    #[test]
    fn walking_sweep_hits_calibration_depths() {
        let cfg = short();
        let r = generate_subject(&cfg, 0, Activity::Walking).unwrap();
        assert!((r.trajectory.position(0.0)[2] - cfg.camera.z_near).abs() < 0.05);
        assert!((r.trajectory.position(3.0)[2] - cfg.camera.z_far).abs() < 0.05);
    }

    #[test]
    fn rejects_bad_config() {
        let mut c = short();
        c.noise.pose_jitter_px = -1.0;
        assert!(c.validate().is_err());
        let c = SyntheticConfig { duration: 1.0, ..short() };
        assert!(c.validate().is_err());
    }
}
