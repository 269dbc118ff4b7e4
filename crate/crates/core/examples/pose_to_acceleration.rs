//! Pose keypoints to a 3D body-center track and video-derived acceleration.

use virtual_imu::dataset::{calibrate, center_track, PipelineConfig};
use virtual_imu::signal::video_acceleration;
use virtual_imu::synthetic::{generate_subject, SyntheticConfig};
use virtual_imu::Activity;

fn main() -> virtual_imu::Result<()> {
    let synth = SyntheticConfig::default();
    let cfg = PipelineConfig::default();

    // The walking recording sweeps the full depth range, so it calibrates the subject.
    let walk = generate_subject(&synth, 0, Activity::Walking)?;
    let cal = calibrate(&walk.pose, &cfg)?;
    println!(
        "calibration: pose scale {:.1}..{:.1} px maps to depth {}..{} m",
        cal.scale_min, cal.scale_max, cal.z_far, cal.z_near
    );

    let rec = generate_subject(&synth, 0, Activity::Climbing)?;
    let track = center_track(&rec.pose, &cal, &cfg)?;
    for (i, p) in track.samples.iter().enumerate().step_by(25).take(5) {
        let truth = rec.trajectory.position(i as f64 / track.sample_rate);
        println!(
            "t={:>4.1}s  estimated ({:+.3}, {:+.3}, {:.3})  true ({:+.3}, {:+.3}, {:.3})",
            i as f64 / track.sample_rate,
            p[0], p[1], p[2], truth[0], truth[1], truth[2]
        );
    }

    let acc = video_acceleration(&track, cfg.target_rate, cfg.cutoff)?;
    let peak = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    println!(
        "{} acceleration samples at {} Hz, peak |a| x {:.2} y {:.2} z {:.2} m/s^2",
        acc.len(),
        acc.sample_rate,
        peak(&acc.x),
        peak(&acc.y),
        peak(&acc.z)
    );
    Ok(())
}
