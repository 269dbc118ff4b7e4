//! Low-pass filtering and resampling a 100 Hz accelerometer recording.

use virtual_imu::signal::{condition_imu, zero_phase_lowpass};
use virtual_imu::synthetic::{generate_subject, SyntheticConfig};
use virtual_imu::Activity;

fn main() -> virtual_imu::Result<()> {
    let rec = generate_subject(&SyntheticConfig::default(), 1, Activity::Painting)?;
    let raw = &rec.imu;
    let conditioned = condition_imu(raw)?;
    println!(
        "raw: {} samples at {} Hz; conditioned: {} samples at {} Hz",
        raw.len(),
        raw.sample_rate,
        conditioned.len(),
        conditioned.sample_rate
    );

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!(
        "mean z before {:.3}, after {:.3} (the gravity offset survives filtering)",
        mean(&raw.z),
        mean(&conditioned.z)
    );

    let rate = 100.0;
    for f in [2.0, 12.0, 40.0] {
        let sine: Vec<f64> = (0..1000).map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / rate).sin()).collect();
        let out = zero_phase_lowpass(&sine, 12.0, rate)?;
        let amp = out[300..700].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        println!("{f:>4} Hz sine keeps {:.1}% of its amplitude", 100.0 * amp);
    }
    Ok(())
}
