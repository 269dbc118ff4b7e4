//! Sliding windows, the 28 statistics and standardization.

use virtual_imu::features::{compute_features, feature_name, Scaler, NUM_FEATURES};
use virtual_imu::signal::{condition_imu, standard_windows};
use virtual_imu::synthetic::{generate_subject, SyntheticConfig};
use virtual_imu::Activity;

fn main() -> virtual_imu::Result<()> {
    let cfg = SyntheticConfig::default();
    let mut vectors = Vec::new();
    for activity in [Activity::Walking, Activity::FloorWork] {
        let rec = generate_subject(&cfg, 0, activity)?;
        let windows = standard_windows(&condition_imu(&rec.imu)?)?;
        println!("{activity}: {} windows of {} samples", windows.len(), windows.window_len);
        vectors.extend(windows.windows.iter().map(compute_features));
    }

    let first = &vectors[0];
    for k in (0..NUM_FEATURES).step_by(7) {
        println!("  {:<8} {:>8.3}", feature_name(k), first.values[k]);
    }

    let scaler = Scaler::fit(&vectors)?;
    let standardized = scaler.apply_all(&vectors)?;
    let z_avg = 2 * 7;
    for v in [&standardized[0], standardized.last().unwrap()] {
        println!("{} standardized {} = {:+.2}", v.activity, feature_name(z_avg), v.values[z_avg]);
    }
    Ok(())
}
