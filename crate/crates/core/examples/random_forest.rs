//! Random-forest activity classifier on standardized window statistics.

use virtual_imu::features::{compute_features, Scaler};
use virtual_imu::forest::{train_forest, ForestConfig};
use virtual_imu::signal::{condition_imu, standard_windows};
use virtual_imu::synthetic::{generate_subject, SyntheticConfig};
use virtual_imu::Activity;

fn main() -> virtual_imu::Result<()> {
    let cfg = SyntheticConfig {
        n_subjects: 3,
        duration: 30.0,
        ..SyntheticConfig::default()
    };
    let mut train = Vec::new();
    let mut test = Vec::new();
    for subject in 0..cfg.n_subjects {
        for activity in Activity::ALL {
            let rec = generate_subject(&cfg, subject, activity)?;
            let windows = standard_windows(&condition_imu(&rec.imu)?)?;
            let target = if subject == 2 { &mut test } else { &mut train };
            target.extend(windows.windows.iter().map(compute_features));
        }
    }

    let scaler = Scaler::fit(&train)?;
    let forest = train_forest(
        &scaler.apply_all(&train)?,
        &ForestConfig {
            n_trees: 50,
            seed: 3,
            ..ForestConfig::default()
        },
    )?;
    let test = scaler.apply_all(&test)?;
    println!(
        "{} trees, deepest {}; accuracy on an unseen subject {:.3}",
        forest.trees.len(),
        forest.trees.iter().map(|t| t.depth()).max().unwrap_or(0),
        forest.accuracy(&test)?
    );
    for v in test.iter().step_by(14).take(6) {
        println!("  {:<10} predicted {}", v.activity.to_string(), forest.predict(v)?);
    }
    Ok(())
}
