//! Writes a small synthetic corpus and reads it back through both pipelines.

use virtual_imu::dataset::{load_corpus, PipelineConfig};
use virtual_imu::synthetic::{generate_corpus, SyntheticConfig};

fn main() -> virtual_imu::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("virtual-imu-corpus"));
    let cfg = SyntheticConfig {
        n_subjects: 3,
        duration: 30.0,
        ..SyntheticConfig::default()
    };
    let manifest = generate_corpus(&cfg, &dir)?;
    println!("{} recordings in {}", manifest.entries.len(), dir.display());
    for s in &manifest.subjects {
        println!(
            "  {}: height {:.2} m, amplitude x{:.2}, frequency x{:.2}",
            s.id, s.height, s.amplitude_scale, s.frequency_scale
        );
    }

    let data = load_corpus(&dir, &PipelineConfig::default())?;
    println!("{} paired windows from subjects {:?}", data.len(), data.subjects());
    Ok(())
}
