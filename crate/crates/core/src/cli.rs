//! Command-line front end. [`run`] parses arguments, executes one
//! subcommand and maps the outcome to an exit code.
//!
//! Settings resolve in this order, highest first: command-line flags, the
//! `key=value` file named by `--config`, environment variables, defaults.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use log::info;

use crate::dataset::{calibrate, center_track, load_corpus, load_pose, PairedWindows, PipelineConfig};
use crate::error::{Error, Result};
use crate::eval::{render_csv, render_text, run_experiment, ExperimentConfig, ExperimentManifest};
use crate::features::{
    compute_features, feature_index, read_features_csv, write_features_csv, FeatureVector, Scaler, NUM_FEATURES,
};
use crate::forest::{train_forest, Forest, ForestConfig};
use crate::net::{generate_signals, load_model, save_model, train, window_input, Head, Sample, TrainConfig, TransformModel};
use crate::pose::CenterTrack3D;
use crate::signal::{condition_imu, standard_windows, video_acceleration, AccelTrack, WindowSet, CHANNEL_NAMES};
use crate::synthetic::{generate_corpus, SyntheticConfig};
use crate::types::{derive_seed, Activity, SubjectId};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

/// Default for `--data` when the flag is absent.
pub const DATA_ENV: &str = "VIMU_DATA";

#[derive(Debug, Parser)]
#[command(name = "virtual-imu", version = crate::eval::version_string(), args_override_self = true)]
#[command(about = "Virtual accelerometer signals from 2D pose sequences")]
struct Cli {
    /// Worker threads; 0 uses every available core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// `key=value` file whose keys are long flag names of the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic corpus of pose and sensor recordings.
    Synth(SynthArgs),
    /// Estimate a 3D body-center track from a pose file.
    Extract(ExtractArgs),
    /// Turn a center track or a sensor recording into acceleration windows.
    Accel(AccelArgs),
    /// Compute the 28 window statistics.
    Featurize(FeaturizeArgs),
    /// Train one transformation model on a corpus.
    TrainGen(TrainGenArgs),
    /// Apply transformation models to video-derived windows.
    Generate(GenerateArgs),
    /// Train an activity classifier on a feature file.
    TrainHar(TrainHarArgs),
    /// Run the leave-one-subject-out comparison and write reports.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    subjects: usize,
    /// Seconds per recording.
    #[arg(long, default_value_t = 60.0)]
    duration: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    /// Pose JSON file.
    #[arg(long)]
    pose: PathBuf,
    /// Pose file used for depth calibration; defaults to `--pose`.
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Output CSV (`t,x,y,z`).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2.0)]
    z_near: f64,
    #[arg(long, default_value_t = 5.0)]
    z_far: f64,
}

#[derive(Debug, Args)]
struct AccelArgs {
    /// Center-track CSV written by `extract`.
    #[arg(long, conflicts_with = "imu", required_unless_present = "imu")]
    track: Option<PathBuf>,
    /// Raw sensor CSV with its JSON sidecar.
    #[arg(long)]
    imu: Option<PathBuf>,
    /// Subject of a center track; defaults to the file-name prefix before `_`.
    #[arg(long)]
    subject: Option<String>,
    /// Activity of a center track; defaults to the file-name part after `_`.
    #[arg(long)]
    activity: Option<String>,
    /// Output window file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FeaturizeArgs {
    /// Window file.
    #[arg(long)]
    windows: PathBuf,
    /// Output feature CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum HeadArg {
    Signal,
    Feature,
}

#[derive(Debug, Args)]
struct TrainGenArgs {
    /// Corpus directory.
    #[arg(long, env = DATA_ENV)]
    data: PathBuf,
    #[arg(long, value_enum)]
    head: HeadArg,
    /// Channel (`x`, `y`, `z`, `tot`) for signal heads, feature name for feature heads.
    #[arg(long)]
    target: String,
    /// Subject left out of training.
    #[arg(long)]
    exclude: Option<String>,
    /// Subject whose windows drive early stopping.
    #[arg(long)]
    validation: Option<String>,
    #[arg(long, default_value_t = 60)]
    epochs: usize,
    #[arg(long, default_value_t = 10)]
    patience: usize,
    /// Encoder widths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "8,16,32")]
    channels: Vec<usize>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output checkpoint.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Checkpoints; repeat the flag for several.
    #[arg(long = "model", required = true)]
    models: Vec<PathBuf>,
    /// Video-derived window file.
    #[arg(long)]
    windows: PathBuf,
    /// Window file for four signal models, CSV otherwise.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainHarArgs {
    /// Training feature CSV.
    #[arg(long)]
    features: PathBuf,
    /// Feature CSV to score after training.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long, default_value_t = 6)]
    max_features: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output forest file; the fitted scaler goes to `<out>.scaler.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Corpus directory.
    #[arg(long, env = DATA_ENV)]
    data: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output directory for report.csv, report.txt and manifest.json.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long, default_value_t = 60)]
    epochs: usize,
    #[arg(long, default_value_t = 10)]
    patience: usize,
    /// Encoder widths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "8,16,32")]
    channels: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    /// Also train and report the four signal models.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    signal_models: bool,
    /// Use the wide network and the long schedule; overrides `--epochs`,
    /// `--patience` and `--channels`.
    #[arg(long)]
    full_scale: bool,
}

/// Runs the command line and returns the process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match parse(&argv) {
        Ok(cli) => cli,
        Err(Failure::Usage(e)) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
        Err(Failure::Run(e)) => return report(&e),
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build();
    let outcome = match pool {
        Ok(pool) => pool.install(|| execute(cli.command)),
        Err(e) => Err(Error::Config(format!("thread pool: {e}"))),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => report(&e),
    }
}

fn report(e: &Error) -> i32 {
    eprintln!("error: {e}");
    exit_code(e)
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Divergence { .. } => EXIT_DIVERGENCE,
        Error::Config(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

enum Failure {
    Usage(clap::Error),
    Run(Error),
}

fn parse(argv: &[OsString]) -> std::result::Result<Cli, Failure> {
    let first = Cli::command().try_get_matches_from(argv).map_err(Failure::Usage)?;
    let Some(path) = first.get_one::<PathBuf>("config") else {
        return Cli::from_arg_matches(&first).map_err(Failure::Usage);
    };
    let Some((sub, _)) = first.subcommand() else {
        return Cli::from_arg_matches(&first).map_err(Failure::Usage);
    };
    let pairs = read_config(path).map_err(Failure::Run)?;
    // File values go right after the subcommand so later flags override them.
    let at = argv.iter().position(|a| a.to_str() == Some(sub)).unwrap_or(argv.len());
    let mut merged: Vec<OsString> = argv[..=at.min(argv.len() - 1)].to_vec();
    for (k, v) in pairs {
        merged.push(format!("--{k}").into());
        merged.push(v.into());
    }
    merged.extend(argv[at + 1..].iter().cloned());
    let matches = Cli::command().try_get_matches_from(&merged).map_err(Failure::Usage)?;
    Cli::from_arg_matches(&matches).map_err(Failure::Usage)
}

/// Reads `key = value` lines; `#` starts a comment.
pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::at_path(path, e))?;
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("{}:{}: expected key=value", path.display(), n + 1)))?;
        out.insert(k.trim().replace('_', "-"), v.trim().to_string());
    }
    Ok(out)
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Extract(a) => extract(a),
        Command::Accel(a) => accel(a),
        Command::Featurize(a) => featurize(a),
        Command::TrainGen(a) => train_gen(a),
        Command::Generate(a) => generate(a),
        Command::TrainHar(a) => train_har(a),
        Command::Evaluate(a) => evaluate(a),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::at_path(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::at_path(path, e))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| Error::at_path(path, e))?))
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg = SyntheticConfig {
        n_subjects: a.subjects,
        duration: a.duration,
        seed: a.seed,
        ..SyntheticConfig::default()
    };
    let manifest = generate_corpus(&cfg, &a.out)?;
    eprintln!("wrote {} recordings to {}", manifest.entries.len(), a.out.display());
    Ok(())
}

fn extract(a: ExtractArgs) -> Result<()> {
    let cfg = PipelineConfig {
        z_near: a.z_near,
        z_far: a.z_far,
        ..PipelineConfig::default()
    };
    let seq = load_pose(&a.pose)?;
    let cal = match &a.calibration {
        Some(p) => calibrate(&load_pose(p)?, &cfg)?,
        None => calibrate(&seq, &cfg)?,
    };
    let track = center_track(&seq, &cal, &cfg)?;
    track.write_csv(create(&a.out)?)?;
    eprintln!("{} samples at {} Hz", track.len(), track.sample_rate);
    Ok(())
}

/// `S01_Cleaning.track.csv` gives `("S01", "Cleaning")`.
fn labels_from_name(path: &Path) -> Option<(String, String)> {
    let name = path.file_name()?.to_str()?;
    let stem = name.split('.').next()?;
    let (s, a) = stem.split_once('_')?;
    Some((s.to_string(), a.to_string()))
}

fn accel(a: AccelArgs) -> Result<()> {
    let cfg = PipelineConfig::default();
    let track = match (&a.track, &a.imu) {
        (Some(path), _) => {
            let guess = labels_from_name(path);
            let subject = a.subject.clone().or_else(|| guess.as_ref().map(|g| g.0.clone()));
            let activity = a.activity.clone().or_else(|| guess.as_ref().map(|g| g.1.clone()));
            let (Some(subject), Some(activity)) = (subject, activity) else {
                return Err(Error::Config("--subject and --activity are required for this file name".into()));
            };
            let centers = CenterTrack3D::read_csv(open(path)?, SubjectId::new(subject), activity.parse::<Activity>()?)?;
            video_acceleration(&centers, cfg.target_rate, cfg.cutoff)?
        }
        (None, Some(path)) => condition_imu(&AccelTrack::load(path)?)?,
        (None, None) => return Err(Error::Config("give --track or --imu".into())),
    };
    let windows = standard_windows(&track)?;
    windows.save(&a.out)?;
    eprintln!("{} windows", windows.len());
    Ok(())
}

fn featurize(a: FeaturizeArgs) -> Result<()> {
    let set = WindowSet::load(&a.windows)?;
    let features: Vec<FeatureVector> = set.windows.iter().map(compute_features).collect();
    write_features_csv(&features, create(&a.out)?)
}

fn scaler_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".scaler.json");
    PathBuf::from(s)
}

fn train_gen(a: TrainGenArgs) -> Result<()> {
    let data = load_corpus(&a.data, &PipelineConfig::default())?;
    let exclude = a.exclude.as_deref().map(SubjectId::new);
    let validation = a.validation.as_deref().map(SubjectId::new);
    let mut train_idx = Vec::new();
    let mut val_idx = Vec::new();
    for (i, w) in data.video.windows.iter().enumerate() {
        if Some(&w.subject) == exclude.as_ref() {
            continue;
        }
        if Some(&w.subject) == validation.as_ref() {
            val_idx.push(i);
        } else {
            train_idx.push(i);
        }
    }
    if train_idx.is_empty() {
        return Err(Error::Config("no training windows left after exclusions".into()));
    }
    let base = ExperimentConfig::default().model;
    let (head, targets): (Head, Vec<Vec<f32>>) = match a.head {
        HeadArg::Signal => {
            let c = CHANNEL_NAMES
                .iter()
                .position(|n| *n == a.target)
                .ok_or_else(|| Error::Config(format!("unknown channel {:?}", a.target)))?;
            let t = data.imu.windows.iter().map(|w| w.channels[c].iter().map(|&v| v as f32).collect()).collect();
            (Head::Signal, t)
        }
        HeadArg::Feature => {
            let k = feature_index(&a.target).ok_or_else(|| Error::Config(format!("unknown feature {:?}", a.target)))?;
            let raw: Vec<FeatureVector> = data.imu.windows.iter().map(compute_features).collect();
            let fit: Vec<FeatureVector> = train_idx.iter().chain(&val_idx).map(|&i| raw[i].clone()).collect();
            let scaler = Scaler::fit(&fit)?;
            serde_json::to_writer_pretty(create(&scaler_path(&a.out))?, &scaler)?;
            let t = scaler.apply_all(&raw)?.iter().map(|v| vec![v.values[k] as f32]).collect();
            (Head::Feature, t)
        }
    };
    let model_cfg = crate::net::ModelConfig {
        encoder_channels: a.channels,
        ..base
    }
    .with_head(head)
    .with_seed(a.seed);
    let mut model = TransformModel::<f32>::build(model_cfg)?;
    let inputs: Vec<Vec<f32>> = data.video.windows.iter().map(window_input::<f32>).collect();
    let samples = |idx: &[usize]| -> Result<Vec<Sample<f32>>> {
        idx.iter().map(|&i| Sample::new(&model, &inputs[i], targets[i].clone())).collect()
    };
    let (train_set, val_set) = (samples(&train_idx)?, samples(&val_idx)?);
    let tc = TrainConfig {
        max_epochs: a.epochs,
        patience: a.patience,
        seed: derive_seed(a.seed, 1),
        ..TrainConfig::default()
    };
    let history = train(&mut model, &train_set, &val_set, &tc)?;
    info!("kept epoch {} of {}", history.best_epoch, history.epochs_run);
    save_model(&model, &a.target, &a.out)?;
    eprintln!(
        "trained {} head for {} on {} windows, kept epoch {}",
        a.head.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default(),
        a.target,
        train_set.len(),
        history.best_epoch
    );
    Ok(())
}

fn generate(a: GenerateArgs) -> Result<()> {
    let set = WindowSet::load(&a.windows)?;
    let checkpoints = a.models.iter().map(|p| load_model(p, None)).collect::<Result<Vec<_>>>()?;
    let heads: Vec<Head> = checkpoints.iter().map(|c| c.model.config().head).collect();
    if heads.iter().all(|h| *h == Head::Signal) {
        let mut ordered = Vec::new();
        for name in CHANNEL_NAMES {
            let c = checkpoints
                .iter()
                .find(|c| c.label == name)
                .ok_or_else(|| Error::Config(format!("signal generation needs a model labelled {name}")))?;
            ordered.push(c.model.clone());
        }
        let out = generate_signals(&ordered, &set)?;
        return out.save(&a.out);
    }
    if heads.iter().any(|h| *h != Head::Feature) {
        return Err(Error::Config("cannot mix signal and feature models".into()));
    }
    let mut w = csv::Writer::from_writer(create(&a.out)?);
    let mut header = vec!["subject".to_string(), "activity".to_string(), "start_time".to_string()];
    header.extend(checkpoints.iter().map(|c| c.label.clone()));
    w.write_record(&header)?;
    for win in &set.windows {
        let input = window_input::<f32>(win);
        let mut row = vec![win.subject.to_string(), win.activity.to_string(), win.start_time.to_string()];
        for c in &checkpoints {
            row.push(c.model.predict_unpadded(&input)?[0].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn train_har(a: TrainHarArgs) -> Result<()> {
    let raw = read_features_csv(open(&a.features)?, false)?;
    let scaler = Scaler::fit(&raw)?;
    let cfg = ForestConfig {
        n_trees: a.trees,
        max_features: a.max_features.min(NUM_FEATURES),
        seed: a.seed,
        ..ForestConfig::default()
    };
    let forest = train_forest(&scaler.apply_all(&raw)?, &cfg)?;
    forest.write_binary(create(&a.out)?)?;
    serde_json::to_writer_pretty(create(&scaler_path(&a.out))?, &scaler)?;
    if let Some(test) = &a.test {
        let test = scaler.apply_all(&read_features_csv(open(test)?, false)?)?;
        println!("accuracy {:.6}", forest.accuracy(&test)?);
    }
    Ok(())
}

/// Loads a forest written by `train-har`.
pub fn load_forest(path: &Path) -> Result<Forest> {
    Forest::read_binary(open(path)?)
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let mut cfg = if a.full_scale {
        ExperimentConfig::full_scale()
    } else {
        let mut c = ExperimentConfig::default();
        c.model.encoder_channels = a.channels;
        c.train.max_epochs = a.epochs;
        c.train.patience = a.patience;
        c
    };
    cfg.seed = a.seed;
    cfg.forest.n_trees = a.trees;
    cfg.signal_models = a.signal_models;
    cfg.validate()?;
    let data: PairedWindows = load_corpus(&a.data, &PipelineConfig::default())?;
    eprintln!("{} window pairs from {} subjects", data.len(), data.subjects().len());
    let (report, outcomes) = run_experiment(&data, &cfg)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::at_path(&a.out, e))?;
    let csv = render_csv(&report)?;
    let text = render_text(&report)?;
    for (name, body) in [("report.csv", &csv), ("report.txt", &text)] {
        let path = a.out.join(name);
        create(&path)?.write_all(body.as_bytes()).map_err(|e| Error::at_path(&path, e))?;
    }
    ExperimentManifest::new(&a.data, &cfg, &report, &outcomes).save(&a.out.join("manifest.json"))?;
    print!("{text}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn help_lists_defaults() {
        for sub in ["synth", "evaluate", "train-gen", "train-har"] {
            let mut cmd = Cli::command();
            let help = cmd.find_subcommand_mut(sub).unwrap().render_long_help().to_string();
            assert!(help.contains("[default:"), "{sub}");
        }
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        assert_eq!(run(["virtual-imu", "evaluate", "--bogus"]), EXIT_USAGE);
        assert_eq!(run(["virtual-imu", "--help"]), EXIT_OK);
    }

    #[test]
    fn missing_input_is_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("f.csv");
        let code = run([
            "virtual-imu",
            "featurize",
            "--windows",
            "/nonexistent/w.bin",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_DATA);
    }

    #[test]
    fn config_file_is_overridden_by_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.conf");
        std::fs::write(&cfg, "# desk run\nseed = 11\nepochs=3\n").unwrap();
        let argv: Vec<OsString> = ["virtual-imu", "--config", cfg.to_str().unwrap(), "evaluate", "--data", "d", "--seed", "5"]
            .iter()
            .map(OsString::from)
            .collect();
        let Ok(cli) = parse(&argv) else { panic!("parse failed") };
        let Command::Evaluate(e) = cli.command else { panic!() };
        assert_eq!((e.seed, e.epochs), (5, 3));
    }

    #[test]
    fn file_name_labels() {
        assert_eq!(
            labels_from_name(Path::new("/x/S02_FloorWork.track.csv")),
            Some(("S02".into(), "FloorWork".into()))
        );
    }
}
