use std::path::Path;
use std::process::{Command, Output};

fn vimu(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_virtual-imu"))
        .args(args)
        .env_remove("VIMU_DATA")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = vimu(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn usage_and_data_errors() {
    assert_eq!(vimu(&["evaluate", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(vimu(&["frobnicate"]).status.code(), Some(1));

    let out = vimu(&["evaluate", "--data", "/no/such/corpus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/corpus"));

    for sub in ["synth", "extract", "accel", "featurize", "train-gen", "generate", "train-har", "evaluate"] {
        let help = String::from_utf8(ok(&[sub, "--help"]).stdout).unwrap();
        assert!(help.contains("--threads"), "{sub}");
    }
}

#[test]
fn data_directory_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_virtual-imu"))
        .args(["evaluate"])
        .env("VIMU_DATA", "/no/such/env/corpus")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/env/corpus"));
}

#[test]
fn file_pipeline_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let corpus = dir.join("corpus");
    ok(&["synth", "--out", p(&corpus), "--subjects", "2", "--duration", "12", "--seed", "3"]);
    assert!(corpus.join("manifest.json").exists());

    let track = dir.join("S01_Cleaning.track.csv");
    ok(&[
        "extract",
        "--pose",
        p(&corpus.join("S01_Cleaning.pose.json")),
        "--calibration",
        p(&corpus.join("S01_Walking.pose.json")),
        "--out",
        p(&track),
    ]);
    let video = dir.join("video.bin");
    let imu = dir.join("imu.bin");
    ok(&["accel", "--track", p(&track), "--out", p(&video)]);
    ok(&["accel", "--imu", p(&corpus.join("S01_Cleaning.imu.csv")), "--out", p(&imu)]);

    let features = dir.join("features.csv");
    ok(&["featurize", "--windows", p(&imu), "--out", p(&features)]);
    let text = std::fs::read_to_string(&features).unwrap();
    assert!(text.starts_with("x_avg,x_med"));
    assert_eq!(text.lines().count(), 1 + 11);

    let model = dir.join("tot_med.ckpt");
    let train_args = [
        "train-gen",
        "--data",
        p(&corpus),
        "--head",
        "feature",
        "--target",
        "tot_med",
        "--epochs",
        "2",
        "--channels",
        "4,8,8",
        "--exclude",
        "S02",
        "--out",
        p(&model),
    ];
    ok(&train_args);
    let first = std::fs::read(&model).unwrap();
    ok(&train_args);
    assert_eq!(first, std::fs::read(&model).unwrap());

    let generated = dir.join("generated.csv");
    ok(&["generate", "--model", p(&model), "--windows", p(&video), "--out", p(&generated)]);
    let gen = std::fs::read_to_string(&generated).unwrap();
    assert!(gen.starts_with("subject,activity,start_time,tot_med"));
    assert_eq!(gen.lines().count(), 1 + 11);

    let forest = dir.join("forest.bin");
    let out = ok(&["train-har", "--features", p(&features), "--test", p(&features), "--trees", "5", "--out", p(&forest)]);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("accuracy 1.0"));
    assert!(dir.join("forest.bin.scaler.json").exists());
}

#[test]
fn evaluate_writes_reports_and_honours_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let corpus = dir.join("corpus");
    ok(&["synth", "--out", p(&corpus), "--subjects", "2", "--duration", "12"]);
    let conf = dir.join("run.conf");
    std::fs::write(&conf, "epochs = 1\nchannels = 4,8,8\ntrees = 5\nsignal_models = false\n").unwrap();
    let out = dir.join("out");
    ok(&["evaluate", "--config", p(&conf), "--data", p(&corpus), "--out", p(&out)]);
    for f in ["report.csv", "report.txt", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["train"]["max_epochs"], 1);
    assert_eq!(manifest["config"]["signal_models"], false);
    assert_eq!(manifest["config"]["seed"], 7);
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.starts_with("# accuracy\nsubject,imu,generated,video\n"));
}
