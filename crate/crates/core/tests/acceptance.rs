//! Acceptance gate: prints one PASS/FAIL line per criterion and fails if
//! any gated criterion fails.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use virtual_imu::cli;
use virtual_imu::dataset::{load_corpus, PipelineConfig};
use virtual_imu::eval::{ensure_excluded, loso_folds, run_experiment, run_fold, ExperimentConfig};
use virtual_imu::features::{compute_features, NUM_STATS};
use virtual_imu::net::{evaluate_mae, train, AdadeltaState, Head, ModelConfig, Sample, Tensor, TrainConfig, TransformModel};
use virtual_imu::pose::CenterTrack3D;
use virtual_imu::signal::{differentiate_twice, zero_phase_lowpass, Window};
use virtual_imu::synthetic::{generate_corpus, SyntheticConfig};
use virtual_imu::{Activity, Error, SubjectId};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> Outcome {
    let t = Instant::now();
    let mut o = f();
    let dt = t.elapsed();
    if let Some(limit) = limit {
        if dt > limit {
            o.pass = false;
            o.detail.push_str(&format!("; over the {limit:?} budget"));
        }
    }
    o.detail.push_str(&format!(" ({:.2} s)", dt.as_secs_f64()));
    o
}

/// Least-squares amplitude of a sinusoid of frequency `f` in `(t, y)`.
fn fitted_amplitude(t: &[f64], y: &[f64], f: f64) -> f64 {
    let w = 2.0 * std::f64::consts::PI * f;
    let (mut ss, mut cc, mut sc, mut ys, mut yc) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&ti, &yi) in t.iter().zip(y) {
        let (s, c) = (w * ti).sin_cos();
        ss += s * s;
        cc += c * c;
        sc += s * c;
        ys += yi * s;
        yc += yi * c;
    }
    let det = ss * cc - sc * sc;
    let a = (ys * cc - yc * sc) / det;
    let b = (yc * ss - ys * sc) / det;
    a.hypot(b)
}

fn differentiation_fidelity() -> Outcome {
    let rate = 25.0;
    let amp = 0.3;
    let mut worst: f64 = 0.0;
    for f in [1.0, 2.0, 4.0] {
        let n = 250;
        let w = 2.0 * std::f64::consts::PI * f;
        let track = CenterTrack3D {
            sample_rate: rate,
            start_time: 0.0,
            samples: (0..n).map(|i| [amp * (w * i as f64 / rate).sin(), 1.0, 3.0]).collect(),
            outliers: vec![false; n],
            subject: SubjectId::new("S01"),
            activity: Activity::Walking,
        };
        let acc = differentiate_twice(&track).unwrap();
        let t: Vec<f64> = (2..n - 2).map(|i| i as f64 / rate).collect();
        let measured = fitted_amplitude(&t, &acc.x[2..n - 2], f) / (amp * w * w);
        let bound = (2.0 - 2.0 * (w / rate).cos()) * rate * rate / (w * w);
        worst = worst.max((measured / bound - 1.0).abs());
    }
    outcome(worst <= 0.01, format!("max deviation from the discrete-operator gain {:.2e}", worst))
}

/// Single-sided amplitude at an exact FFT bin.
fn bin_amplitude(x: &[f64], freq: f64, rate: f64) -> f64 {
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    let k = (freq * x.len() as f64 / rate).round() as usize;
    2.0 * buf[k].norm() / x.len() as f64
}

fn filter_response() -> Outcome {
    let rate = 100.0;
    let n = 2000;
    let sine = |f: f64| -> Vec<f64> { (0..n).map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / rate).sin()).collect() };
    // Centre segment of whole periods, away from edge transients.
    let mid = |v: &[f64]| v[500..1500].to_vec();
    let low = sine(2.0);
    let high = sine(40.0);
    let low_out = zero_phase_lowpass(&low, 12.0, rate).unwrap();
    let high_out = zero_phase_lowpass(&high, 12.0, rate).unwrap();
    let pass = bin_amplitude(&mid(&low_out), 2.0, rate) / bin_amplitude(&mid(&low), 2.0, rate);
    let stop = bin_amplitude(&mid(&high_out), 40.0, rate) / bin_amplitude(&mid(&high), 40.0, rate);
    let xcorr = |lag: isize| -> f64 {
        (500..1500)
            .map(|i| low[i] * low_out[(i as isize + lag) as usize])
            .sum()
    };
    let peak = (-10isize..=10).max_by(|a, b| xcorr(*a).total_cmp(&xcorr(*b))).unwrap();
    outcome(
        (pass - 1.0).abs() <= 0.01 && stop <= 0.05 && peak == 0,
        format!("2 Hz gain {pass:.4}, 40 Hz gain {stop:.4}, correlation peak at lag {peak}"),
    )
}

/// Brute-force statistics: rank counting for order statistics and the
/// pairwise-difference identity for the variance.
fn oracle_stats(x: &[f64]) -> [f64; NUM_STATS] {
    let n = x.len();
    let kth = |k: usize| -> f64 {
        *x.iter()
            .find(|&&v| {
                let below = x.iter().filter(|&&u| u < v).count();
                let equal = x.iter().filter(|&&u| u == v).count();
                below <= k && k < below + equal
            })
            .unwrap()
    };
    let quantile = |q: f64| {
        let pos = q * (n - 1) as f64;
        let lo = pos.floor() as usize;
        let frac = pos - lo as f64;
        if frac == 0.0 {
            kth(lo)
        } else {
            kth(lo) * (1.0 - frac) + kth(lo + 1) * frac
        }
    };
    let mean = x.iter().sum::<f64>() / n as f64;
    let mut pair = 0.0;
    for a in x {
        for b in x {
            pair += (a - b) * (a - b);
        }
    }
    let var = pair / (2.0 * (n * n) as f64);
    let med = if n % 2 == 1 { kth(n / 2) } else { 0.5 * (kth(n / 2 - 1) + kth(n / 2)) };
    [mean, med, var, quantile(0.25), quantile(0.75), kth(0), kth(n - 1)]
}

fn random_window(rng: &mut ChaCha8Rng, len: usize) -> Window {
    Window {
        start_time: 0.0,
        channels: std::array::from_fn(|_| (0..len).map(|_| rng.gen_range(-20.0..20.0)).collect()),
        subject: SubjectId::new("S01"),
        activity: Activity::Cleaning,
    }
}

fn feature_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut equivariance_ok = true;
    for i in 0..1000 {
        let len = if i % 2 == 0 { 50 } else { 49 };
        let w = random_window(&mut rng, len);
        let got = compute_features(&w);
        for (c, ch) in w.channels.iter().enumerate() {
            let want = oracle_stats(ch);
            for s in 0..NUM_STATS {
                worst = worst.max((got.values[c * NUM_STATS + s] - want[s]).abs());
            }
        }
        if i < 100 {
            let mut permuted = w.clone();
            for ch in permuted.channels.iter_mut() {
                ch.reverse();
                ch.rotate_left(7);
            }
            equivariance_ok &= compute_features(&permuted).values == got.values;

            let shift = rng.gen_range(-5.0..5.0);
            let scale = rng.gen_range(0.1..10.0);
            let mut shifted = w.clone();
            let mut scaled = w.clone();
            shifted.channels[1].iter_mut().for_each(|v| *v += shift);
            scaled.channels[2].iter_mut().for_each(|v| *v *= scale);
            let fs = compute_features(&shifted);
            let fk = compute_features(&scaled);
            for s in 0..NUM_STATS {
                let (base_y, base_z) = (got.values[NUM_STATS + s], got.values[2 * NUM_STATS + s]);
                let (want_shift, want_scale) = if s == 2 {
                    (base_y, base_z * scale * scale)
                } else {
                    (base_y + shift, base_z * scale)
                };
                equivariance_ok &= (fs.values[NUM_STATS + s] - want_shift).abs() <= 1e-9 * (1.0 + want_shift.abs());
                equivariance_ok &= (fk.values[2 * NUM_STATS + s] - want_scale).abs() <= 1e-9 * (1.0 + want_scale.abs());
            }
        }
    }
    outcome(
        worst <= 1e-9 && equivariance_ok,
        format!("max abs deviation {worst:.2e} over 1000 windows, equivariance {}", if equivariance_ok { "holds" } else { "broken" }),
    )
}

fn tiny_config(head: Head, seed: u64) -> ModelConfig {
    ModelConfig {
        input_channels: 4,
        window_len: 16,
        signal_len: 16,
        encoder_channels: vec![8, 16],
        kernel_size: 3,
        head,
        seed,
    }
}

fn gradient_correctness() -> Outcome {
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    let mut skipped = 0usize;
    for seed in 0..5u64 {
        for head in [Head::Signal, Head::Feature] {
            let mut model = TransformModel::<f64>::build(tiny_config(head, seed)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let x: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let target: Vec<f64> = (0..model.output_len()).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let xt = Tensor::new(vec![4, 16], x.clone()).unwrap();
            let tt = Tensor::new(vec![target.len()], target.clone()).unwrap();
            let (_, grad) = model.backward(&xt, &tt).unwrap();
            let loss = |m: &TransformModel<f64>| -> f64 {
                let y = m.forward_raw(&x);
                y.iter().zip(&target).map(|(a, b)| (a - b).abs()).sum::<f64>() / target.len() as f64
            };
            for p in 0..model.num_params() {
                let orig = model.params()[p];
                model.params_mut()[p] = orig + h;
                let (up, sig_up) = (loss(&model), model.kink_signature(&x, &target));
                model.params_mut()[p] = orig - h;
                let (down, sig_down) = (loss(&model), model.kink_signature(&x, &target));
                model.params_mut()[p] = orig;
                if sig_up != sig_down {
                    skipped += 1;
                    continue;
                }
                let numeric = (up - down) / (2.0 * h);
                let analytic = grad.0[p];
                let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
                worst = worst.max(rel);
                checked += 1;
            }
        }
    }
    outcome(
        worst < 1e-3 && skipped * 100 < checked,
        format!("max relative error {worst:.2e} over {checked} parameters on 5 seeds x 2 heads ({skipped} straddled a kink)"),
    )
}

fn optimizer_correctness() -> Outcome {
    let (rho, eps) = (0.95f64, 1e-6f64);
    let mut opt = AdadeltaState::<f64>::new(1);
    let mut p = vec![0.5];
    let (mut eg, mut ed, mut reference) = (0.0f64, 0.0f64, 0.5f64);
    let mut worst: f64 = 0.0;
    for step in 0..10 {
        let g = 1.0 + 0.1 * step as f64;
        opt.step(&mut p, &[g]).unwrap();
        eg = rho * eg + (1.0 - rho) * g * g;
        let delta = -(ed + eps).sqrt() / (eg + eps).sqrt() * g;
        ed = rho * ed + (1.0 - rho) * delta * delta;
        reference += delta;
        worst = worst.max((p[0] - reference).abs());
    }
    let mut fixed = AdadeltaState::<f64>::new(3);
    let mut q = vec![1.0, -2.0, 0.25];
    for _ in 0..10 {
        fixed.step(&mut q, &[0.0; 3]).unwrap();
    }
    let zero_ok = q == [1.0, -2.0, 0.25];
    outcome(
        worst <= 1e-12 && zero_ok,
        format!("max deviation over 10 steps {worst:.1e}, zero gradient fixed point {zero_ok}"),
    )
}

fn overfit_samples(model: &TransformModel<f32>) -> Vec<Sample<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    (0..10)
        .map(|_| {
            let f = rng.gen_range(0.5..3.0);
            let phase = rng.gen_range(0.0..6.0);
            let input: Vec<f32> = (0..4 * 50)
                .map(|i| {
                    let (c, t) = (i / 50, (i % 50) as f64 / 25.0);
                    ((c as f64 + 1.0) * (2.0 * std::f64::consts::PI * f * t + phase).sin()) as f32
                })
                .collect();
            let target: Vec<f32> = (0..50)
                .map(|t| (2.0 * (2.0 * std::f64::consts::PI * f * t as f64 / 25.0 + phase).cos() + 1.0) as f32)
                .collect();
            Sample::new(model, &input, target).unwrap()
        })
        .collect()
}

fn overfit_check() -> Outcome {
    let run = || {
        let mut model = TransformModel::<f32>::build(ExperimentConfig::default().model.with_seed(5)).unwrap();
        let set = overfit_samples(&model);
        // Single-window steps; the memorization set doubles as the
        // monitored set so the returned weights are the best epoch's.
        let cfg = TrainConfig {
            max_epochs: 250,
            patience: 250,
            batch_size: 1,
            seed: 9,
            ..TrainConfig::default()
        };
        let history = train(&mut model, &set, &set, &cfg).unwrap();
        (history.initial_train_mae, evaluate_mae(&model, &set), model.params().to_vec())
    };
    let (initial, last, params) = run();
    let (_, _, again) = run();
    let ratio = last / initial;
    outcome(
        ratio < 0.05 && params == again,
        format!("final/initial MAE {ratio:.4} within 250 epochs (batch 1), repeat run identical {}", params == again),
    )
}

fn end_to_end(corpus: &Path) -> (Outcome, Outcome) {
    let t = Instant::now();
    let data = load_corpus(corpus, &PipelineConfig::default()).unwrap();
    let (report, _) = run_experiment(&data, &ExperimentConfig::default()).unwrap();
    let dt = t.elapsed();
    let [imu, generated, video] = report.mean_accuracy();
    let ok = imu - generated <= 0.10 && imu - video >= 0.10 && generated - video >= 0.10 && dt < Duration::from_secs(20 * 60);
    let acc = outcome(
        ok,
        format!(
            "mean accuracy imu {imu:.3}, generated {generated:.3}, video {video:.3} on {} windows ({:.0} s)",
            data.len(),
            dt.as_secs_f64()
        ),
    );
    let reduction = report.feature_mse_reduction().unwrap_or(f64::NAN);
    let mse = outcome(
        reduction >= 0.5,
        format!(
            "feature MSE {:.3} vs naive {:.3}, reduction {:.1}%",
            report.feature_mse.grand_mean().unwrap_or(f64::NAN),
            report.naive_feature_mse.grand_mean().unwrap_or(f64::NAN),
            100.0 * reduction
        ),
    );
    (acc, mse)
}

fn small_corpus(dir: &Path) {
    let cfg = SyntheticConfig {
        n_subjects: 3,
        duration: 20.0,
        seed: 5,
        ..SyntheticConfig::default()
    };
    generate_corpus(&cfg, dir).unwrap();
}

fn loso_hygiene(corpus: &Path) -> Outcome {
    let data = load_corpus(corpus, &PipelineConfig::default()).unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.model.encoder_channels = vec![4, 8, 8];
    cfg.train.max_epochs = 1;
    cfg.inject_leakage = true;
    let folds = loso_folds(&data.subjects()).unwrap();
    let leak = matches!(run_fold(&data, &folds[0], &cfg), Err(Error::Leakage { .. }));

    let mut partition = true;
    for n in 2..=13usize {
        let ids: Vec<SubjectId> = (0..n).map(|i| SubjectId::new(format!("P{i:02}"))).collect();
        let folds = loso_folds(&ids).unwrap();
        let tests: std::collections::BTreeSet<_> = folds.iter().map(|f| f.test_subject.clone()).collect();
        partition &= folds.len() == n && tests.len() == n;
        for f in &folds {
            partition &= f.train_subjects.len() == n - 1 && !f.train_subjects.contains(&f.test_subject);
            partition &= ensure_excluded(&f.test_subject, "train", &f.train_subjects).is_ok();
        }
    }
    outcome(leak && partition, format!("leakage injection rejected {leak}, partitions valid for 2..=13 subjects {partition}"))
}

fn determinism(corpus: &Path, out: &Path) -> Outcome {
    let mut reports = Vec::new();
    for (run, threads) in [(0, "1"), (1, "2"), (2, "1")] {
        let dir = out.join(format!("run{run}"));
        let argv = [
            "virtual-imu",
            "evaluate",
            "--data",
            corpus.to_str().unwrap(),
            "--seed",
            "7",
            "--threads",
            threads,
            "--epochs",
            "3",
            "--channels",
            "4,8,8",
            "--trees",
            "20",
            "--out",
            dir.to_str().unwrap(),
        ];
        let code = cli::run(argv);
        if code != 0 {
            return outcome(false, format!("evaluate exited with {code}"));
        }
        let bytes: Vec<Vec<u8>> = ["report.csv", "report.txt", "manifest.json"]
            .iter()
            .map(|f| std::fs::read(dir.join(f)).unwrap())
            .collect();
        reports.push(bytes);
    }
    let same = reports.windows(2).all(|w| w[0] == w[1]);
    outcome(same, format!("report.csv, report.txt and manifest.json byte-identical over 3 runs with 1 and 2 threads: {same}"))
}

#[test]
fn acceptance() {
    let work = tempfile::tempdir().unwrap();
    let desk = work.path().join("desk");
    let small = work.path().join("small");
    generate_corpus(&SyntheticConfig::default(), &desk).unwrap();
    small_corpus(&small);

    let second = Some(Duration::from_secs(1));
    let (c7, c8) = end_to_end(&desk);
    let results = [
        (1, "differentiation fidelity", timed(second, differentiation_fidelity)),
        (2, "filter response", timed(second, filter_response)),
        (3, "feature oracle equivalence", timed(None, feature_oracle)),
        (4, "gradient correctness", timed(Some(Duration::from_secs(30)), gradient_correctness)),
        (5, "optimizer correctness", timed(None, optimizer_correctness)),
        (6, "overfit check", timed(Some(Duration::from_secs(120)), overfit_check)),
        (7, "end-to-end synthetic experiment", c7),
        (8, "feature model usefulness", c8),
        (9, "LOSO hygiene", timed(None, || loso_hygiene(&small))),
        (
            10,
            "real-data reproduction",
            outcome(true, "not run: needs the real recordings; reported only, not gated"),
        ),
        (11, "determinism", timed(None, || determinism(&small, work.path()))),
    ];
    let mut failed = Vec::new();
    for (n, name, o) in &results {
        let status = if *n == 10 {
            "SKIP"
        } else if o.pass {
            "PASS"
        } else {
            "FAIL"
        };
        println!("criterion {n:>2} {status} {name}: {}", o.detail);
        if *n != 10 && !o.pass {
            failed.push(*n);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
