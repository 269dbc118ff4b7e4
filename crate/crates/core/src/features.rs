//! The 28 per-window statistics (7 per channel) and the train-fold scaler.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{Window, CHANNEL_NAMES, NUM_CHANNELS};
use crate::types::{Activity, SubjectId};

pub const STAT_NAMES: [&str; 7] = ["avg", "med", "var", "lq", "uq", "min", "max"];
pub const NUM_STATS: usize = STAT_NAMES.len();
pub const NUM_FEATURES: usize = NUM_CHANNELS * NUM_STATS;

/// Column name of a feature index, e.g. `tot_med`.
pub fn feature_name(index: usize) -> String {
    format!("{}_{}", CHANNEL_NAMES[index / NUM_STATS], STAT_NAMES[index % NUM_STATS])
}

pub fn feature_index(name: &str) -> Option<usize> {
    (0..NUM_FEATURES).find(|&i| feature_name(i) == name)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: [f64; NUM_FEATURES],
    pub subject: SubjectId,
    pub activity: Activity,
    pub standardized: bool,
}

/// Order statistics of one channel.
fn channel_stats(samples: &[f64]) -> [f64; NUM_STATS] {
    let n = samples.len();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let var = sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let median = if n.is_multiple_of(2) {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    } else {
        sorted[n / 2]
    };
    [
        mean,
        median,
        var,
        percentile(&sorted, 0.25),
        percentile(&sorted, 0.75),
        sorted[0],
        sorted[n - 1],
    ]
}

/// Inclusive linear-interpolation percentile of sorted data.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn compute_features(w: &Window) -> FeatureVector {
    assert!(!w.is_empty(), "window has no samples");
    let mut values = [0.0; NUM_FEATURES];
    for (c, ch) in w.channels.iter().enumerate() {
        values[c * NUM_STATS..(c + 1) * NUM_STATS].copy_from_slice(&channel_stats(ch));
    }
    FeatureVector {
        values,
        subject: w.subject.clone(),
        activity: w.activity,
        standardized: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: [f64; NUM_FEATURES],
    pub std: [f64; NUM_FEATURES],
}

/// Components whose spread is below this are treated as constant.
const MIN_STD: f64 = 1e-12;

impl Scaler {
    /// Component-wise mean and population standard deviation; constant
    /// components get a unit scale.
    pub fn fit(train: &[FeatureVector]) -> Result<Scaler> {
        if train.is_empty() {
            return Err(Error::precondition("cannot fit a scaler on no vectors"));
        }
        if train.iter().any(|v| v.standardized) {
            return Err(Error::State("scaler fit input is already standardized".into()));
        }
        let n = train.len() as f64;
        let mut mean = [0.0; NUM_FEATURES];
        for v in train {
            for (m, x) in mean.iter_mut().zip(&v.values) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut std = [0.0; NUM_FEATURES];
        for v in train {
            for ((s, x), m) in std.iter_mut().zip(&v.values).zip(&mean) {
                *s += (x - m) * (x - m);
            }
        }
        for s in std.iter_mut() {
            *s = (*s / n).sqrt();
            if *s < MIN_STD {
                *s = 1.0;
            }
        }
        Ok(Scaler { mean, std })
    }

    /// [`Scaler::fit`] that first checks the held-out subject is absent.
    pub fn fit_excluding(train: &[FeatureVector], held_out: &SubjectId) -> Result<Scaler> {
        if train.iter().any(|v| &v.subject == held_out) {
            return Err(Error::Leakage {
                subject: held_out.to_string(),
                stage: "scaler fit".into(),
            });
        }
        Scaler::fit(train)
    }

    pub fn apply(&self, v: &FeatureVector) -> Result<FeatureVector> {
        if v.standardized {
            return Err(Error::State("feature vector is already standardized".into()));
        }
        let mut out = v.clone();
        for i in 0..NUM_FEATURES {
            out.values[i] = (v.values[i] - self.mean[i]) / self.std[i];
        }
        out.standardized = true;
        Ok(out)
    }

    pub fn apply_all(&self, vs: &[FeatureVector]) -> Result<Vec<FeatureVector>> {
        vs.iter().map(|v| self.apply(v)).collect()
    }

    pub fn invert(&self, v: &FeatureVector) -> Result<FeatureVector> {
        if !v.standardized {
            return Err(Error::State("feature vector is not standardized".into()));
        }
        let mut out = v.clone();
        for i in 0..NUM_FEATURES {
            out.values[i] = v.values[i] * self.std[i] + self.mean[i];
        }
        out.standardized = false;
        Ok(out)
    }
}

/// Feature matrix CSV: 28 named columns, then `subject`, `activity`.
pub fn write_features_csv<W: Write>(vectors: &[FeatureVector], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..NUM_FEATURES).map(feature_name).collect();
    header.push("subject".into());
    header.push("activity".into());
    w.write_record(&header)?;
    for v in vectors {
        let mut row: Vec<String> = v.values.iter().map(|x| x.to_string()).collect();
        row.push(v.subject.to_string());
        row.push(v.activity.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a feature CSV. `standardized` marks every row's state.
pub fn read_features_csv<R: Read>(reader: R, standardized: bool) -> Result<Vec<FeatureVector>> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    let expected: Vec<String> = (0..NUM_FEATURES)
        .map(feature_name)
        .chain(["subject".to_string(), "activity".to_string()])
        .collect();
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: "feature CSV header does not list the 28 features, subject, activity".into(),
        });
    }
    let mut out = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = row + 2;
        if rec.len() != NUM_FEATURES + 2 {
            return Err(Error::Parse {
                line,
                column: 1,
                message: format!("expected {} fields, found {}", NUM_FEATURES + 2, rec.len()),
            });
        }
        let mut values = [0.0; NUM_FEATURES];
        for (i, slot) in values.iter_mut().enumerate() {
            *slot = rec[i].trim().parse().map_err(|e| Error::Parse {
                line,
                column: i + 1,
                message: format!("{:?}: {e}", &rec[i]),
            })?;
        }
        out.push(FeatureVector {
            values,
            subject: SubjectId(rec[NUM_FEATURES].to_string()),
            activity: rec[NUM_FEATURES + 1].parse()?,
            standardized,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn window(ch: [Vec<f64>; 4]) -> Window {
        Window {
            start_time: 0.0,
            channels: ch,
            subject: "S1".into(),
            activity: Activity::Cleaning,
        }
    }

    fn vector(values: [f64; NUM_FEATURES]) -> FeatureVector {
        FeatureVector {
            values,
            subject: "S1".into(),
            activity: Activity::Cleaning,
            standardized: false,
        }
    }

    #[test]
    fn names_are_channel_major() {
        assert_eq!(feature_name(0), "x_avg");
        assert_eq!(feature_name(22), "tot_med");
        assert_eq!(feature_name(27), "tot_max");
        assert_eq!(feature_index("z_var"), Some(16));
    }

    #[test]
    fn constant_window() {
        let f = compute_features(&window(std::array::from_fn(|_| vec![1.0; 50])));
        for (i, v) in f.values.iter().enumerate() {
            let want = if i % NUM_STATS == 2 { 0.0 } else { 1.0 };
            assert_eq!(*v, want, "{}", feature_name(i));
        }
    }

    #[test]
    fn four_sample_fixture() {
        let f = compute_features(&window(std::array::from_fn(|_| vec![4.0, 1.0, 3.0, 2.0])));
        assert_eq!(&f.values[..7], &[2.5, 2.5, 1.25, 1.75, 3.25, 1.0, 4.0]);
    }

    #[test]
    fn odd_length_median() {
        let f = compute_features(&window(std::array::from_fn(|_| vec![5.0, 1.0, 3.0])));
        assert_eq!(f.values[1], 3.0);
    }

    #[test]
    fn scaler_single_vector_clamps() {
        let v = vector(std::array::from_fn(|i| i as f64));
        let s = Scaler::fit(std::slice::from_ref(&v)).unwrap();
        assert_eq!(s.mean, v.values);
        assert!(s.std.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn scaler_symmetric_pair() {
        let v = vector(std::array::from_fn(|i| i as f64 - 13.5));
        let neg = vector(std::array::from_fn(|i| -(i as f64 - 13.5)));
        let s = Scaler::fit(&[v.clone(), neg]).unwrap();
        for i in 0..NUM_FEATURES {
            assert_eq!(s.mean[i], 0.0);
            assert!((s.std[i] - v.values[i].abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn scaler_standardizes_training_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let train: Vec<FeatureVector> = (0..100)
            .map(|_| vector(std::array::from_fn(|i| rng.gen_range(-5.0..5.0) * (i + 1) as f64 + i as f64)))
            .collect();
        let s = Scaler::fit(&train).unwrap();
        let z = s.apply_all(&train).unwrap();
        for i in 0..NUM_FEATURES {
            let m = z.iter().map(|v| v.values[i]).sum::<f64>() / 100.0;
            let sd = (z.iter().map(|v| (v.values[i] - m).powi(2)).sum::<f64>() / 100.0).sqrt();
            assert!(m.abs() < 1e-9);
            assert!((sd - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn scaler_apply_examples_and_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let train: Vec<FeatureVector> = (0..10).map(|_| vector(std::array::from_fn(|_| rng.gen()))).collect();
        let s = Scaler::fit(&train).unwrap();
        let at_mean = s.apply(&vector(s.mean)).unwrap();
        assert!(at_mean.values.iter().all(|v| *v == 0.0));
        let one_up = s.apply(&vector(std::array::from_fn(|i| s.mean[i] + s.std[i]))).unwrap();
        assert!(one_up.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let z = s.apply(&train[3]).unwrap();
        assert!(matches!(s.apply(&z), Err(Error::State(_))));
        let back = s.invert(&z).unwrap();
        for i in 0..NUM_FEATURES {
            assert!((back.values[i] - train[3].values[i]).abs() < 1e-12);
        }
        assert!(Scaler::fit(&[]).is_err());
    }

    #[test]
    fn scaler_fit_refuses_held_out_subject() {
        let v = vector([0.0; NUM_FEATURES]);
        assert!(matches!(Scaler::fit_excluding(std::slice::from_ref(&v), &"S1".into()), Err(Error::Leakage { .. })));
        assert!(Scaler::fit_excluding(&[v], &"S2".into()).is_ok());
    }

    #[test]
    fn feature_csv_round_trip() {
        let v = compute_features(&window(std::array::from_fn(|c| (0..50).map(|i| (i * (c + 1)) as f64 * 0.1).collect())));
        let mut buf = Vec::new();
        write_features_csv(std::slice::from_ref(&v), &mut buf).unwrap();
        let back = read_features_csv(buf.as_slice(), false).unwrap();
        assert_eq!(back, vec![v]);
    }
}
