use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Activity;

pub const CONDITIONS: [&str; 3] = ["imu", "generated", "video"];

/// Held-out accuracy of the three classifiers on one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub subject: String,
    /// Indexed like [`CONDITIONS`].
    pub accuracy: [f64; 3],
}

/// Per-activity averages, one row per signal or feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseTable {
    pub rows: Vec<MseRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseRow {
    pub name: String,
    /// Indexed by activity; `None` when the activity had no test windows.
    pub cells: [Option<f64>; Activity::COUNT],
}

impl MseRow {
    /// Mean over the activities that have a value.
    pub fn mean(&self) -> Option<f64> {
        let present: Vec<f64> = self.cells.iter().flatten().copied().collect();
        (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
    }
}

impl MseTable {
    /// Mean of the row means.
    pub fn grand_mean(&self) -> Option<f64> {
        let means: Vec<f64> = self.rows.iter().filter_map(MseRow::mean).collect();
        (!means.is_empty()).then(|| means.iter().sum::<f64>() / means.len() as f64)
    }
}

/// Running per-activity means.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MseAccumulator {
    sums: Vec<[f64; Activity::COUNT]>,
    counts: Vec<[usize; Activity::COUNT]>,
}

impl MseAccumulator {
    pub fn new(rows: usize) -> Self {
        MseAccumulator {
            sums: vec![[0.0; Activity::COUNT]; rows],
            counts: vec![[0; Activity::COUNT]; rows],
        }
    }

    pub fn add(&mut self, row: usize, activity: Activity, value: f64) {
        self.sums[row][activity.index()] += value;
        self.counts[row][activity.index()] += 1;
    }

    pub fn merge(&mut self, other: &MseAccumulator) {
        for r in 0..self.sums.len() {
            for a in 0..Activity::COUNT {
                self.sums[r][a] += other.sums[r][a];
                self.counts[r][a] += other.counts[r][a];
            }
        }
    }

    pub fn table(&self, names: impl IntoIterator<Item = String>) -> MseTable {
        MseTable {
            rows: names
                .into_iter()
                .zip(self.sums.iter().zip(&self.counts))
                .map(|(name, (s, c))| MseRow {
                    name,
                    cells: std::array::from_fn(|a| (c[a] > 0).then(|| s[a] / c[a] as f64)),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub folds: Vec<AccuracyRow>,
    pub signal_mse: MseTable,
    pub feature_mse: MseTable,
    /// Same layout as `feature_mse`, for features computed directly from
    /// the video-derived windows.
    pub naive_feature_mse: MseTable,
}

impl ExperimentReport {
    pub fn mean_accuracy(&self) -> [f64; 3] {
        let n = self.folds.len() as f64;
        std::array::from_fn(|c| self.folds.iter().map(|r| r.accuracy[c]).sum::<f64>() / n)
    }

    /// `1 - generated / naive` over the grand means of the feature tables.
    pub fn feature_mse_reduction(&self) -> Option<f64> {
        let g = self.feature_mse.grand_mean()?;
        let n = self.naive_feature_mse.grand_mean()?;
        (n > 0.0).then(|| 1.0 - g / n)
    }

    fn check(&self) -> Result<()> {
        if self.folds.is_empty() {
            return Err(Error::precondition("report has no folds"));
        }
        Ok(())
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
}

fn activity_header() -> Vec<String> {
    Activity::ALL
        .iter()
        .map(|a| a.name().to_string())
        .chain(["Mean".to_string()])
        .collect()
}

fn accuracy_rows(r: &ExperimentReport) -> Vec<Vec<String>> {
    let mean = r.mean_accuracy();
    r.folds
        .iter()
        .map(|row| (row.subject.clone(), row.accuracy))
        .chain([("Mean".to_string(), mean)])
        .map(|(name, acc)| std::iter::once(name).chain(acc.iter().map(|v| format!("{v:.3}"))).collect())
        .collect()
}

fn mse_rows(t: &MseTable) -> Vec<Vec<String>> {
    t.rows
        .iter()
        .map(|row| {
            std::iter::once(row.name.clone())
                .chain(row.cells.iter().map(|&c| cell(c)))
                .chain([cell(row.mean())])
                .collect()
        })
        .collect()
}

fn mse_with_mean_row(t: &MseTable) -> Vec<Vec<String>> {
    let mut rows = mse_rows(t);
    let mut mean_row = vec!["Mean".to_string()];
    for a in 0..Activity::COUNT {
        let vals: Vec<f64> = t.rows.iter().filter_map(|r| r.cells[a]).collect();
        mean_row.push(cell((!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)));
    }
    mean_row.push(cell(t.grand_mean()));
    rows.push(mean_row);
    rows
}

struct Section {
    title: &'static str,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn sections(r: &ExperimentReport) -> Vec<Section> {
    let mut acc_header = vec!["subject".to_string()];
    acc_header.extend(CONDITIONS.iter().map(|c| c.to_string()));
    let with_first = |first: &str| {
        let mut h = vec![first.to_string()];
        h.extend(activity_header());
        h
    };
    let all = vec![
        Section {
            title: "accuracy",
            header: acc_header,
            rows: accuracy_rows(r),
        },
        Section {
            title: "signal_mse",
            header: with_first("signal"),
            rows: mse_rows(&r.signal_mse),
        },
        Section {
            title: "feature_mse",
            header: with_first("feature"),
            rows: mse_with_mean_row(&r.feature_mse),
        },
        Section {
            title: "naive_feature_mse",
            header: with_first("feature"),
            rows: mse_with_mean_row(&r.naive_feature_mse),
        },
    ];
    all.into_iter().filter(|s| !s.rows.is_empty()).collect()
}

/// Sectioned CSV: each section starts with a `# title` line and its header.
pub fn render_csv(r: &ExperimentReport) -> Result<String> {
    r.check()?;
    let mut out = String::new();
    for (i, s) in sections(r).into_iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "# {}", s.title);
        let _ = writeln!(out, "{}", s.header.join(","));
        for row in s.rows {
            let _ = writeln!(out, "{}", row.join(","));
        }
    }
    Ok(out)
}

/// Column-aligned plain text.
pub fn render_text(r: &ExperimentReport) -> Result<String> {
    r.check()?;
    let mut out = String::new();
    for (i, s) in sections(r).into_iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "{}", s.title);
        let all: Vec<&Vec<String>> = std::iter::once(&s.header).chain(s.rows.iter()).collect();
        let widths: Vec<usize> = (0..s.header.len())
            .map(|c| all.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        for row in all {
            let line: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(c, v)| if c == 0 { format!("{v:<w$}", w = widths[c]) } else { format!("{v:>w$}", w = widths[c]) })
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
    }
    Ok(out)
}
