//! Random-forest activity classifier over feature vectors.

use std::fmt::Write as _;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{feature_name, FeatureVector, NUM_FEATURES};
use crate::types::{derive_seed, Activity};

const NUM_CLASSES: usize = Activity::COUNT;
const FOREST_MAGIC: &[u8; 4] = b"VIMF";
pub const FOREST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_features: usize,
    /// `None` grows until leaves are pure or cannot be split.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_features: (NUM_FEATURES as f64).sqrt().ceil() as usize,
            max_depth: None,
            min_leaf: 1,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("a forest needs at least one tree".into()));
        }
        if !(1..=NUM_FEATURES).contains(&self.max_features) {
            return Err(Error::Config(format!("max_features must be in 1..={NUM_FEATURES}")));
        }
        if self.min_leaf == 0 {
            return Err(Error::Config("min_leaf must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    /// Samples with `value <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        histogram: [u32; NUM_CLASSES],
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    /// Index of the leaf node `x` falls into.
    pub fn leaf_index(&self, x: &[f64; NUM_FEATURES]) -> usize {
        let mut i = 0;
        while let Node::Split {
            feature,
            threshold,
            left,
            right,
        } = &self.nodes[i]
        {
            i = if x[*feature] <= *threshold { *left } else { *right };
        }
        i
    }

    pub fn leaf_for(&self, x: &[f64; NUM_FEATURES]) -> &[u32; NUM_CLASSES] {
        match &self.nodes[self.leaf_index(x)] {
            Node::Leaf { histogram } => histogram,
            Node::Split { .. } => unreachable!("leaf_index stops at a leaf"),
        }
    }

    /// Majority class of the reached leaf, lowest index on ties.
    pub fn vote(&self, x: &[f64; NUM_FEATURES]) -> usize {
        argmax_lowest(self.leaf_for(x))
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub trees: Vec<DecisionTree>,
    pub max_features: usize,
    pub seed: u64,
}

fn argmax_lowest<C: Copy + PartialOrd>(counts: &[C]) -> usize {
    let mut best = 0;
    for (i, c) in counts.iter().enumerate().skip(1) {
        if *c > counts[best] {
            best = i;
        }
    }
    best
}

/// Plurality over per-tree votes; the lowest class index wins ties.
pub fn plurality(votes: &[Activity]) -> Option<Activity> {
    if votes.is_empty() {
        return None;
    }
    let mut tally = [0usize; NUM_CLASSES];
    for v in votes {
        tally[v.index()] += 1;
    }
    Activity::from_index(argmax_lowest(&tally))
}

/// Bootstrap draw (with replacement, same size) for one tree.
pub fn bootstrap_indices(n: usize, seed: u64, tree: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, tree as u64));
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

struct Split {
    feature: usize,
    threshold: f64,
    /// Sum over children of `sum(count^2) / size`; larger is purer.
    score: f64,
}

struct Builder<'a> {
    x: &'a [[f64; NUM_FEATURES]],
    y: &'a [usize],
    cfg: &'a ForestConfig,
    rng: ChaCha8Rng,
}

impl Builder<'_> {
    fn histogram(&self, idx: &[usize]) -> [u32; NUM_CLASSES] {
        let mut h = [0u32; NUM_CLASSES];
        for &i in idx {
            h[self.y[i]] += 1;
        }
        h
    }

    /// Best threshold on one feature, or `None` when the feature is constant
    /// over `idx`. `Some(None)` means non-constant but no admissible split.
    fn best_on_feature(&self, idx: &[usize], f: usize, total: &[u32; NUM_CLASSES]) -> Option<Option<Split>> {
        let mut pairs: Vec<(f64, usize)> = idx.iter().map(|&i| (self.x[i][f], self.y[i])).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if pairs[0].0 == pairs[pairs.len() - 1].0 {
            return None;
        }
        let n = pairs.len();
        let mut left = [0u32; NUM_CLASSES];
        let mut best: Option<Split> = None;
        for k in 0..n - 1 {
            left[pairs[k].1] += 1;
            if pairs[k].0 == pairs[k + 1].0 {
                continue;
            }
            let nl = k + 1;
            let nr = n - nl;
            if nl < self.cfg.min_leaf || nr < self.cfg.min_leaf {
                continue;
            }
            let mut sl = 0.0;
            let mut sr = 0.0;
            for c in 0..NUM_CLASSES {
                let l = left[c] as f64;
                let r = (total[c] - left[c]) as f64;
                sl += l * l;
                sr += r * r;
            }
            let score = sl / nl as f64 + sr / nr as f64;
            if best.as_ref().is_none_or(|b| score > b.score) {
                let (a, b) = (pairs[k].0, pairs[k + 1].0);
                let mut threshold = 0.5 * (a + b);
                if threshold >= b || !threshold.is_finite() {
                    threshold = a;
                }
                best = Some(Split {
                    feature: f,
                    threshold,
                    score,
                });
            }
        }
        Some(best)
    }

    fn find_split(&mut self, idx: &[usize], total: &[u32; NUM_CLASSES]) -> Option<Split> {
        let mut order: Vec<usize> = (0..NUM_FEATURES).collect();
        order.shuffle(&mut self.rng);
        let mut visited = 0;
        let mut candidates = Vec::new();
        for f in order {
            if visited >= self.cfg.max_features {
                break;
            }
            if let Some(best) = self.best_on_feature(idx, f, total) {
                visited += 1;
                candidates.extend(best);
            }
        }
        candidates
            .into_iter()
            .reduce(|a, b| {
                if b.score > a.score || (b.score == a.score && b.feature < a.feature) {
                    b
                } else {
                    a
                }
            })
    }

    fn build(mut self, mut samples: Vec<usize>) -> DecisionTree {
        let mut nodes = vec![Node::Leaf {
            histogram: [0; NUM_CLASSES],
        }];
        // (node slot, sample range, depth)
        let mut stack = vec![(0usize, 0usize, samples.len(), 0usize)];
        while let Some((slot, lo, hi, depth)) = stack.pop() {
            let idx = &samples[lo..hi];
            let total = self.histogram(idx);
            let pure = total.iter().filter(|&&c| c > 0).count() <= 1;
            let depth_ok = self.cfg.max_depth.is_none_or(|d| depth < d);
            let split = if !pure && depth_ok && idx.len() >= 2 * self.cfg.min_leaf {
                self.find_split(idx, &total)
            } else {
                None
            };
            match split {
                None => nodes[slot] = Node::Leaf { histogram: total },
                Some(s) => {
                    let range = &mut samples[lo..hi];
                    range.sort_by(|&a, &b| self.x[a][s.feature].total_cmp(&self.x[b][s.feature]).then(a.cmp(&b)));
                    let nl = range.partition_point(|&i| self.x[i][s.feature] <= s.threshold);
                    let left = nodes.len();
                    nodes.push(Node::Leaf { histogram: [0; NUM_CLASSES] });
                    nodes.push(Node::Leaf { histogram: [0; NUM_CLASSES] });
                    nodes[slot] = Node::Split {
                        feature: s.feature,
                        threshold: s.threshold,
                        left,
                        right: left + 1,
                    };
                    stack.push((left + 1, lo + nl, hi, depth + 1));
                    stack.push((left, lo, lo + nl, depth + 1));
                }
            }
        }
        DecisionTree { nodes }
    }
}

/// Fits a forest on raw rows and class indices.
pub fn fit_forest(x: &[[f64; NUM_FEATURES]], y: &[usize], cfg: &ForestConfig) -> Result<Forest> {
    cfg.validate()?;
    if x.is_empty() {
        return Err(Error::precondition("cannot train a forest on an empty set"));
    }
    if x.len() != y.len() {
        return Err(Error::shape(format!("{} rows but {} labels", x.len(), y.len())));
    }
    if let Some(bad) = y.iter().find(|&&c| c >= NUM_CLASSES) {
        return Err(Error::precondition(format!("label {bad} outside the {NUM_CLASSES} classes")));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::precondition("feature matrix contains non-finite values"));
    }
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let builder = Builder {
                x,
                y,
                cfg,
                rng: ChaCha8Rng::seed_from_u64(derive_seed(derive_seed(cfg.seed, t as u64), 1)),
            };
            builder.build(bootstrap_indices(x.len(), cfg.seed, t))
        })
        .collect();
    Ok(Forest {
        trees,
        max_features: cfg.max_features,
        seed: cfg.seed,
    })
}

/// Fits a forest on standardized feature vectors labelled by activity.
pub fn train_forest(data: &[FeatureVector], cfg: &ForestConfig) -> Result<Forest> {
    if let Some(v) = data.iter().find(|v| !v.standardized) {
        return Err(Error::State(format!(
            "forest input must be standardized (subject {}, {})",
            v.subject, v.activity
        )));
    }
    let x: Vec<[f64; NUM_FEATURES]> = data.iter().map(|v| v.values).collect();
    let y: Vec<usize> = data.iter().map(|v| v.activity.index()).collect();
    fit_forest(&x, &y, cfg)
}

impl Forest {
    pub fn predict_row(&self, x: &[f64; NUM_FEATURES]) -> Activity {
        let votes: Vec<Activity> = self
            .trees
            .iter()
            .map(|t| Activity::from_index(t.vote(x)).expect("class index in range"))
            .collect();
        plurality(&votes).expect("forest has trees")
    }

    pub fn predict(&self, v: &FeatureVector) -> Result<Activity> {
        if !v.standardized {
            return Err(Error::State("prediction input must be standardized".into()));
        }
        Ok(self.predict_row(&v.values))
    }

    pub fn accuracy(&self, data: &[FeatureVector]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::precondition("accuracy of an empty set is undefined"));
        }
        let mut correct = 0usize;
        for v in data {
            if self.predict(v)? == v.activity {
                correct += 1;
            }
        }
        Ok(correct as f64 / data.len() as f64)
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(FOREST_MAGIC)?;
        w.write_all(&FOREST_VERSION.to_le_bytes())?;
        w.write_all(&(self.max_features as u32).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&(self.trees.len() as u32).to_le_bytes())?;
        for t in &self.trees {
            w.write_all(&(t.nodes.len() as u32).to_le_bytes())?;
            for n in &t.nodes {
                match n {
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => {
                        w.write_all(&[0, *feature as u8])?;
                        w.write_all(&threshold.to_le_bytes())?;
                        w.write_all(&(*left as u32).to_le_bytes())?;
                        w.write_all(&(*right as u32).to_le_bytes())?;
                    }
                    Node::Leaf { histogram } => {
                        w.write_all(&[1])?;
                        for c in histogram {
                            w.write_all(&c.to_le_bytes())?;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Forest> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = bytes
                .get(pos..pos + n)
                .ok_or_else(|| Error::CorruptCheckpoint(format!("forest file truncated at byte {pos}")))?;
            pos += n;
            Ok(s)
        };
        if take(4)? != FOREST_MAGIC {
            return Err(Error::CorruptCheckpoint("not a forest file".into()));
        }
        let u32_of = |s: &[u8]| u32::from_le_bytes(s.try_into().expect("4 bytes"));
        let version = u32_of(take(4)?);
        if version != FOREST_VERSION {
            return Err(Error::Version(format!("forest format {version}, this build reads {FOREST_VERSION}")));
        }
        let max_features = u32_of(take(4)?) as usize;
        let seed = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes"));
        let n_trees = u32_of(take(4)?) as usize;
        let mut trees = Vec::with_capacity(n_trees.min(1 << 16));
        for _ in 0..n_trees {
            let n_nodes = u32_of(take(4)?) as usize;
            let mut nodes = Vec::with_capacity(n_nodes.min(1 << 20));
            for _ in 0..n_nodes {
                let node = match take(1)?[0] {
                    0 => {
                        let feature = take(1)?[0] as usize;
                        let threshold = f64::from_le_bytes(take(8)?.try_into().expect("8 bytes"));
                        let left = u32_of(take(4)?) as usize;
                        let right = u32_of(take(4)?) as usize;
                        if feature >= NUM_FEATURES || left >= n_nodes || right >= n_nodes {
                            return Err(Error::CorruptCheckpoint("split node out of range".into()));
                        }
                        Node::Split {
                            feature,
                            threshold,
                            left,
                            right,
                        }
                    }
                    1 => {
                        let mut histogram = [0u32; NUM_CLASSES];
                        for c in &mut histogram {
                            *c = u32_of(take(4)?);
                        }
                        Node::Leaf { histogram }
                    }
                    tag => return Err(Error::CorruptCheckpoint(format!("unknown node tag {tag}"))),
                };
                nodes.push(node);
            }
            if nodes.is_empty() {
                return Err(Error::CorruptCheckpoint("empty tree".into()));
            }
            trees.push(DecisionTree { nodes });
        }
        if pos != bytes.len() {
            return Err(Error::CorruptCheckpoint("trailing bytes after forest".into()));
        }
        if trees.is_empty() {
            return Err(Error::CorruptCheckpoint("forest has no trees".into()));
        }
        Ok(Forest {
            trees,
            max_features,
            seed,
        })
    }

    /// One node per line, for diffing.
    pub fn text_dump(&self) -> String {
        let mut out = String::new();
        for (t, tree) in self.trees.iter().enumerate() {
            let _ = writeln!(out, "tree {t}");
            for (i, n) in tree.nodes.iter().enumerate() {
                let _ = match n {
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => writeln!(
                        out,
                        "  {i} split {} <= {threshold:e} -> {left} {right}",
                        feature_name(*feature)
                    ),
                    Node::Leaf { histogram } => writeln!(out, "  {i} leaf {histogram:?}"),
                };
            }
        }
        out
    }
}
