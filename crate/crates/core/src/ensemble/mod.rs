//! Multiclass tree ensembles.
//!
//! * Random Forest: probability trees grown depth-first on bootstrap
//!   resamples with Gini splits; prediction averages leaf distributions.
//! * Gradient Boosted Trees: per iteration one regression tree per class
//!   fit to the softmax cross-entropy gradients, grown leaf-wise with a leaf
//!   cap; prediction is the softmax of the summed leaf scores.
//!
//! Split search is exact: every midpoint between consecutive distinct
//! values of a candidate column is scored. Each tree (and each boosting
//! bag) draws from its own RNG stream derived from the seed, so parallel
//! and serial training produce identical models.

mod gbt;
mod rf;
mod sorted;
pub mod tree;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{column_mismatch, FeatureMatrix};
use crate::par;

pub use gbt::train_gbt_with_history;
pub use tree::{Node, Tree};
use tree::FlatTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    RandomForest,
    GradientBoosting,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::RandomForest => "rf",
            ModelKind::GradientBoosting => "gbt",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> core::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "rf" => Ok(ModelKind::RandomForest),
            "gbt" => Ok(ModelKind::GradientBoosting),
            _ => Err(alloc::format!("unknown classifier `{s}` (expected rf or gbt)")),
        }
    }
}

/// Training hyper-parameters. Defaults: 100 trees, half of the columns as
/// split candidates, forest depth 30, boosting with 16 leaves, learning
/// rate 0.2 and bagging fraction 0.5.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Forest size, or number of boosting iterations.
    pub n_trees: usize,
    pub rf_max_depth: usize,
    /// Share of columns drawn as candidates at each forest split.
    pub rf_feature_fraction: f64,
    pub rf_bootstrap: bool,
    pub gbt_max_leaves: usize,
    pub gbt_learning_rate: f64,
    /// Share of rows drawn (without replacement) per boosting iteration.
    pub gbt_bagging_fraction: f64,
    pub gbt_feature_fraction: f64,
    /// L2 term added to leaf hessian sums.
    pub gbt_lambda: f64,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_trees: 100,
            rf_max_depth: 30,
            rf_feature_fraction: 0.5,
            rf_bootstrap: true,
            gbt_max_leaves: 16,
            gbt_learning_rate: 0.2,
            gbt_bagging_fraction: 0.5,
            gbt_feature_fraction: 0.5,
            gbt_lambda: 1e-3,
            min_samples_leaf: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let frac = |name, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    value: v,
                    expected: "a fraction in (0, 1]",
                })
            }
        };
        frac("rf feature fraction", self.rf_feature_fraction)?;
        frac("gbt bagging fraction", self.gbt_bagging_fraction)?;
        frac("gbt feature fraction", self.gbt_feature_fraction)?;
        let count = |name, v: usize| {
            if v >= 1 {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    value: v as f64,
                    expected: "at least 1",
                })
            }
        };
        count("rf max depth", self.rf_max_depth)?;
        count("min samples per leaf", self.min_samples_leaf)?;
        if self.gbt_max_leaves < 2 {
            return Err(Error::InvalidParameter {
                name: "gbt max leaves",
                value: self.gbt_max_leaves as f64,
                expected: "at least 2",
            });
        }
        if !(self.gbt_learning_rate > 0.0 && self.gbt_learning_rate.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "gbt learning rate",
                value: self.gbt_learning_rate,
                expected: "a positive rate",
            });
        }
        if !(self.gbt_lambda > 0.0 && self.gbt_lambda.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "gbt lambda",
                value: self.gbt_lambda,
                expected: "a positive value",
            });
        }
        Ok(())
    }
}

/// Training rows: features plus one class id per row in `0..n_classes`.
#[derive(Debug, Clone, Copy)]
pub struct Dataset<'a> {
    pub features: &'a FeatureMatrix,
    pub labels: &'a [u8],
    pub n_classes: usize,
}

impl Dataset<'_> {
    pub fn validate(&self) -> Result<()> {
        if self.labels.len() != self.features.n_rows() {
            return Err(Error::ShapeMismatch {
                what: "label count vs feature rows",
                expected: self.features.n_rows(),
                found: self.labels.len(),
            });
        }
        if self.n_classes < 2 || self.n_classes > u8::MAX as usize {
            return Err(Error::InvalidParameter {
                name: "class count",
                value: self.n_classes as f64,
                expected: "between 2 and 255",
            });
        }
        let mut present = alloc::vec![false; self.n_classes];
        for (row, &l) in self.labels.iter().enumerate() {
            if l as usize >= self.n_classes {
                return Err(Error::LabelOutOfRange { row, label: l });
            }
            present[l as usize] = true;
        }
        if present.iter().filter(|&&p| p).count() < 2 {
            return Err(Error::SingleClass);
        }
        Ok(())
    }
}

/// A trained model. Boosted trees are stored iteration-major: tree `t`
/// scores class `t % n_classes`, and its leaf values already include the
/// learning rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    kind: ModelKind,
    n_classes: usize,
    feature_names: Vec<String>,
    config: TrainConfig,
    trees: Vec<Tree>,
    flat: Vec<FlatTree>,
}

/// Rows walked together during batch prediction.
const BLOCK: usize = 8;

impl Ensemble {
    pub fn from_parts(
        kind: ModelKind,
        n_classes: usize,
        feature_names: Vec<String>,
        config: TrainConfig,
        trees: Vec<Tree>,
    ) -> Result<Ensemble> {
        if n_classes < 2 {
            return Err(Error::InvalidParameter {
                name: "class count",
                value: n_classes as f64,
                expected: "at least 2",
            });
        }
        let width = match kind {
            ModelKind::RandomForest => n_classes,
            ModelKind::GradientBoosting => 1,
        };
        if kind == ModelKind::RandomForest && trees.is_empty() {
            return Err(Error::ShapeMismatch {
                what: "forest tree count",
                expected: 1,
                found: 0,
            });
        }
        if kind == ModelKind::GradientBoosting && trees.len() % n_classes != 0 {
            return Err(Error::ShapeMismatch {
                what: "boosted tree count (multiple of class count)",
                expected: trees.len() - trees.len() % n_classes,
                found: trees.len(),
            });
        }
        for t in &trees {
            if t.leaf_width() != width {
                return Err(Error::ShapeMismatch {
                    what: "leaf width",
                    expected: width,
                    found: t.leaf_width(),
                });
            }
            if let Some(f) = t.max_feature() {
                if f as usize >= feature_names.len() {
                    return Err(Error::ShapeMismatch {
                        what: "split feature index",
                        expected: feature_names.len(),
                        found: f as usize,
                    });
                }
            }
        }
        let flat = trees.iter().map(FlatTree::new).collect();
        Ok(Ensemble {
            kind,
            n_classes,
            feature_names,
            config,
            trees,
            flat,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// Rewrites the thresholds of every split on `feature`.
    pub fn map_thresholds<F: Fn(f32) -> f32>(&mut self, feature: usize, f: F) {
        for t in &mut self.trees {
            t.map_thresholds(feature as u32, &f);
        }
        self.flat = self.trees.iter().map(FlatTree::new).collect();
    }

    /// Class probabilities of one row into `out` (length `n_classes`).
    pub fn predict_row(&self, row: &[f32], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        match self.kind {
            ModelKind::RandomForest => {
                for t in &self.trees {
                    for (o, p) in out.iter_mut().zip(t.leaf(row)) {
                        *o += p;
                    }
                }
                let n = self.trees.len() as f64;
                out.iter_mut().for_each(|v| *v /= n);
            }
            ModelKind::GradientBoosting => {
                for (i, t) in self.trees.iter().enumerate() {
                    out[i % self.n_classes] += t.leaf(row)[0];
                }
                softmax_in_place(out);
            }
        }
    }

    /// [`Ensemble::predict_row`] for up to `BLOCK` consecutive rows from
    /// `start`, with identical summation order.
    fn predict_block(&self, m: &FeatureMatrix, start: usize, out: &mut [f64]) {
        let k = self.n_classes;
        let n = out.len() / k;
        let rows: [&[f32]; BLOCK] = core::array::from_fn(|r| m.row(start + r.min(n - 1)));
        out.iter_mut().for_each(|v| *v = 0.0);
        for (i, (t, f)) in self.trees.iter().zip(&self.flat).enumerate() {
            let leaves = f.leaves(&rows);
            for (r, &l) in leaves.iter().enumerate().take(n) {
                let o = &mut out[r * k..(r + 1) * k];
                match self.kind {
                    ModelKind::RandomForest => {
                        for (o, p) in o.iter_mut().zip(t.leaf_at(l)) {
                            *o += p;
                        }
                    }
                    ModelKind::GradientBoosting => o[i % k] += t.leaf_at(l)[0],
                }
            }
        }
        for o in out.chunks_mut(k) {
            match self.kind {
                ModelKind::RandomForest => {
                    let n = self.trees.len() as f64;
                    o.iter_mut().for_each(|v| *v /= n);
                }
                ModelKind::GradientBoosting => softmax_in_place(o),
            }
        }
    }

    /// Probabilities and argmax labels for every row. Columns are matched
    /// to the model's manifest by name.
    pub fn predict(&self, m: &FeatureMatrix) -> Result<Prediction> {
        let owned;
        let m = if m.names() == self.feature_names.as_slice() {
            m
        } else {
            if m.n_cols() != self.feature_names.len() {
                return Err(column_mismatch(&self.feature_names, m.names()));
            }
            owned = m.select_columns(&self.feature_names)?;
            &owned
        };
        let k = self.n_classes;
        let mut probabilities = alloc::vec![0.0; m.n_rows() * k];
        par::for_each_row(&mut probabilities, k * BLOCK, |b, out| self.predict_block(m, b * BLOCK, out));
        let labels = probabilities.chunks(k).map(|p| argmax(p) as u8).collect();
        Ok(Prediction {
            n_classes: k,
            probabilities,
            labels,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub n_classes: usize,
    /// Row-major, `n_classes` per row.
    pub probabilities: Vec<f64>,
    pub labels: Vec<u8>,
}

impl Prediction {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.probabilities[i * self.n_classes..(i + 1) * self.n_classes]
    }
}

/// Index of the largest value; ties go to the smaller index.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..p.len() {
        if p[i] > p[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = libm::exp(*x - m);
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Mean negative log-likelihood of the true classes.
pub fn log_loss(probabilities: &[f64], labels: &[u8], n_classes: usize) -> f64 {
    let mut s = 0.0;
    for (p, &l) in probabilities.chunks(n_classes).zip(labels) {
        s -= libm::log(p[l as usize].max(1e-15));
    }
    s / labels.len().max(1) as f64
}

pub fn train(kind: ModelKind, data: Dataset<'_>, config: &TrainConfig) -> Result<Ensemble> {
    match kind {
        ModelKind::RandomForest => train_rf(data, config),
        ModelKind::GradientBoosting => train_gbt(data, config),
    }
}

pub fn train_rf(data: Dataset<'_>, config: &TrainConfig) -> Result<Ensemble> {
    rf::train(data, config)
}

pub fn train_gbt(data: Dataset<'_>, config: &TrainConfig) -> Result<Ensemble> {
    train_gbt_with_history(data, config, false).map(|(m, _)| m)
}

/// Number of candidate columns for a fraction of `d`, at least one.
pub(crate) fn candidate_count(d: usize, fraction: f64) -> usize {
    let m = libm::ceil(d as f64 * fraction) as usize;
    m.clamp(1, d)
}

/// Independent RNG stream `index` within `domain` for a given seed.
pub(crate) fn stream_rng(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ domain.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(index);
    rng
}

pub(crate) fn draw_candidates(rng: &mut ChaCha8Rng, d: usize, m: usize) -> Vec<usize> {
    if m >= d {
        return (0..d).collect();
    }
    let mut c = rand::seq::index::sample(rng, d, m).into_vec();
    c.sort_unstable();
    c
}
