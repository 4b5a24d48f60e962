use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::sorted::{partition, Columns, Entry};
use super::tree::{split_threshold, Node, Tree, TreeBuilder};
use super::{candidate_count, draw_candidates, stream_rng, Dataset, Ensemble, ModelKind, TrainConfig};
use crate::error::Result;
use crate::par;

const RF_STREAM: u64 = 1;

pub(super) fn train(data: Dataset<'_>, config: &TrainConfig) -> Result<Ensemble> {
    config.validate()?;
    data.validate()?;
    let cols = Columns::new(data.features);
    let trees = par::map_range(config.n_trees, |t| grow_tree(&cols, data, config, t as u64));
    Ensemble::from_parts(
        ModelKind::RandomForest,
        data.n_classes,
        data.features.names().to_vec(),
        config.clone(),
        trees,
    )
}

struct Grower<'a> {
    cols: &'a Columns,
    labels: &'a [u8],
    weights: Vec<u32>,
    orders: Vec<Vec<Entry>>,
    n_classes: usize,
    n_candidates: usize,
    config: &'a TrainConfig,
    rng: ChaCha8Rng,
    go_left: Vec<bool>,
    scratch: Vec<Entry>,
    builder: TreeBuilder,
    leaf_values: Vec<f64>,
}

struct Best {
    feature: usize,
    threshold: f32,
    score: f64,
}

fn grow_tree(cols: &Columns, data: Dataset<'_>, config: &TrainConfig, index: u64) -> Tree {
    let n = data.labels.len();
    let mut rng = stream_rng(config.seed, RF_STREAM, index);
    let mut weights = alloc::vec![0u32; n];
    if config.rf_bootstrap {
        for _ in 0..n {
            weights[rng.random_range(0..n)] += 1;
        }
    } else {
        weights.iter_mut().for_each(|w| *w = 1);
    }
    let keep: Vec<bool> = weights.iter().map(|&w| w > 0).collect();
    let orders = cols.restrict(&keep);
    let active = orders[0].len();
    let mut g = Grower {
        cols,
        labels: data.labels,
        weights,
        orders,
        n_classes: data.n_classes,
        n_candidates: candidate_count(cols.n_cols(), config.rf_feature_fraction),
        config,
        rng,
        go_left: alloc::vec![false; n],
        scratch: Vec::new(),
        builder: TreeBuilder::default(),
        leaf_values: Vec::new(),
    };
    g.grow(0, active, 0);
    let Grower {
        builder,
        leaf_values,
        n_classes,
        ..
    } = g;
    builder.finish(leaf_values, n_classes)
}

impl Grower<'_> {
    fn grow(&mut self, lo: usize, hi: usize, depth: usize) -> usize {
        let me = self.builder.add_placeholder();
        let mut counts = alloc::vec![0u64; self.n_classes];
        for e in &self.orders[0][lo..hi] {
            counts[self.labels[e.r as usize] as usize] += self.weights[e.r as usize] as u64;
        }
        let total: u64 = counts.iter().sum();
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let split = if depth >= self.config.rf_max_depth || pure || hi - lo < 2 {
            None
        } else {
            self.best_split(lo, hi, &counts, total)
        };
        match split {
            None => {
                let v = self.leaf_values.len() / self.n_classes;
                self.leaf_values
                    .extend(counts.iter().map(|&c| c as f64 / total as f64));
                self.builder.set(me, Node::Leaf { value: v as u32 });
            }
            Some(b) => {
                for e in &self.orders[b.feature][lo..hi] {
                    self.go_left[e.r as usize] = e.v < b.threshold;
                }
                let mid = partition(&mut self.orders, lo, hi, &self.go_left, &mut self.scratch);
                let left = self.grow(lo, mid, depth + 1);
                let right = self.grow(mid, hi, depth + 1);
                self.builder.set(
                    me,
                    Node::Split {
                        feature: b.feature as u32,
                        threshold: b.threshold,
                        left: left as u32,
                        right: right as u32,
                    },
                );
            }
        }
        me
    }

    /// Best Gini split among freshly drawn candidate columns. Maximizing
    /// `sum_child (sum_k n_k^2) / n_child` is equivalent to maximizing the
    /// impurity decrease; the sums of squares are exact integers.
    fn best_split(&mut self, lo: usize, hi: usize, counts: &[u64], total: u64) -> Option<Best> {
        let candidates = draw_candidates(&mut self.rng, self.cols.n_cols(), self.n_candidates);
        let sq_total: u64 = counts.iter().map(|c| c * c).sum();
        let parent = sq_total as f64 / total as f64;
        let min_leaf = self.config.min_samples_leaf as u64;
        let mut best: Option<Best> = None;
        let mut best_score = parent;
        let mut left = alloc::vec![0u64; self.n_classes];
        let mut right = alloc::vec![0u64; self.n_classes];
        for j in candidates {
            let order = &self.orders[j][lo..hi];
            left.iter_mut().for_each(|c| *c = 0);
            right.copy_from_slice(counts);
            let (mut n_l, mut n_r) = (0u64, total);
            let (mut sq_l, mut sq_r) = (0u64, sq_total);
            for i in 0..order.len() - 1 {
                let r = order[i].r as usize;
                let w = self.weights[r] as u64;
                let c = self.labels[r] as usize;
                sq_l += (2 * left[c] + w) * w;
                left[c] += w;
                sq_r -= (2 * right[c] - w) * w;
                right[c] -= w;
                n_l += w;
                n_r -= w;
                let v = order[i].v;
                let next = order[i + 1].v;
                if v < next && n_l >= min_leaf && n_r >= min_leaf {
                    let score = sq_l as f64 / n_l as f64 + sq_r as f64 / n_r as f64;
                    if score > best_score {
                        best_score = score;
                        best = Some(Best {
                            feature: j,
                            threshold: split_threshold(v, next),
                            score,
                        });
                    }
                }
            }
        }
        debug_assert!(best.as_ref().is_none_or(|b| b.score > parent));
        best
    }
}
