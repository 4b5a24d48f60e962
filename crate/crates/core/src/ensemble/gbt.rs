use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use super::sorted::{partition, Columns, Entry};
use super::tree::{split_threshold, Node, Tree, TreeBuilder};
use super::{
    candidate_count, draw_candidates, log_loss, softmax_in_place, stream_rng, Dataset, Ensemble, ModelKind,
    TrainConfig,
};
use crate::error::Result;
use crate::par;

const BAG_STREAM: u64 = 2;
const SPLIT_STREAM: u64 = 3;

/// Trains a boosted model. With `track_loss`, also returns the training
/// log-loss before the first iteration and after each one.
pub fn train_gbt_with_history(
    data: Dataset<'_>,
    config: &TrainConfig,
    track_loss: bool,
) -> Result<(Ensemble, Vec<f64>)> {
    config.validate()?;
    data.validate()?;
    let n = data.labels.len();
    let k = data.n_classes;
    let cols = Columns::new(data.features);
    let n_bag = candidate_count(n, config.gbt_bagging_fraction);

    let mut scores = alloc::vec![0.0f64; n * k];
    let mut probs = alloc::vec![0.0f64; n * k];
    let mut history = Vec::new();
    let mut trees: Vec<Tree> = Vec::with_capacity(config.n_trees * k);
    if track_loss {
        history.push(log_loss_of(&scores, &mut probs, data.labels, k));
    }

    for it in 0..config.n_trees {
        let keep: Vec<bool> = if n_bag >= n {
            alloc::vec![true; n]
        } else {
            let mut rng = stream_rng(config.seed, BAG_STREAM, it as u64);
            let mut keep = alloc::vec![false; n];
            for i in rand::seq::index::sample(&mut rng, n, n_bag) {
                keep[i] = true;
            }
            keep
        };
        softmax_rows(&scores, &mut probs, k);
        let orders = cols.restrict(&keep);
        let round = par::map_range(k, |c| {
            let mut gh = alloc::vec![[0.0f64; 2]; n];
            for r in 0..n {
                if keep[r] {
                    let p = probs[r * k + c];
                    let y = if data.labels[r] as usize == c { 1.0 } else { 0.0 };
                    gh[r] = [p - y, p * (1.0 - p)];
                }
            }
            let rng = stream_rng(config.seed, SPLIT_STREAM, (it * k + c) as u64);
            LeafWise {
                cols: &cols,
                orders: orders.clone(),
                gh,
                config,
                n_candidates: candidate_count(cols.n_cols(), config.gbt_feature_fraction),
                rng,
                go_left: alloc::vec![false; n],
                scratch: Vec::new(),
            }
            .grow()
        });
        for (c, t) in round.iter().enumerate() {
            for r in 0..n {
                let l = t.leaf_index_with(|f| cols.values[f][r]);
                scores[r * k + c] += t.leaf_at(l)[0];
            }
        }
        trees.extend(round);
        if track_loss {
            history.push(log_loss_of(&scores, &mut probs, data.labels, k));
        }
    }

    let model = Ensemble::from_parts(
        ModelKind::GradientBoosting,
        k,
        data.features.names().to_vec(),
        config.clone(),
        trees,
    )?;
    Ok((model, history))
}

fn softmax_rows(scores: &[f64], probs: &mut [f64], k: usize) {
    par::for_each_row(probs, k, |r, p| {
        p.copy_from_slice(&scores[r * k..(r + 1) * k]);
        softmax_in_place(p);
    });
}

fn log_loss_of(scores: &[f64], probs: &mut [f64], labels: &[u8], k: usize) -> f64 {
    softmax_rows(scores, probs, k);
    log_loss(probs, labels, k)
}

struct LeafWise<'a> {
    cols: &'a Columns,
    orders: Vec<Vec<Entry>>,
    /// Gradient and hessian per row.
    gh: Vec<[f64; 2]>,
    config: &'a TrainConfig,
    n_candidates: usize,
    rng: ChaCha8Rng,
    go_left: Vec<bool>,
    scratch: Vec<Entry>,
}

struct Leaf {
    node: usize,
    lo: usize,
    hi: usize,
    g: f64,
    h: f64,
    split: Option<Split>,
}

struct Split {
    feature: usize,
    threshold: f32,
    gain: f64,
}

impl LeafWise<'_> {
    fn grow(mut self) -> Tree {
        let mut builder = TreeBuilder::default();
        let n_active = self.orders[0].len();
        let root = builder.add_placeholder();
        let mut leaves = alloc::vec![self.make_leaf(root, 0, n_active)];
        while leaves.len() < self.config.gbt_max_leaves {
            let mut pick: Option<usize> = None;
            for (i, l) in leaves.iter().enumerate() {
                if let Some(s) = &l.split {
                    if pick.is_none_or(|p| s.gain > leaves[p].split.as_ref().unwrap().gain) {
                        pick = Some(i);
                    }
                }
            }
            let Some(i) = pick else { break };
            let (node, lo, hi) = (leaves[i].node, leaves[i].lo, leaves[i].hi);
            let s = leaves[i].split.take().unwrap();
            for e in &self.orders[s.feature][lo..hi] {
                self.go_left[e.r as usize] = e.v < s.threshold;
            }
            let mid = partition(&mut self.orders, lo, hi, &self.go_left, &mut self.scratch);
            let left = builder.add_placeholder();
            let right = builder.add_placeholder();
            builder.set(
                node,
                Node::Split {
                    feature: s.feature as u32,
                    threshold: s.threshold,
                    left: left as u32,
                    right: right as u32,
                },
            );
            leaves[i] = self.make_leaf(left, lo, mid);
            let r = self.make_leaf(right, mid, hi);
            leaves.push(r);
        }
        let lambda = self.config.gbt_lambda;
        let lr = self.config.gbt_learning_rate;
        let mut values = Vec::with_capacity(leaves.len());
        for (v, l) in leaves.iter().enumerate() {
            values.push(-l.g / (l.h + lambda) * lr);
            builder.set(l.node, Node::Leaf { value: v as u32 });
        }
        builder.finish(values, 1)
    }

    fn make_leaf(&mut self, node: usize, lo: usize, hi: usize) -> Leaf {
        let (mut g, mut h) = (0.0, 0.0);
        for e in &self.orders[0][lo..hi] {
            let [dg, dh] = self.gh[e.r as usize];
            g += dg;
            h += dh;
        }
        let split = if hi - lo >= 2 * self.config.min_samples_leaf {
            self.best_split(lo, hi, g, h)
        } else {
            None
        };
        Leaf {
            node,
            lo,
            hi,
            g,
            h,
            split,
        }
    }

    /// Best Newton-gain split among freshly drawn candidate columns, if any
    /// has positive gain.
    fn best_split(&mut self, lo: usize, hi: usize, g: f64, h: f64) -> Option<Split> {
        let candidates = draw_candidates(&mut self.rng, self.cols.n_cols(), self.n_candidates);
        let lambda = self.config.gbt_lambda;
        let min_leaf = self.config.min_samples_leaf;
        let parent = g * g / (h + lambda);
        let mut best: Option<Split> = None;
        let mut best_gain = 0.0;
        for j in candidates {
            let order = &self.orders[j][lo..hi];
            let (mut gl, mut hl) = (0.0, 0.0);
            for i in 0..order.len() - 1 {
                let [dg, dh] = self.gh[order[i].r as usize];
                gl += dg;
                hl += dh;
                let v = order[i].v;
                let next = order[i + 1].v;
                let n_l = i + 1;
                if v < next && n_l >= min_leaf && order.len() - n_l >= min_leaf {
                    let gr = g - gl;
                    let hr = h - hl;
                    let gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent;
                    if gain > best_gain {
                        best_gain = gain;
                        best = Some(Split {
                            feature: j,
                            threshold: split_threshold(v, next),
                            gain,
                        });
                    }
                }
            }
        }
        best
    }
}
