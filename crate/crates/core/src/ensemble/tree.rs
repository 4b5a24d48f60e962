use alloc::vec::Vec;

use crate::error::{Error, Result};

/// A tree node. Rows go left iff `value < threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split {
        feature: u32,
        threshold: f32,
        left: u32,
        right: u32,
    },
    /// Index into the tree's leaf value table.
    Leaf { value: u32 },
}

/// A binary decision tree whose leaves carry `leaf_width` values each:
/// class probabilities for forests, a single score for boosting.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
    leaf_values: Vec<f64>,
    leaf_width: usize,
}

impl Tree {
    /// Builds a tree rooted at node 0, checking that every child and leaf
    /// reference is in range and that each node is reached exactly once.
    pub fn from_parts(nodes: Vec<Node>, leaf_values: Vec<f64>, leaf_width: usize) -> Result<Tree> {
        let bad = |what| Error::ShapeMismatch {
            what,
            expected: nodes.len(),
            found: 0,
        };
        if nodes.is_empty() || leaf_width == 0 || leaf_values.len() % leaf_width != 0 {
            return Err(bad("tree layout"));
        }
        let n_leaves = leaf_values.len() / leaf_width;
        let mut seen = alloc::vec![false; nodes.len()];
        let mut stack = alloc::vec![0usize];
        while let Some(i) = stack.pop() {
            if seen[i] {
                return Err(bad("tree node reachable twice"));
            }
            seen[i] = true;
            match nodes[i] {
                Node::Split { left, right, threshold, .. } => {
                    if left as usize >= nodes.len() || right as usize >= nodes.len() || threshold.is_nan() {
                        return Err(bad("tree child index"));
                    }
                    stack.push(right as usize);
                    stack.push(left as usize);
                }
                Node::Leaf { value } => {
                    if value as usize >= n_leaves {
                        return Err(bad("tree leaf index"));
                    }
                }
            }
        }
        if !seen.iter().all(|&s| s) {
            return Err(bad("unreachable tree node"));
        }
        Ok(Tree {
            nodes,
            leaf_values,
            leaf_width,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn leaf_values(&self) -> &[f64] {
        &self.leaf_values
    }

    pub fn leaf_width(&self) -> usize {
        self.leaf_width
    }

    pub fn n_leaves(&self) -> usize {
        self.leaf_values.len() / self.leaf_width
    }

    pub fn max_feature(&self) -> Option<u32> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .max()
    }

    /// Depth of the deepest leaf (a lone leaf has depth 0).
    pub fn depth(&self) -> usize {
        let mut best = 0;
        let mut stack = alloc::vec![(0usize, 0usize)];
        while let Some((i, d)) = stack.pop() {
            match self.nodes[i] {
                Node::Split { left, right, .. } => {
                    stack.push((left as usize, d + 1));
                    stack.push((right as usize, d + 1));
                }
                Node::Leaf { .. } => best = best.max(d),
            }
        }
        best
    }

    #[inline]
    pub fn leaf_index_with<F: Fn(usize) -> f32>(&self, value: F) -> usize {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if value(feature as usize) < threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
                Node::Leaf { value } => return value as usize,
            }
        }
    }

    #[inline]
    pub fn leaf(&self, row: &[f32]) -> &[f64] {
        let l = self.leaf_index_with(|f| row[f]);
        &self.leaf_values[l * self.leaf_width..(l + 1) * self.leaf_width]
    }

    pub(crate) fn leaf_at(&self, l: usize) -> &[f64] {
        &self.leaf_values[l * self.leaf_width..(l + 1) * self.leaf_width]
    }

    pub(crate) fn map_thresholds<F: Fn(f32) -> f32>(&mut self, feature: u32, f: F) {
        for n in &mut self.nodes {
            if let Node::Split {
                feature: ff,
                threshold,
                ..
            } = n
            {
                if *ff == feature {
                    *threshold = f(*threshold);
                }
            }
        }
    }
}

/// Grows a tree node by node; leaves are assigned values on `finish`.
#[derive(Debug, Default)]
pub(crate) struct TreeBuilder {
    nodes: Vec<Node>,
}

impl TreeBuilder {
    pub(crate) fn add_placeholder(&mut self) -> usize {
        self.nodes.push(Node::Leaf { value: u32::MAX });
        self.nodes.len() - 1
    }

    pub(crate) fn set(&mut self, at: usize, node: Node) {
        self.nodes[at] = node;
    }

    pub(crate) fn finish(self, leaf_values: Vec<f64>, leaf_width: usize) -> Tree {
        debug_assert!(self.nodes.iter().all(|n| !matches!(n, Node::Leaf { value } if *value == u32::MAX)));
        Tree {
            nodes: self.nodes,
            leaf_values,
            leaf_width,
        }
    }
}

/// Prediction layout of a [`Tree`]. Leaves point back at themselves, so
/// every row can take exactly `depth` steps without a data-dependent exit,
/// which lets several rows be walked in lockstep.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct FlatTree {
    feature: Vec<u32>,
    threshold: Vec<f32>,
    children: Vec<[u32; 2]>,
    leaf: Vec<u32>,
    depth: usize,
}

impl FlatTree {
    pub(crate) fn new(t: &Tree) -> FlatTree {
        let n = t.nodes.len();
        let mut f = FlatTree {
            feature: alloc::vec![0; n],
            threshold: alloc::vec![f32::INFINITY; n],
            children: alloc::vec![[0, 0]; n],
            leaf: alloc::vec![0; n],
            depth: t.depth(),
        };
        for (i, node) in t.nodes.iter().enumerate() {
            match *node {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    f.feature[i] = feature;
                    f.threshold[i] = threshold;
                    f.children[i] = [left, right];
                }
                Node::Leaf { value } => {
                    f.children[i] = [i as u32; 2];
                    f.leaf[i] = value;
                }
            }
        }
        f
    }

    /// Leaf indices of `B` rows. Same routing as [`Tree::leaf`], including
    /// NaN going right.
    #[inline]
    pub(crate) fn leaves<const B: usize>(&self, rows: &[&[f32]; B]) -> [usize; B] {
        let mut at = [0u32; B];
        for _ in 0..self.depth {
            for (a, row) in at.iter_mut().zip(rows) {
                let i = *a as usize;
                let x = row[self.feature[i] as usize];
                *a = self.children[i][!(x < self.threshold[i]) as usize];
            }
        }
        at.map(|a| self.leaf[a as usize] as usize)
    }
}

/// Threshold strictly above `lo` and at most `hi`, so that `lo` goes left
/// and `hi` goes right.
#[inline]
pub(crate) fn split_threshold(lo: f32, hi: f32) -> f32 {
    let mid = ((lo as f64 + hi as f64) * 0.5) as f32;
    if mid > lo {
        mid
    } else {
        hi
    }
}
