//! Exact kd-tree over 3D positions.
//!
//! The tree is built once and never mutated; queries only read it, so any
//! number of threads may query concurrently. Results are exact: `knn`
//! returns the same ids as a brute-force scan ordered by `(distance, id)`,
//! and `radius_search` returns every point in the closed ball.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Maximum number of points stored in one leaf.
pub const LEAF_CAPACITY: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: usize,
    pub dist: f64,
}

#[derive(Debug, Clone, Copy)]
enum Node {
    Leaf {
        start: u32,
        end: u32,
    },
    Split {
        axis: u8,
        value: f64,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone)]
pub struct KdTree {
    /// Positions in id order.
    points: Vec<[f64; 3]>,
    /// Leaf-ordered copy of `points`, paired with `order`.
    leaf_points: Vec<[f64; 3]>,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

#[inline]
pub(crate) fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

impl KdTree {
    pub fn build(points: Vec<[f64; 3]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if points.len() > u32::MAX as usize {
            return Err(Error::ShapeMismatch {
                what: "index size limit",
                expected: u32::MAX as usize,
                found: points.len(),
            });
        }
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * points.len() / LEAF_CAPACITY + 1);
        build_node(&points, &mut order, 0, &mut nodes);
        let leaf_points = order.iter().map(|&i| points[i as usize]).collect();
        Ok(KdTree {
            points,
            leaf_points,
            order,
            nodes,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn position(&self, id: usize) -> [f64; 3] {
        self.points[id]
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.points
    }

    /// Point ids of every leaf, in leaf order. Used for structural audits.
    pub fn leaves(&self) -> impl Iterator<Item = &[u32]> + '_ {
        self.nodes.iter().filter_map(move |n| match *n {
            Node::Leaf { start, end } => Some(&self.order[start as usize..end as usize]),
            Node::Split { .. } => None,
        })
    }

    /// The `min(k, N)` nearest points to `query`, ascending by distance,
    /// ties broken by smaller id.
    pub fn knn(&self, query: [f64; 3], k: usize) -> Vec<Neighbor> {
        let mut best = Vec::with_capacity(k.min(self.len()) + 1);
        self.knn_into(query, k, &mut best);
        best.into_iter()
            .map(|(d2, id)| Neighbor {
                id: id as usize,
                dist: libm::sqrt(d2),
            })
            .collect()
    }

    /// Like [`KdTree::knn`] but fills `best` with `(squared distance, id)`
    /// pairs, reusing its allocation.
    pub fn knn_into(&self, query: [f64; 3], k: usize, best: &mut Vec<(f64, u32)>) {
        best.clear();
        if k == 0 {
            return;
        }
        self.knn_node(0, &query, k, best);
    }

    fn knn_node(&self, node: usize, q: &[f64; 3], k: usize, best: &mut Vec<(f64, u32)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                let (s, e) = (start as usize, end as usize);
                for (p, &id) in self.leaf_points[s..e].iter().zip(&self.order[s..e]) {
                    let d2 = dist2(p, q);
                    if best.len() == k {
                        let &(wd, wid) = best.last().unwrap();
                        if d2 > wd || (d2 == wd && id > wid) {
                            continue;
                        }
                        best.pop();
                    }
                    let pos = best.partition_point(|&(bd, bid)| bd < d2 || (bd == d2 && bid < id));
                    best.insert(pos, (d2, id));
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis as usize] - value;
                let (near, far) = if diff < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.knn_node(near as usize, q, k, best);
                // equal distances must still be visited for the id tie rule
                if best.len() < k || diff * diff <= best.last().unwrap().0 {
                    self.knn_node(far as usize, q, k, best);
                }
            }
        }
    }

    /// Ids of all points within distance `r` (inclusive) of `query`, in
    /// traversal order.
    pub fn radius_search(&self, query: [f64; 3], r: f64) -> Result<Vec<usize>> {
        check_radius(r)?;
        let mut out = Vec::new();
        self.for_each_within(query, r * r, |id, _| out.push(id));
        Ok(out)
    }

    /// Calls `f(id, squared distance)` for every point with squared distance
    /// at most `r2`. Traversal order is deterministic.
    pub fn for_each_within<F: FnMut(usize, f64)>(&self, query: [f64; 3], r2: f64, mut f: F) {
        self.within_node(0, &query, r2, &mut f);
    }

    fn within_node<F: FnMut(usize, f64)>(&self, node: usize, q: &[f64; 3], r2: f64, f: &mut F) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                let (s, e) = (start as usize, end as usize);
                for (p, &id) in self.leaf_points[s..e].iter().zip(&self.order[s..e]) {
                    let d2 = dist2(p, q);
                    if d2 <= r2 {
                        f(id as usize, d2);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis as usize] - value;
                let (near, far) = if diff < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.within_node(near as usize, q, r2, f);
                if diff * diff <= r2 {
                    self.within_node(far as usize, q, r2, f);
                }
            }
        }
    }
}

pub(crate) fn check_radius(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "radius",
            value: r,
            expected: "a positive finite distance",
        })
    }
}

fn build_node(points: &[[f64; 3]], ids: &mut [u32], offset: usize, nodes: &mut Vec<Node>) -> u32 {
    let me = nodes.len();
    if ids.len() <= LEAF_CAPACITY {
        nodes.push(Node::Leaf {
            start: offset as u32,
            end: (offset + ids.len()) as u32,
        });
        return me as u32;
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in ids.iter() {
        let p = &points[i as usize];
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let mut axis = 0;
    for a in 1..3 {
        if hi[a] - lo[a] > hi[axis] - lo[axis] {
            axis = a;
        }
    }
    let mid = ids.len() / 2;
    ids.select_nth_unstable_by(mid, |&a, &b| {
        points[a as usize][axis]
            .total_cmp(&points[b as usize][axis])
            .then(a.cmp(&b))
    });
    let value = points[ids[mid] as usize][axis];
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let (l, r) = ids.split_at_mut(mid);
    let left = build_node(points, l, offset, nodes);
    let right = build_node(points, r, offset + mid, nodes);
    nodes[me] = Node::Split {
        axis: axis as u8,
        value,
        left,
        right,
    };
    me as u32
}

fn spread_bits(v: u64) -> u64 {
    // 21 bits -> every third bit of 63
    let mut x = v & 0x1f_ffff;
    x = (x | x << 32) & 0x1f00000000ffff;
    x = (x | x << 16) & 0x1f0000ff0000ff;
    x = (x | x << 8) & 0x100f00f00f00f00f;
    x = (x | x << 4) & 0x10c30c30c30c30c3;
    (x | x << 2) & 0x1249249249249249
}

/// Point ids sorted along a Z-order curve over the bounding box, ties by id.
/// Visiting queries in this order keeps consecutive searches in the same
/// part of the tree.
pub fn morton_order(points: &[[f64; 3]]) -> Vec<usize> {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let span = (0..3).map(|a| hi[a] - lo[a]).fold(0.0f64, f64::max);
    let scale = if span > 0.0 { ((1u64 << 21) - 1) as f64 / span } else { 0.0 };
    let mut keyed: Vec<(u64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let c = [0, 1, 2].map(|a| spread_bits(((p[a] - lo[a]) * scale) as u64));
            (c[0] | c[1] << 1 | c[2] << 2, i)
        })
        .collect();
    keyed.sort_unstable();
    keyed.into_iter().map(|(_, i)| i).collect()
}

#[cfg(test)]
mod tests {
    extern crate std;
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn random_points(n: usize, seed: u64) -> Vec<[f64; 3]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                [
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-1.0..1.0),
                ]
            })
            .collect()
    }

    fn brute_knn(pts: &[[f64; 3]], q: [f64; 3], k: usize) -> Vec<usize> {
        let mut all: Vec<(f64, usize)> = pts.iter().enumerate().map(|(i, p)| (dist2(p, &q), i)).collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.into_iter().take(k).map(|(_, i)| i).collect()
    }

    #[test]
    fn morton_order_is_a_permutation() {
        let pts = random_points(500, 9);
        let mut ids = morton_order(&pts);
        assert_eq!(ids, morton_order(&pts));
        ids.sort_unstable();
        assert_eq!(ids, (0..500).collect::<Vec<_>>());
        assert_eq!(morton_order(&[[1.0; 3]; 3]), vec![0, 1, 2]);
        assert_eq!(spread_bits(0b111), 0b1001001);
    }

    #[test]
    fn empty_cloud_is_rejected() {
        assert_eq!(KdTree::build(vec![]).unwrap_err(), Error::EmptyCloud);
    }

    #[test]
    fn single_point() {
        let t = KdTree::build(vec![[1.0, 2.0, 3.0]]).unwrap();
        let n = t.knn([100.0, 0.0, 0.0], 5);
        assert_eq!(n.len(), 1);
        assert_eq!(n[0].id, 0);
        assert_eq!(t.radius_search([1.0, 2.0, 3.0], 1e-9).unwrap(), vec![0]);
    }

    #[test]
    fn lattice_knn_and_saturation() {
        let pts: Vec<[f64; 3]> = (0..10).map(|i| [i as f64, 0.0, 0.0]).collect();
        let t = KdTree::build(pts).unwrap();
        let ids: Vec<usize> = t.knn([0.0, 0.0, 0.0], 3).iter().map(|n| n.id).collect();
        assert_eq!(ids, vec![0, 1, 2]);
        assert_eq!(t.knn([4.5, 0.0, 0.0], 50).len(), 10);
        // 4 and 5 are tied at 0.5; smaller id first
        let ids: Vec<usize> = t.knn([4.5, 0.0, 0.0], 2).iter().map(|n| n.id).collect();
        assert_eq!(ids, vec![4, 5]);
    }

    #[test]
    fn ties_prefer_smaller_ids_across_leaves() {
        // 40 coincident points spread over several leaves
        let pts = vec![[1.0, 1.0, 1.0]; 40];
        let t = KdTree::build(pts).unwrap();
        let ids: Vec<usize> = t.knn([1.0, 1.0, 1.0], 5).iter().map(|n| n.id).collect();
        assert_eq!(ids, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn radius_on_unit_lattice_is_closed_ball() {
        let mut pts = Vec::new();
        for x in 0..5 {
            for y in 0..5 {
                for z in 0..5 {
                    pts.push([x as f64, y as f64, z as f64]);
                }
            }
        }
        let t = KdTree::build(pts.clone()).unwrap();
        let hits = t.radius_search([2.0, 2.0, 2.0], 1.0).unwrap();
        assert_eq!(hits.len(), 7);
        let tiny = t.radius_search([2.0, 2.0, 2.0], 0.5).unwrap();
        assert_eq!(tiny.len(), 1);
        assert_eq!(pts[tiny[0]], [2.0, 2.0, 2.0]);
        assert!(t.radius_search([0.0; 3], 0.0).is_err());
    }

    #[test]
    fn leaves_partition_ids_within_capacity() {
        let t = KdTree::build(random_points(100_000, 3)).unwrap();
        let mut seen = vec![0u8; t.len()];
        for leaf in t.leaves() {
            assert!(!leaf.is_empty() && leaf.len() <= LEAF_CAPACITY);
            for &id in leaf {
                seen[id as usize] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn matches_brute_force() {
        let pts = random_points(1000, 11);
        let t = KdTree::build(pts.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let q = [
                rng.random_range(-6.0..6.0),
                rng.random_range(-6.0..6.0),
                rng.random_range(-2.0..2.0),
            ];
            let got: Vec<usize> = t.knn(q, 10).iter().map(|n| n.id).collect();
            assert_eq!(got, brute_knn(&pts, q, 10));
            let r = rng.random_range(0.1..2.0);
            let got: BTreeSet<usize> = t.radius_search(q, r).unwrap().into_iter().collect();
            let want: BTreeSet<usize> = (0..pts.len()).filter(|&i| dist2(&pts[i], &q) <= r * r).collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn build_is_deterministic() {
        let pts = random_points(5000, 5);
        let a = KdTree::build(pts.clone()).unwrap();
        let b = KdTree::build(pts).unwrap();
        assert_eq!(a.order, b.order);
    }
}
