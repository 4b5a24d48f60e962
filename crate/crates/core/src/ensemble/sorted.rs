//! Column-sorted row orders shared by both tree learners.
//!
//! Every tree keeps, per column, the active row ids sorted by value. A node
//! owns the same range `lo..hi` in every column, so splitting a node is a
//! stable partition of that range in each column.

use alloc::vec::Vec;

use crate::features::FeatureMatrix;
use crate::par;

/// A row id with its value in one column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Entry {
    pub v: f32,
    pub r: u32,
}

/// Column-major copy of a feature matrix.
#[derive(Debug)]
pub(crate) struct Columns {
    pub values: Vec<Vec<f32>>,
    /// All rows of each column ordered by `(value, row)`.
    pub order: Vec<Vec<Entry>>,
}

impl Columns {
    pub fn new(m: &FeatureMatrix) -> Columns {
        let n = m.n_rows();
        let values: Vec<Vec<f32>> = par::map_range(m.n_cols(), |j| (0..n).map(|r| m.get(r, j)).collect());
        let order = par::map_range(m.n_cols(), |j| {
            let v = &values[j];
            let mut o: Vec<Entry> = (0..n as u32).map(|r| Entry { v: v[r as usize], r }).collect();
            o.sort_unstable_by(|a, b| a.v.total_cmp(&b.v).then(a.r.cmp(&b.r)));
            o
        });
        Columns { values, order }
    }

    pub fn n_cols(&self) -> usize {
        self.values.len()
    }

    /// Sorted orders restricted to rows with `keep[row]`.
    pub fn restrict(&self, keep: &[bool]) -> Vec<Vec<Entry>> {
        self.order
            .iter()
            .map(|o| o.iter().copied().filter(|e| keep[e.r as usize]).collect())
            .collect()
    }
}

/// Stable partition of `lo..hi` in every column by `go_left[row]`.
/// Returns the first index of the right part.
pub(crate) fn partition(orders: &mut [Vec<Entry>], lo: usize, hi: usize, go_left: &[bool], scratch: &mut Vec<Entry>) -> usize {
    let mut mid = lo;
    for col in orders.iter_mut() {
        let slice = &mut col[lo..hi];
        if scratch.len() < slice.len() {
            scratch.resize(slice.len(), Entry { v: 0.0, r: 0 });
        }
        // branch-free: write every entry to both sides, advance one cursor
        let (mut w, mut s) = (0, 0);
        for i in 0..slice.len() {
            let e = slice[i];
            let left = go_left[e.r as usize] as usize;
            slice[w] = e;
            scratch[s] = e;
            w += left;
            s += 1 - left;
        }
        slice[w..].copy_from_slice(&scratch[..s]);
        mid = lo + w;
    }
    mid
}
