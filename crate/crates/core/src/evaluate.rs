//! Train/test protocol helpers: the vertical split plane, class-balanced
//! sampling and confusion matrices.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::index;

use crate::class::Class;
use crate::cloud::PointCloud;
use crate::ensemble::stream_rng;
use crate::error::{Error, Result};
use crate::par;

pub const DEFAULT_ANGLES: usize = 36;
pub const DEFAULT_OFFSETS: usize = 200;

/// A vertical plane. A point is on the positive side iff
/// `x cos(theta) + y sin(theta) >= offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitPlane {
    pub theta: f64,
    pub offset: f64,
    cos: f64,
    sin: f64,
}

impl SplitPlane {
    pub fn new(theta: f64, offset: f64) -> SplitPlane {
        SplitPlane {
            theta,
            offset,
            cos: libm::cos(theta),
            sin: libm::sin(theta),
        }
    }

    #[inline]
    pub fn project(&self, p: [f64; 3]) -> f64 {
        p[0] * self.cos + p[1] * self.sin
    }

    #[inline]
    pub fn is_positive(&self, p: [f64; 3]) -> bool {
        self.project(p) >= self.offset
    }

    /// Normal vector; its z component is always zero.
    pub fn normal(&self) -> [f64; 3] {
        [self.cos, self.sin, 0.0]
    }
}

/// Every candidate plane of the search grid in evaluation order: angles
/// `k * pi / n_angles`, and per angle `n_offsets` offsets at the centers of
/// equal bins spanning the projected extent of the cloud.
pub fn candidate_planes(cloud: &PointCloud, n_angles: usize, n_offsets: usize) -> Result<Vec<SplitPlane>> {
    check_grid(n_angles, n_offsets)?;
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mut out = Vec::with_capacity(n_angles * n_offsets);
    for a in 0..n_angles {
        let probe = SplitPlane::new(a as f64 * PI / n_angles as f64, 0.0);
        let (lo, hi) = projected_extent(cloud, &probe);
        let step = (hi - lo) / n_offsets as f64;
        for j in 0..n_offsets {
            out.push(SplitPlane::new(probe.theta, lo + (j as f64 + 0.5) * step));
        }
    }
    Ok(out)
}

fn check_grid(n_angles: usize, n_offsets: usize) -> Result<()> {
    if n_angles == 0 || n_offsets == 0 {
        return Err(Error::InvalidParameter {
            name: "split grid size",
            value: 0.0,
            expected: "at least one angle and one offset",
        });
    }
    Ok(())
}

fn projected_extent(cloud: &PointCloud, plane: &SplitPlane) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in cloud.points() {
        let v = plane.project(p.pos);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitResult {
    pub plane: SplitPlane,
    /// Largest deviation from one half of any class's share on the
    /// positive side; in `[0, 1/2]`.
    pub objective: f64,
}

/// Objective from per-class totals and positive-side counts.
pub fn split_objective(totals: &[usize], positive: &[usize]) -> f64 {
    let mut worst: f64 = 0.0;
    for (&t, &p) in totals.iter().zip(positive) {
        if t > 0 {
            worst = worst.max(libm::fabs(p as f64 / t as f64 - 0.5));
        }
    }
    worst
}

/// Exhaustive search for the vertical plane whose sides hold the most
/// even share of every class. Ties go to the smaller angle, then the
/// smaller offset. Unlabeled points are ignored.
pub fn find_split_plane(cloud: &PointCloud, n_angles: usize, n_offsets: usize) -> Result<SplitResult> {
    if !cloud.has_labels() {
        return Err(Error::MissingLabels);
    }
    check_grid(n_angles, n_offsets)?;
    let labeled: Vec<([f64; 3], usize)> = cloud
        .points()
        .iter()
        .filter_map(|p| p.label.map(|l| (p.pos, l.index())))
        .collect();
    if labeled.is_empty() {
        return Err(Error::MissingLabels);
    }
    let planes = candidate_planes(cloud, n_angles, n_offsets)?;
    let mut totals = [0usize; Class::COUNT];
    for &(_, c) in &labeled {
        totals[c] += 1;
    }
    // per angle: sort projections once, then sweep offsets ascending
    let per_angle = par::map_range(n_angles, |a| {
        let row = &planes[a * n_offsets..(a + 1) * n_offsets];
        let mut proj: Vec<(f64, usize)> = labeled.iter().map(|&(p, c)| (row[0].project(p), c)).collect();
        proj.sort_unstable_by(|x, y| x.0.total_cmp(&y.0));
        let mut negative = [0usize; Class::COUNT];
        let mut cursor = 0;
        let mut best = (f64::INFINITY, 0usize);
        for (j, plane) in row.iter().enumerate() {
            while cursor < proj.len() && proj[cursor].0 < plane.offset {
                negative[proj[cursor].1] += 1;
                cursor += 1;
            }
            let mut positive = [0usize; Class::COUNT];
            for c in 0..Class::COUNT {
                positive[c] = totals[c] - negative[c];
            }
            let obj = split_objective(&totals, &positive);
            if obj < best.0 {
                best = (obj, j);
            }
        }
        best
    });
    let mut best: Option<SplitResult> = None;
    for (a, &(obj, j)) in per_angle.iter().enumerate() {
        if best.is_none_or(|b| obj < b.objective) {
            best = Some(SplitResult {
                plane: planes[a * n_offsets + j],
                objective: obj,
            });
        }
    }
    Ok(best.unwrap())
}

/// Row indices of the two sides of `plane` (positive first).
pub fn split_indices(cloud: &PointCloud, plane: &SplitPlane) -> (Vec<usize>, Vec<usize>) {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (i, p) in cloud.points().iter().enumerate() {
        if plane.is_positive(p.pos) {
            pos.push(i);
        } else {
            neg.push(i);
        }
    }
    (pos, neg)
}

/// Class-balanced random subset of a labeled cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct BalancedSample {
    /// Chosen point indices, grouped by class, ascending within a class.
    pub indices: Vec<usize>,
    /// Classes present with fewer than the requested count, with the
    /// number available.
    pub short: Vec<(Class, usize)>,
}

pub const DEFAULT_PER_CLASS: usize = 10_000;

/// Draws `min(per_class, available)` points of every present class
/// uniformly without replacement. Deterministic per seed.
pub fn balanced_sample(cloud: &PointCloud, per_class: usize, seed: u64) -> Result<BalancedSample> {
    if !cloud.has_labels() {
        return Err(Error::MissingLabels);
    }
    let mut by_class: [Vec<usize>; Class::COUNT] = Default::default();
    for (i, p) in cloud.points().iter().enumerate() {
        if let Some(c) = p.label {
            by_class[c.index()].push(i);
        }
    }
    let mut indices = Vec::new();
    let mut short = Vec::new();
    for (c, members) in by_class.iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < per_class {
            short.push((Class::ALL[c], members.len()));
        }
        let take = per_class.min(members.len());
        let mut rng = stream_rng(seed, 10, c as u64);
        let mut picked: Vec<usize> = index::sample(&mut rng, members.len(), take)
            .into_iter()
            .map(|i| members[i])
            .collect();
        picked.sort_unstable();
        indices.extend(picked);
    }
    Ok(BalancedSample { indices, short })
}

/// Counts of (true, predicted) class pairs; true class by row.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub counts: [[u64; Class::COUNT]; Class::COUNT],
}

impl ConfusionMatrix {
    pub fn from_pairs<I: IntoIterator<Item = (Class, Class)>>(pairs: I) -> Self {
        let mut m = ConfusionMatrix::default();
        for (t, p) in pairs {
            m.counts[t.index()][p.index()] += 1;
        }
        m
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..Class::COUNT).map(|i| self.counts[i][i]).sum()
    }

    /// Misclassified share of all points.
    pub fn overall_error(&self) -> f64 {
        let t = self.total();
        if t == 0 {
            return 0.0;
        }
        (t - self.correct()) as f64 / t as f64
    }

    /// Cell count as a share of all test points.
    pub fn fraction(&self, truth: Class, predicted: Class) -> f64 {
        let t = self.total();
        if t == 0 {
            return 0.0;
        }
        self.counts[truth.index()][predicted.index()] as f64 / t as f64
    }

    /// Misclassified points of one true class as a share of all points.
    pub fn class_error(&self, truth: Class) -> f64 {
        let t = self.total();
        if t == 0 {
            return 0.0;
        }
        let row = &self.counts[truth.index()];
        let wrong: u64 = row.iter().sum::<u64>() - row[truth.index()];
        wrong as f64 / t as f64
    }
}
