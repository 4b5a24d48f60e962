//! Multi-scale voxel pyramid.
//!
//! Every level is a voxel-grid selection from the original cloud at voxel
//! size `s0 * factor^i`. Each occupied voxel keeps the single input point
//! closest to the centroid of the points it contains, so level points are
//! always real measured points.

use alloc::vec::Vec;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::par;
use crate::spatial::{dist2, KdTree};

/// Ground sampling distance assumed when none is supplied (meters/pixel).
pub const DEFAULT_GSD: f64 = 0.051;
pub const DEFAULT_LEVELS: usize = 9;
pub const DEFAULT_FACTOR: f64 = 2.0;
/// Base voxel size as a multiple of the ground sampling distance.
pub const GSD_MULTIPLIER: f64 = 4.0;

/// Base voxel size for a given ground sampling distance.
pub fn base_scale(gsd: f64) -> Result<f64> {
    if !(gsd > 0.0 && gsd.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "gsd",
            value: gsd,
            expected: "a positive ground sampling distance",
        });
    }
    Ok(GSD_MULTIPLIER * gsd)
}

fn check_voxel(voxel: f64) -> Result<()> {
    if voxel > 0.0 && voxel.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "voxel size",
            value: voxel,
            expected: "a positive finite length",
        })
    }
}

/// Ids of the representative points of a voxel downsampling, ascending.
///
/// The grid has cells `[i*voxel, (i+1)*voxel)` per axis. Since the cell of
/// the cloud's minimum lies on that same lattice, re-running on the output
/// reproduces the same cells and the operation is idempotent.
pub fn voxel_downsample_ids(positions: &[[f64; 3]], voxel: f64) -> Result<Vec<usize>> {
    check_voxel(voxel)?;
    let inv = 1.0 / voxel;
    let mut keyed: Vec<([i64; 3], u32)> = par::map_range(positions.len(), |i| {
        let p = &positions[i];
        (
            [
                libm::floor(p[0] * inv) as i64,
                libm::floor(p[1] * inv) as i64,
                libm::floor(p[2] * inv) as i64,
            ],
            i as u32,
        )
    });
    par::sort_unstable_by_key(&mut keyed, |&(k, i)| (k, i));

    let mut out = Vec::new();
    let mut start = 0;
    while start < keyed.len() {
        let key = keyed[start].0;
        let mut end = start + 1;
        while end < keyed.len() && keyed[end].0 == key {
            end += 1;
        }
        let group = &keyed[start..end];
        let mut c = [0.0; 3];
        for &(_, id) in group {
            let p = &positions[id as usize];
            c[0] += p[0];
            c[1] += p[1];
            c[2] += p[2];
        }
        let n = group.len() as f64;
        let c = [c[0] / n, c[1] / n, c[2] / n];
        // group is sorted by id, so strict < keeps the smallest id on ties
        let mut best = group[0].1;
        let mut best_d = dist2(&positions[best as usize], &c);
        for &(_, id) in &group[1..] {
            let d = dist2(&positions[id as usize], &c);
            if d < best_d {
                best = id;
                best_d = d;
            }
        }
        out.push(best as usize);
        start = end;
    }
    out.sort_unstable();
    Ok(out)
}

pub fn voxel_downsample(cloud: &PointCloud, voxel: f64) -> Result<PointCloud> {
    let ids = voxel_downsample_ids(&cloud.positions(), voxel)?;
    Ok(cloud.select(&ids))
}

/// One pyramid level: its voxel size, the original-cloud ids it selected
/// and a kd-tree over their positions (tree id `j` is `source_ids[j]`).
#[derive(Debug, Clone)]
pub struct Level {
    pub voxel: f64,
    pub source_ids: Vec<usize>,
    pub index: KdTree,
}

impl Level {
    pub fn len(&self) -> usize {
        self.source_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source_ids.is_empty()
    }

    /// Materializes the level as a cloud of original points.
    pub fn cloud(&self, original: &PointCloud) -> PointCloud {
        original.select(&self.source_ids)
    }
}

#[derive(Debug, Clone)]
pub struct ScalePyramid {
    levels: Vec<Level>,
}

impl ScalePyramid {
    pub fn build(positions: &[[f64; 3]], s0: f64, n_levels: usize, factor: f64) -> Result<Self> {
        check_voxel(s0)?;
        if n_levels == 0 {
            return Err(Error::InvalidParameter {
                name: "pyramid levels",
                value: 0.0,
                expected: "at least one level",
            });
        }
        if !(factor >= 1.0 && factor.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "downsampling factor",
                value: factor,
                expected: "a finite factor >= 1",
            });
        }
        if positions.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let mut levels = Vec::with_capacity(n_levels);
        let mut voxel = s0;
        for _ in 0..n_levels {
            let source_ids = voxel_downsample_ids(positions, voxel)?;
            let index = KdTree::build(source_ids.iter().map(|&i| positions[i]).collect())?;
            levels.push(Level {
                voxel,
                source_ids,
                index,
            });
            voxel *= factor;
        }
        Ok(ScalePyramid { levels })
    }

    pub fn from_cloud(cloud: &PointCloud, s0: f64, n_levels: usize) -> Result<Self> {
        Self::build(&cloud.positions(), s0, n_levels, DEFAULT_FACTOR)
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

#[cfg(test)]
mod tests {
    extern crate std;
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    #[test]
    fn base_scale_rule() {
        assert!((base_scale(0.051).unwrap() - 0.204).abs() < 1e-12);
        assert!((base_scale(0.023).unwrap() - 0.092).abs() < 1e-12);
        assert_eq!(base_scale(0.25).unwrap(), 1.0);
        assert!(base_scale(0.0).is_err());
        assert!(base_scale(-1.0).is_err());
    }

    #[test]
    fn one_voxel_collapses_to_one_point() {
        let pts = vec![[0.1, 0.1, 0.1], [0.9, 0.1, 0.1], [0.1, 0.9, 0.5], [0.5, 0.5, 0.5]];
        let ids = voxel_downsample_ids(&pts, 1.0).unwrap();
        // centroid (0.4, 0.4, 0.3); point 3 is closest
        assert_eq!(ids, vec![3]);
    }

    #[test]
    fn spaced_lattice_is_unchanged() {
        let mut pts = Vec::new();
        for x in 0..6 {
            for y in 0..6 {
                pts.push([x as f64, y as f64, 0.0]);
            }
        }
        let ids = voxel_downsample_ids(&pts, 1.0).unwrap();
        assert_eq!(ids, (0..pts.len()).collect::<Vec<_>>());
    }

    #[test]
    fn count_matches_occupancy_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<[f64; 3]> = (0..10_000)
            .map(|_| {
                [
                    rng.random_range(0.0..10.0),
                    rng.random_range(0.0..10.0),
                    rng.random_range(0.0..10.0),
                ]
            })
            .collect();
        let occupied: HashSet<(i64, i64, i64)> = pts
            .iter()
            .map(|p| (p[0].floor() as i64, p[1].floor() as i64, p[2].floor() as i64))
            .collect();
        let ids = voxel_downsample_ids(&pts, 1.0).unwrap();
        assert_eq!(ids.len(), occupied.len());
        let again: Vec<[f64; 3]> = ids.iter().map(|&i| pts[i]).collect();
        assert_eq!(voxel_downsample_ids(&again, 1.0).unwrap().len(), ids.len());
    }

    #[test]
    fn pyramid_levels() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<[f64; 3]> = (0..5000)
            .map(|_| [rng.random_range(0.0..60.0), rng.random_range(0.0..60.0), rng.random_range(0.0..3.0)])
            .collect();
        let s0 = base_scale(DEFAULT_GSD).unwrap();
        let p = ScalePyramid::build(&pts, s0, DEFAULT_LEVELS, DEFAULT_FACTOR).unwrap();
        assert_eq!(p.len(), 9);
        for (i, l) in p.levels().iter().enumerate() {
            assert!((l.voxel - s0 * (1u32 << i) as f64).abs() < 1e-12);
            assert!(!l.is_empty());
        }
        assert!((p.levels()[8].voxel - 52.224).abs() < 1e-9);
        for w in p.levels().windows(2) {
            assert!(w[1].len() <= w[0].len());
        }
        let single = ScalePyramid::build(&pts, s0, 1, 2.0).unwrap();
        assert_eq!(single.len(), 1);
        assert!(ScalePyramid::build(&pts, s0, 0, 2.0).is_err());
        assert!(ScalePyramid::build(&[], s0, 1, 2.0).is_err());
    }
}
