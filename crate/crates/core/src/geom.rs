//! Covariance eigen-features of local neighborhoods.
//!
//! For a query point the `k` nearest neighbors on a pyramid level form the
//! neighborhood. Their covariance about the neighborhood medoid yields
//! unit-sum eigenvalues `l1 >= l2 >= l3` and eigenvectors `e1, e2, e3`,
//! from which fifteen shape, moment and height descriptors are derived.

use alloc::vec::Vec;

use crate::eigen::{eig3, Mat3};
use crate::error::{Error, Result};
use crate::pyramid::ScalePyramid;
use crate::spatial::KdTree;

/// Neighborhood size used for geometric features.
pub const DEFAULT_K: usize = 10;

pub const GEOM_FEATURE_COUNT: usize = 15;

/// Column names, in the order of [`GeomFeatures::to_array`].
pub const GEOM_FEATURE_NAMES: [&str; GEOM_FEATURE_COUNT] = [
    "omnivariance",
    "eigenentropy",
    "anisotropy",
    "planarity",
    "linearity",
    "surface_variation",
    "scatter",
    "verticality",
    "moment1_e1",
    "moment1_e2",
    "moment2_e1",
    "moment2_e2",
    "vertical_range",
    "height_below",
    "height_above",
];

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GeomFeatures {
    pub omnivariance: f64,
    pub eigenentropy: f64,
    pub anisotropy: f64,
    pub planarity: f64,
    pub linearity: f64,
    pub surface_variation: f64,
    pub scatter: f64,
    pub verticality: f64,
    pub moment1_e1: f64,
    pub moment1_e2: f64,
    pub moment2_e1: f64,
    pub moment2_e2: f64,
    pub vertical_range: f64,
    pub height_below: f64,
    pub height_above: f64,
}

impl GeomFeatures {
    pub fn to_array(&self) -> [f64; GEOM_FEATURE_COUNT] {
        [
            self.omnivariance,
            self.eigenentropy,
            self.anisotropy,
            self.planarity,
            self.linearity,
            self.surface_variation,
            self.scatter,
            self.verticality,
            self.moment1_e1,
            self.moment1_e2,
            self.moment2_e1,
            self.moment2_e2,
            self.vertical_range,
            self.height_below,
            self.height_above,
        ]
    }
}

/// Index of the medoid: the member minimizing the summed Euclidean
/// distance to all members. Ties go to the smaller index.
pub fn medoid(points: &[[f64; 3]]) -> Result<usize> {
    let n = points.len();
    if n == 0 {
        return Err(Error::EmptyNeighborhood);
    }
    if n <= 2 {
        return Ok(0);
    }
    let mut sums = [0.0f64; 64];
    let mut heap_sums;
    let sums: &mut [f64] = if n <= sums.len() {
        &mut sums[..n]
    } else {
        heap_sums = alloc::vec![0.0; n];
        &mut heap_sums
    };
    for i in 0..n {
        for j in i + 1..n {
            let d = libm::sqrt(crate::spatial::dist2(&points[i], &points[j]));
            sums[i] += d;
            sums[j] += d;
        }
    }
    let mut best = 0;
    for i in 1..n {
        if sums[i] < sums[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Covariance tensor `(1/k) sum (p - m)(p - m)^T` about the medoid `m`,
/// returned with the medoid's index in `points`.
pub fn covariance_tensor(points: &[[f64; 3]]) -> Result<(Mat3, usize)> {
    let m = medoid(points)?;
    let c = points[m];
    let mut cov = [[0.0; 3]; 3];
    for p in points {
        let d = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
        for i in 0..3 {
            for j in i..3 {
                cov[i][j] += d[i] * d[j];
            }
        }
    }
    let k = points.len() as f64;
    for i in 0..3 {
        for j in i..3 {
            cov[i][j] /= k;
            cov[j][i] = cov[i][j];
        }
    }
    Ok((cov, m))
}

fn entropy_term(l: f64) -> f64 {
    if l > 0.0 {
        -l * libm::log(l)
    } else {
        0.0
    }
}

/// The fifteen descriptors of one neighborhood, with `query_z` as the
/// reference height.
pub fn features_from_neighborhood(query_z: f64, points: &[[f64; 3]]) -> Result<GeomFeatures> {
    let (cov, m) = covariance_tensor(points)?;
    let mut z_min = f64::INFINITY;
    let mut z_max = f64::NEG_INFINITY;
    for p in points {
        z_min = z_min.min(p[2]);
        z_max = z_max.max(p[2]);
    }
    let mut f = GeomFeatures {
        vertical_range: z_max - z_min,
        height_below: query_z - z_min,
        height_above: z_max - query_z,
        ..GeomFeatures::default()
    };
    let eig = eig3(&cov)?;
    if eig.degenerate {
        return Ok(f);
    }
    let [l1, l2, l3] = eig.values;
    f.omnivariance = libm::cbrt(l1 * l2 * l3);
    f.eigenentropy = entropy_term(l1) + entropy_term(l2) + entropy_term(l3);
    f.anisotropy = (l1 - l3) / l1;
    f.planarity = (l2 - l3) / l1;
    f.linearity = (l1 - l2) / l1;
    f.surface_variation = l3;
    f.scatter = l3 / l1;
    f.verticality = (1.0 - libm::fabs(eig.vectors[2][2])).clamp(0.0, 1.0);

    let c = points[m];
    let [e1, e2, _] = eig.vectors;
    let (mut s1, mut s2, mut q1, mut q2) = (0.0, 0.0, 0.0, 0.0);
    for p in points {
        let d = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
        let a = d[0] * e1[0] + d[1] * e1[1] + d[2] * e1[2];
        let b = d[0] * e2[0] + d[1] * e2[1] + d[2] * e2[2];
        s1 += a;
        s2 += b;
        q1 += a * a;
        q2 += b * b;
    }
    // eigenvector signs are arbitrary
    f.moment1_e1 = libm::fabs(s1);
    f.moment1_e2 = libm::fabs(s2);
    f.moment2_e1 = q1;
    f.moment2_e2 = q2;
    Ok(f)
}

/// Features of `query` against the `k` nearest points of one level.
pub fn features_single_scale(query: [f64; 3], level: &KdTree, k: usize) -> Result<GeomFeatures> {
    let mut scratch = Scratch::default();
    features_with_scratch(query, level, k, &mut scratch)
}

/// Reusable buffers for repeated per-point feature evaluation.
#[derive(Debug, Default, Clone)]
pub struct Scratch {
    knn: Vec<(f64, u32)>,
    pts: Vec<[f64; 3]>,
}

pub fn features_with_scratch(
    query: [f64; 3],
    level: &KdTree,
    k: usize,
    scratch: &mut Scratch,
) -> Result<GeomFeatures> {
    if k == 0 {
        return Err(Error::InvalidParameter {
            name: "k",
            value: 0.0,
            expected: "at least one neighbor",
        });
    }
    level.knn_into(query, k, &mut scratch.knn);
    scratch.pts.clear();
    scratch
        .pts
        .extend(scratch.knn.iter().map(|&(_, id)| level.position(id as usize)));
    features_from_neighborhood(query[2], &scratch.pts)
}

/// Level-major concatenation of the features of `query` on every pyramid
/// level, written into `out` (length `15 * levels`).
pub fn features_multiscale_into(
    query: [f64; 3],
    pyramid: &ScalePyramid,
    k: usize,
    scratch: &mut Scratch,
    out: &mut [f64],
) -> Result<()> {
    let need = GEOM_FEATURE_COUNT * pyramid.len();
    if out.len() != need {
        return Err(Error::ShapeMismatch {
            what: "multiscale feature buffer",
            expected: need,
            found: out.len(),
        });
    }
    for (level, chunk) in pyramid.levels().iter().zip(out.chunks_mut(GEOM_FEATURE_COUNT)) {
        let f = features_with_scratch(query, &level.index, k, scratch)?;
        chunk.copy_from_slice(&f.to_array());
    }
    Ok(())
}

pub fn features_multiscale(query: [f64; 3], pyramid: &ScalePyramid, k: usize) -> Result<Vec<f64>> {
    let mut out = alloc::vec![0.0; GEOM_FEATURE_COUNT * pyramid.len()];
    features_multiscale_into(query, pyramid, k, &mut Scratch::default(), &mut out)?;
    Ok(out)
}
