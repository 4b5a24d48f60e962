//! Eigendecomposition of symmetric 3x3 matrices by cyclic Jacobi rotations.

use crate::error::{Error, Result};

pub type Mat3 = [[f64; 3]; 3];

/// Traces at or below this are treated as a degenerate (zero) tensor.
pub const DEGENERATE_TRACE: f64 = 1e-15;
const SYMMETRY_TOL: f64 = 1e-12;
/// Normalized eigenvalues below this are round-off and become exactly zero.
pub const EIGEN_FLOOR: f64 = 1e-12;
const MAX_SWEEPS: usize = 64;

/// Unit-sum normalized eigenvalues `values[0] >= values[1] >= values[2]`
/// and matching unit eigenvectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenDecomp3 {
    pub values: [f64; 3],
    pub vectors: [[f64; 3]; 3],
    pub degenerate: bool,
}

/// Raw eigenpairs of a symmetric matrix, eigenvalues descending.
pub fn symmetric_eigen(c: &Mat3) -> ([f64; 3], [[f64; 3]; 3]) {
    let mut a = *c;
    // columns of v are the eigenvectors
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for _ in 0..MAX_SWEEPS {
        let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        let diag = a[0][0] * a[0][0] + a[1][1] * a[1][1] + a[2][2] * a[2][2];
        if off == 0.0 || off <= diag * 1e-36 {
            break;
        }
        for &(p, q) in &[(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = a[p][q];
            if apq == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
            let t = {
                let t = 1.0 / (libm::fabs(theta) + libm::sqrt(theta * theta + 1.0));
                if theta < 0.0 {
                    -t
                } else {
                    t
                }
            };
            let cs = 1.0 / libm::sqrt(t * t + 1.0);
            let sn = t * cs;
            // A <- J^T A J
            for k in 0..3 {
                let akp = a[k][p];
                let akq = a[k][q];
                a[k][p] = cs * akp - sn * akq;
                a[k][q] = sn * akp + cs * akq;
            }
            for k in 0..3 {
                let apk = a[p][k];
                let aqk = a[q][k];
                a[p][k] = cs * apk - sn * aqk;
                a[q][k] = sn * apk + cs * aqk;
            }
            a[p][q] = 0.0;
            a[q][p] = 0.0;
            for row in v.iter_mut() {
                let vp = row[p];
                let vq = row[q];
                row[p] = cs * vp - sn * vq;
                row[q] = sn * vp + cs * vq;
            }
        }
    }
    let vals = [a[0][0], a[1][1], a[2][2]];
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| vals[j].total_cmp(&vals[i]).then(i.cmp(&j)));
    let mut values = [0.0; 3];
    let mut vectors = [[0.0; 3]; 3];
    for (slot, &i) in order.iter().enumerate() {
        values[slot] = vals[i];
        let e = [v[0][i], v[1][i], v[2][i]];
        let n = libm::sqrt(e[0] * e[0] + e[1] * e[1] + e[2] * e[2]);
        vectors[slot] = [e[0] / n, e[1] / n, e[2] / n];
    }
    (values, vectors)
}

/// Eigendecomposition with eigenvalues clamped at zero and normalized to
/// unit sum. Near-zero traces yield the degenerate flag, zero eigenvalues
/// and the canonical axes.
pub fn eig3(c: &Mat3) -> Result<EigenDecomp3> {
    let mut scale: f64 = 1.0;
    let mut deviation: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            scale = scale.max(libm::fabs(c[i][j]));
            deviation = deviation.max(libm::fabs(c[i][j] - c[j][i]));
        }
    }
    if deviation > SYMMETRY_TOL * scale || !c.iter().flatten().all(|x| x.is_finite()) {
        return Err(Error::AsymmetricMatrix { deviation });
    }
    let trace = c[0][0] + c[1][1] + c[2][2];
    if trace <= DEGENERATE_TRACE {
        return Ok(EigenDecomp3 {
            values: [0.0; 3],
            vectors: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            degenerate: true,
        });
    }
    let (raw, vectors) = symmetric_eigen(c);
    let mut values = [raw[0].max(0.0), raw[1].max(0.0), raw[2].max(0.0)];
    for _ in 0..2 {
        let sum = values[0] + values[1] + values[2];
        values = values.map(|l| if l / sum < EIGEN_FLOOR { 0.0 } else { l / sum });
    }
    Ok(EigenDecomp3 {
        values,
        vectors,
        degenerate: false,
    })
}
