use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use terraclass_core::color::{color_feature_block_into, neighborhood_color_features, rgb_to_hsv, Hsv};
use terraclass_core::eigen::{eig3, symmetric_eigen, Mat3};
use terraclass_core::geom::{covariance_tensor, features_from_neighborhood, medoid, GeomFeatures};
use terraclass_core::pyramid::{voxel_downsample_ids, ScalePyramid};
use terraclass_core::spatial::KdTree;

fn cloud(n: usize, seed: u64, extent: f64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            [
                rng.random_range(-extent..extent),
                rng.random_range(-extent..extent),
                rng.random_range(-extent..extent),
            ]
        })
        .collect()
}

fn neighborhood() -> impl Strategy<Value = Vec<[f64; 3]>> {
    (3usize..40, any::<u64>(), 0.01f64..10.0, 0.0f64..1.0, 0.0f64..1.0).prop_map(|(n, seed, s, ay, az)| {
        // anisotropic boxes cover linear, planar and volumetric shapes
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                [
                    rng.random_range(-s..s),
                    rng.random_range(-s..s) * ay,
                    rng.random_range(-s..s) * az,
                ]
            })
            .collect()
    })
}

fn rotate_z(p: [f64; 3], a: f64, t: [f64; 3]) -> [f64; 3] {
    let (s, c) = a.sin_cos();
    [c * p[0] - s * p[1] + t[0], s * p[0] + c * p[1] + t[1], p[2] + t[2]]
}

fn lambda_features(f: &GeomFeatures) -> [f64; 8] {
    [
        f.omnivariance,
        f.eigenentropy,
        f.anisotropy,
        f.planarity,
        f.linearity,
        f.surface_variation,
        f.scatter,
        f.verticality,
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn eigen_feature_identities(pts in neighborhood()) {
        let f = features_from_neighborhood(pts[0][2], &pts).unwrap();
        for v in f.to_array() {
            prop_assert!(v.is_finite());
        }
        if f.anisotropy != 0.0 || f.linearity != 0.0 {
            prop_assert!((f.linearity + f.planarity + f.scatter - 1.0).abs() <= 1e-9);
            prop_assert!((f.anisotropy - (1.0 - f.scatter)).abs() <= 1e-9);
        }
        prop_assert!(f.eigenentropy >= 0.0 && f.eigenentropy <= 3f64.ln() + 1e-12);
        prop_assert!((0.0..=1.0).contains(&f.verticality));
        prop_assert!(f.height_below >= 0.0 && f.height_above >= 0.0);
        prop_assert!((f.height_below + f.height_above - f.vertical_range).abs() <= 1e-12 * (1.0 + f.vertical_range));
    }

    #[test]
    fn rigid_z_motion_keeps_shape_features(pts in neighborhood(), a in 0.0f64..6.3, t in prop::array::uniform3(-1e3f64..1e3)) {
        let moved: Vec<[f64; 3]> = pts.iter().map(|&p| rotate_z(p, a, t)).collect();
        let f = features_from_neighborhood(pts[0][2], &pts).unwrap();
        let g = features_from_neighborhood(moved[0][2], &moved).unwrap();
        for (x, y) in lambda_features(&f).iter().zip(lambda_features(&g)) {
            prop_assert!((x - y).abs() <= 1e-8, "{x} vs {y}");
        }
        let scale = 1.0 + f.vertical_range;
        prop_assert!((f.vertical_range - g.vertical_range).abs() <= 1e-9 * scale);
        prop_assert!((f.height_below - g.height_below).abs() <= 1e-9 * scale);
    }

    #[test]
    fn uniform_scaling_scales_heights(pts in neighborhood(), s in 0.1f64..100.0) {
        let scaled: Vec<[f64; 3]> = pts.iter().map(|p| [p[0] * s, p[1] * s, p[2] * s]).collect();
        let f = features_from_neighborhood(pts[1][2], &pts).unwrap();
        let g = features_from_neighborhood(scaled[1][2], &scaled).unwrap();
        let tol = 1e-9 * s * (1.0 + f.vertical_range);
        prop_assert!((g.vertical_range - s * f.vertical_range).abs() <= tol);
        prop_assert!((g.height_below - s * f.height_below).abs() <= tol);
        prop_assert!((g.height_above - s * f.height_above).abs() <= tol);
        for (x, y) in lambda_features(&f).iter().zip(lambda_features(&g)) {
            prop_assert!((x - y).abs() <= 1e-8);
        }
    }

    #[test]
    fn knn_ignores_input_order(seed in any::<u64>(), k in 1usize..30) {
        let pts = cloud(300, seed, 5.0);
        let mut perm: Vec<usize> = (0..pts.len()).collect();
        perm.reverse();
        perm.rotate_left((seed % 300) as usize);
        let shuffled: Vec<[f64; 3]> = perm.iter().map(|&i| pts[i]).collect();
        let a = KdTree::build(pts.clone()).unwrap();
        let b = KdTree::build(shuffled).unwrap();
        let q = cloud(1, seed ^ 1, 6.0)[0];
        let mut ia: Vec<usize> = a.knn(q, k).iter().map(|n| n.id).collect();
        let mut ib: Vec<usize> = b.knn(q, k).iter().map(|n| perm[n.id]).collect();
        ia.sort_unstable();
        ib.sort_unstable();
        prop_assert_eq!(ia, ib);
    }

    #[test]
    fn voxel_downsampling_is_idempotent(seed in any::<u64>(), voxel in 0.05f64..3.0) {
        let pts = cloud(500, seed, 4.0);
        let ids = voxel_downsample_ids(&pts, voxel).unwrap();
        let kept: Vec<[f64; 3]> = ids.iter().map(|&i| pts[i]).collect();
        let again = voxel_downsample_ids(&kept, voxel).unwrap();
        prop_assert_eq!(again, (0..kept.len()).collect::<Vec<_>>());
    }
}

#[test]
fn degenerate_neighborhoods_stay_finite() {
    let base = [12.5, -3.0, 101.25];
    let mut cases: Vec<Vec<[f64; 3]>> = vec![
        vec![base; 10],
        vec![base],
        vec![base, [base[0] + 1e-12, base[1], base[2]]],
        (0..10).map(|i| [base[0] + i as f64, base[1] + 2.0 * i as f64, base[2]]).collect(),
        (0..10).map(|i| [base[0], base[1], base[2] + i as f64 * 0.1]).collect(),
        (0..10).map(|i| [base[0] + (i % 3) as f64, base[1] + (i / 3) as f64, base[2]]).collect(),
        (0..10).map(|i| [base[0] + (i % 3) as f64, base[1], base[2] + (i / 3) as f64]).collect(),
        (0..10).map(|i| [1e6 + i as f64 * 1e-9, 1e6, 1e3]).collect(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let n = rng.random_range(1..12);
        let p = [rng.random_range(-1e4..1e4), rng.random_range(-1e4..1e4), rng.random_range(-1e4..1e4)];
        let d = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        cases.push((0..n).map(|i| [p[0] + d[0] * i as f64, p[1] + d[1] * i as f64, p[2] + d[2] * i as f64]).collect());
    }
    for pts in &cases {
        let f = features_from_neighborhood(pts[0][2], pts).unwrap();
        assert!(f.to_array().iter().all(|v| v.is_finite()), "{pts:?} -> {f:?}");
        assert!(f.eigenentropy <= 3f64.ln() + 1e-12);
    }
    let coincident = features_from_neighborhood(base[2], &cases[0]).unwrap();
    assert_eq!(coincident, GeomFeatures::default());
}

#[test]
fn collinear_and_coplanar_shapes() {
    let line: Vec<[f64; 3]> = (0..9).map(|i| [i as f64, 0.5 * i as f64, 0.0]).collect();
    let f = features_from_neighborhood(0.0, &line).unwrap();
    assert!((f.linearity - 1.0).abs() < 1e-12);
    assert!(f.planarity.abs() < 1e-12 && f.scatter.abs() < 1e-12);
    let plane: Vec<[f64; 3]> = (0..25).map(|i| [(i % 5) as f64, (i / 5) as f64, 0.0]).collect();
    let f = features_from_neighborhood(0.0, &plane).unwrap();
    assert!((f.planarity - 1.0).abs() < 1e-12);
    assert!(f.verticality < 1e-12);
    let wall: Vec<[f64; 3]> = (0..25).map(|i| [(i % 5) as f64, 0.0, (i / 5) as f64]).collect();
    let f = features_from_neighborhood(0.0, &wall).unwrap();
    assert!((f.verticality - 1.0).abs() < 1e-12);
}

// ---- oracles ------------------------------------------------------------

fn medoid_oracle(pts: &[[f64; 3]]) -> usize {
    let cost = |i: usize| -> f64 {
        pts.iter()
            .map(|q| ((pts[i][0] - q[0]).powi(2) + (pts[i][1] - q[1]).powi(2) + (pts[i][2] - q[2]).powi(2)).sqrt())
            .sum()
    };
    (0..pts.len()).fold(0, |b, i| if cost(i) < cost(b) - 1e-12 * cost(b) { i } else { b })
}

#[test]
fn covariance_matches_direct_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..500 {
        let n = rng.random_range(3..30);
        let pts = cloud(n, trial, rng.random_range(0.1..20.0));
        let (cov, m) = covariance_tensor(&pts).unwrap();
        let mo = medoid_oracle(&pts);
        assert_eq!(m, mo);
        assert_eq!(medoid(&pts).unwrap(), mo);
        let c = pts[mo];
        for i in 0..3 {
            for j in 0..3 {
                let direct: f64 = pts.iter().map(|p| (p[i] - c[i]) * (p[j] - c[j])).sum::<f64>() / n as f64;
                let scale = 1.0 + direct.abs();
                assert!((cov[i][j] - direct).abs() <= 1e-12 * scale, "{i}{j}: {} vs {direct}", cov[i][j]);
            }
        }
    }
}

/// Eigenvalues of a symmetric 3x3 matrix from the trigonometric solution of
/// its characteristic cubic, descending.
fn cubic_eigenvalues(a: &Mat3) -> [f64; 3] {
    let p1 = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
    let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
    let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    if p == 0.0 {
        return [q; 3];
    }
    let mut b = *a;
    for (i, row) in b.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (a[i][j] - if i == j { q } else { 0.0 }) / p;
        }
    }
    let det = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1]) - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
        + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    let r = (det / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let l1 = q + 2.0 * p * phi.cos();
    let l3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    [l1, 3.0 * q - l1 - l3, l3]
}

#[test]
fn eigen_matches_cubic_roots_and_residual() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..2000 {
        let pts = cloud(rng.random_range(3..25), trial, rng.random_range(0.01..50.0));
        let (c, _) = covariance_tensor(&pts).unwrap();
        let (vals, vecs) = symmetric_eigen(&c);
        let oracle = cubic_eigenvalues(&c);
        let norm = vals[0].abs().max(1e-300);
        for (v, o) in vals.iter().zip(oracle) {
            assert!((v - o).abs() <= 1e-8 * norm, "{vals:?} vs {oracle:?}");
        }
        for (l, v) in vals.iter().zip(vecs) {
            let cv = [
                c[0][0] * v[0] + c[0][1] * v[1] + c[0][2] * v[2],
                c[1][0] * v[0] + c[1][1] * v[1] + c[1][2] * v[2],
                c[2][0] * v[0] + c[2][1] * v[1] + c[2][2] * v[2],
            ];
            let res = ((cv[0] - l * v[0]).powi(2) + (cv[1] - l * v[1]).powi(2) + (cv[2] - l * v[2]).powi(2)).sqrt();
            assert!(res <= 1e-8 * norm);
            assert!(((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt() - 1.0).abs() < 1e-12);
        }
        let e = eig3(&c).unwrap();
        assert!((e.values.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(e.values[0] >= e.values[1] && e.values[1] >= e.values[2] && e.values[2] >= 0.0);
    }
}

#[test]
fn asymmetric_matrix_is_rejected() {
    let c = [[1.0, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    assert!(eig3(&c).is_err());
}

fn brute_knn(pts: &[[f64; 3]], q: [f64; 3], k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = pts
        .iter()
        .enumerate()
        .map(|(i, p)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2), i))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.into_iter().take(k).map(|x| x.1).collect()
}

fn brute_radius(pts: &[[f64; 3]], q: [f64; 3], r: f64) -> Vec<usize> {
    (0..pts.len())
        .filter(|&i| (pts[i][0] - q[0]).powi(2) + (pts[i][1] - q[1]).powi(2) + (pts[i][2] - q[2]).powi(2) <= r * r)
        .collect()
}

#[test]
fn spatial_queries_match_brute_force_with_duplicates() {
    // a coarse grid produces many exact distance ties
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let pts: Vec<[f64; 3]> = (0..1000)
        .map(|_| {
            [
                rng.random_range(0..10) as f64 * 0.5,
                rng.random_range(0..10) as f64 * 0.5,
                rng.random_range(0..4) as f64 * 0.5,
            ]
        })
        .collect();
    let tree = KdTree::build(pts.clone()).unwrap();
    for _ in 0..100 {
        let q = [
            rng.random_range(0..10) as f64 * 0.5,
            rng.random_range(0..10) as f64 * 0.5,
            rng.random_range(0..4) as f64 * 0.5,
        ];
        let k = rng.random_range(1..60);
        let got: Vec<usize> = tree.knn(q, k).iter().map(|n| n.id).collect();
        assert_eq!(got, brute_knn(&pts, q, k));
        let r = rng.random_range(1..5) as f64 * 0.5;
        let mut got = tree.radius_search(q, r).unwrap();
        got.sort_unstable();
        assert_eq!(got, brute_radius(&pts, q, r));
    }
}

#[test]
fn neighborhood_color_matches_brute_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let pts = cloud(2000, 23, 3.0);
    let hsv: Vec<Hsv> = (0..pts.len())
        .map(|_| rgb_to_hsv([rng.random(), rng.random(), rng.random()]).unwrap())
        .collect();
    let tree = KdTree::build(pts.clone()).unwrap();
    let radii = [0.4, 0.6, 0.9];
    let mut block = [0.0; 12];
    for q in 0..200 {
        let query = pts[q];
        color_feature_block_into(query, hsv[q], &tree, &hsv, &radii, &mut block).unwrap();
        assert_eq!(&block[..3], &hsv[q].to_array());
        for (j, &r) in radii.iter().enumerate() {
            let ids = brute_radius(&pts, query, r);
            let n = ids.len() as f64;
            let mean = [
                ids.iter().map(|&i| hsv[i].h).sum::<f64>() / n,
                ids.iter().map(|&i| hsv[i].s).sum::<f64>() / n,
                ids.iter().map(|&i| hsv[i].v).sum::<f64>() / n,
            ];
            let single = neighborhood_color_features(query, &tree, &hsv, r).unwrap();
            for c in 0..3 {
                assert!((block[3 + 3 * j + c] - mean[c]).abs() <= 1e-9);
                assert!((single[c] - mean[c]).abs() <= 1e-9);
            }
        }
    }
}

#[test]
fn hsv_reference_colors() {
    let cases = [
        ([1.0, 0.0, 0.0], [0.0, 1.0, 1.0]),
        ([0.0, 1.0, 0.0], [1.0 / 3.0, 1.0, 1.0]),
        ([0.0, 0.0, 1.0], [2.0 / 3.0, 1.0, 1.0]),
        ([1.0, 1.0, 0.0], [1.0 / 6.0, 1.0, 1.0]),
        ([1.0, 0.0, 1.0], [5.0 / 6.0, 1.0, 1.0]),
        ([0.5, 0.5, 0.5], [0.0, 0.0, 0.5]),
        ([0.0, 0.0, 0.0], [0.0, 0.0, 0.0]),
        ([0.5, 0.25, 0.0], [1.0 / 12.0, 1.0, 0.5]),
    ];
    for (rgb, want) in cases {
        let h = rgb_to_hsv(rgb).unwrap().to_array();
        for c in 0..3 {
            assert!((h[c] - want[c]).abs() < 1e-12, "{rgb:?} -> {h:?}");
        }
    }
    assert!(rgb_to_hsv([1.2, 0.0, 0.0]).is_err());
}

#[test]
fn pyramid_levels_shrink_and_nest_in_lattice() {
    let pts = cloud(20_000, 31, 10.0);
    let p = ScalePyramid::build(&pts, 0.2, 6, 2.0).unwrap();
    let sizes: Vec<usize> = p.levels().iter().map(|l| l.len()).collect();
    assert!(sizes.windows(2).all(|w| w[1] <= w[0]), "{sizes:?}");
    for l in p.levels() {
        let mut cells: Vec<[i64; 3]> = l
            .source_ids
            .iter()
            .map(|&i| [0, 1, 2].map(|a| (pts[i][a] / l.voxel).floor() as i64))
            .collect();
        let n = cells.len();
        cells.sort_unstable();
        cells.dedup();
        assert_eq!(cells.len(), n, "one representative per voxel");
    }
}
