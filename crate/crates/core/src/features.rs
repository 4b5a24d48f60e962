//! Feature sets, the dense feature matrix, and per-point feature extraction.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::cloud::PointCloud;
use crate::color::{self, rgb_to_hsv, Hsv};
use crate::error::{Error, Result};
use crate::geom::{self, GEOM_FEATURE_COUNT, GEOM_FEATURE_NAMES};
use crate::par;
use crate::pyramid::{self, ScalePyramid};
use crate::spatial::KdTree;

/// Which feature groups make up a row.
///
/// `geometric` adds the fifteen eigen-features per pyramid level,
/// `point_color` the point's own HSV, and every radius a neighborhood mean
/// HSV triple. Neighborhood colors imply point color.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub geometric: bool,
    pub point_color: bool,
    pub radii: Vec<f64>,
}

impl FeatureSet {
    /// `G`
    pub fn geometric() -> Self {
        FeatureSet {
            geometric: true,
            point_color: false,
            radii: Vec::new(),
        }
    }

    /// `Cp`
    pub fn point_color() -> Self {
        FeatureSet {
            geometric: false,
            point_color: true,
            radii: Vec::new(),
        }
    }

    /// `CN(r)`: point color plus the mean color within `r`.
    pub fn neighborhood(r: f64) -> Self {
        FeatureSet {
            geometric: false,
            point_color: true,
            radii: alloc::vec![r],
        }
    }

    /// Geometric, point color and neighborhood color at every default radius.
    pub fn all() -> Self {
        FeatureSet {
            geometric: true,
            point_color: true,
            radii: color::DEFAULT_RADII.to_vec(),
        }
    }

    pub fn union(&self, other: &FeatureSet) -> FeatureSet {
        let mut radii = self.radii.clone();
        radii.extend_from_slice(&other.radii);
        radii.sort_by(f64::total_cmp);
        radii.dedup();
        FeatureSet {
            geometric: self.geometric || other.geometric,
            point_color: self.point_color || other.point_color || !radii.is_empty(),
            radii,
        }
    }

    pub fn needs_color(&self) -> bool {
        self.point_color || !self.radii.is_empty()
    }

    /// Parses `g`, `cp`, `cn:R`, `all`, or `+`-joined combinations such as
    /// `g+cn:0.6`. Case-insensitive.
    pub fn parse(s: &str) -> core::result::Result<FeatureSet, String> {
        let mut acc: Option<FeatureSet> = None;
        for part in s.split('+') {
            let p = part.trim().to_ascii_lowercase();
            let set = match p.as_str() {
                "g" => FeatureSet::geometric(),
                "cp" => FeatureSet::point_color(),
                "all" => FeatureSet::all(),
                _ => {
                    let r = p
                        .strip_prefix("cn:")
                        .or_else(|| p.strip_prefix("cn(").and_then(|x| x.strip_suffix(')')))
                        .ok_or_else(|| format!("unknown feature set `{}` (expected g, cp, cn:R or all)", part.trim()))?;
                    let r: f64 = r.parse().map_err(|_| format!("bad radius in `{}`", part.trim()))?;
                    if !(r > 0.0 && r.is_finite()) {
                        return Err(format!("radius must be positive in `{}`", part.trim()));
                    }
                    FeatureSet::neighborhood(r)
                }
            };
            acc = Some(match acc {
                None => set,
                Some(a) => a.union(&set),
            });
        }
        acc.ok_or_else(|| "empty feature set".to_string())
    }

    pub fn column_count(&self, n_levels: usize) -> usize {
        let mut n = 0;
        if self.geometric {
            n += GEOM_FEATURE_COUNT * n_levels;
        }
        if self.needs_color() {
            n += 3 + 3 * self.radii.len();
        }
        n
    }

    /// Column names: `{feature}@s{level}` for geometric columns, then `h`,
    /// `s`, `v`, then `h@r{radius}` etc. per radius.
    pub fn column_names(&self, n_levels: usize) -> Vec<String> {
        let mut names = Vec::with_capacity(self.column_count(n_levels));
        if self.geometric {
            for level in 0..n_levels {
                for f in GEOM_FEATURE_NAMES {
                    names.push(format!("{f}@s{level}"));
                }
            }
        }
        if self.needs_color() {
            for c in ["h", "s", "v"] {
                names.push(c.to_string());
            }
            for r in &self.radii {
                for c in ["h", "s", "v"] {
                    names.push(format!("{c}@r{r}"));
                }
            }
        }
        names
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == FeatureSet::all() {
            return f.write_str("all");
        }
        let mut parts: Vec<String> = Vec::new();
        if self.geometric {
            parts.push("g".into());
        }
        if self.radii.is_empty() && self.point_color {
            parts.push("cp".into());
        }
        for r in &self.radii {
            parts.push(format!("cn:{r}"));
        }
        f.write_str(&parts.join("+"))
    }
}

/// Dense row-major matrix of 32-bit features with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    names: Vec<String>,
    n_rows: usize,
    values: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(names: Vec<String>, values: Vec<f32>) -> Result<Self> {
        let d = names.len();
        if d == 0 {
            return Err(Error::ShapeMismatch {
                what: "feature column count",
                expected: 1,
                found: 0,
            });
        }
        if values.len() % d != 0 {
            return Err(Error::ShapeMismatch {
                what: "feature value count (multiple of column count)",
                expected: values.len() - values.len() % d,
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature {
                row: i / d,
                column: i % d,
            });
        }
        Ok(FeatureMatrix {
            n_rows: values.len() / d,
            names,
            values,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let d = self.n_cols();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.n_cols() + col]
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(rows.len() * self.n_cols());
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        FeatureMatrix {
            names: self.names.clone(),
            n_rows: rows.len(),
            values,
        }
    }

    /// Stacks matrices with identical column names.
    pub fn concat_rows(parts: &[FeatureMatrix]) -> Result<FeatureMatrix> {
        let first = parts.first().ok_or(Error::ShapeMismatch {
            what: "matrices to concatenate",
            expected: 1,
            found: 0,
        })?;
        let mut values = Vec::new();
        for p in parts {
            if p.names != first.names {
                return Err(column_mismatch(&first.names, &p.names));
            }
            values.extend_from_slice(&p.values);
        }
        Ok(FeatureMatrix {
            names: first.names.clone(),
            n_rows: values.len() / first.n_cols(),
            values,
        })
    }

    /// Reorders columns to match `wanted` by name. Errors list the names
    /// that are missing here and the ones that are not wanted.
    pub fn select_columns(&self, wanted: &[String]) -> Result<FeatureMatrix> {
        if wanted == self.names.as_slice() {
            return Ok(self.clone());
        }
        let mut map = Vec::with_capacity(wanted.len());
        for w in wanted {
            match self.names.iter().position(|n| n == w) {
                Some(i) => map.push(i),
                None => return Err(column_mismatch(wanted, &self.names)),
            }
        }
        let mut values = Vec::with_capacity(self.n_rows * wanted.len());
        for r in 0..self.n_rows {
            let row = self.row(r);
            values.extend(map.iter().map(|&i| row[i]));
        }
        Ok(FeatureMatrix {
            names: wanted.to_vec(),
            n_rows: self.n_rows,
            values,
        })
    }
}

pub(crate) fn column_mismatch(expected: &[String], found: &[String]) -> Error {
    Error::ColumnMismatch {
        missing: expected.iter().filter(|n| !found.contains(n)).cloned().collect(),
        unexpected: found.iter().filter(|n| !expected.contains(n)).cloned().collect(),
    }
}

/// Geometry and color parameters of feature extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureParams {
    /// Ground sampling distance in meters/pixel; base voxel is 4x this.
    pub gsd: f64,
    pub k: usize,
    pub n_levels: usize,
    pub set: FeatureSet,
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams {
            gsd: pyramid::DEFAULT_GSD,
            k: geom::DEFAULT_K,
            n_levels: pyramid::DEFAULT_LEVELS,
            set: FeatureSet::all(),
        }
    }
}

impl FeatureParams {
    pub fn column_names(&self) -> Vec<String> {
        self.set.column_names(self.n_levels)
    }

    pub fn validate(&self) -> Result<()> {
        pyramid::base_scale(self.gsd)?;
        if self.k == 0 {
            return Err(Error::InvalidParameter {
                name: "k",
                value: 0.0,
                expected: "at least one neighbor",
            });
        }
        if self.n_levels == 0 {
            return Err(Error::InvalidParameter {
                name: "pyramid levels",
                value: 0.0,
                expected: "at least one level",
            });
        }
        color::check_radii(&self.set.radii)?;
        if self.set.column_count(self.n_levels) == 0 {
            return Err(Error::ShapeMismatch {
                what: "feature column count",
                expected: 1,
                found: 0,
            });
        }
        Ok(())
    }
}

/// Everything needed to compute feature rows for points of one cloud:
/// the pyramid (geometric sets) and a full-resolution index plus a
/// per-point HSV table (color sets). Immutable and shareable across
/// threads once built.
#[derive(Debug)]
pub struct Featurizer<'a> {
    cloud: &'a PointCloud,
    params: FeatureParams,
    pyramid: Option<ScalePyramid>,
    full_index: Option<KdTree>,
    hsv: Vec<Hsv>,
    names: Vec<String>,
}

impl<'a> Featurizer<'a> {
    /// Checks the configuration against the cloud before any heavy work.
    pub fn new(cloud: &'a PointCloud, params: FeatureParams) -> Result<Self> {
        params.validate()?;
        if cloud.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if params.set.needs_color() && !cloud.has_color() {
            return Err(Error::MissingColor);
        }
        let positions = cloud.positions();
        let pyramid = if params.set.geometric {
            Some(ScalePyramid::build(
                &positions,
                pyramid::base_scale(params.gsd)?,
                params.n_levels,
                pyramid::DEFAULT_FACTOR,
            )?)
        } else {
            None
        };
        let hsv = if params.set.needs_color() {
            let pts = cloud.points();
            par::map_range(pts.len(), |i| rgb_to_hsv(pts[i].color))
                .into_iter()
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        let full_index = if params.set.radii.is_empty() {
            None
        } else {
            Some(KdTree::build(positions)?)
        };
        let names = params.column_names();
        Ok(Featurizer {
            cloud,
            params,
            pyramid,
            full_index,
            hsv,
            names,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn pyramid(&self) -> Option<&ScalePyramid> {
        self.pyramid.as_ref()
    }

    pub fn params(&self) -> &FeatureParams {
        &self.params
    }

    /// Computes the features of cloud point `id` into `out`.
    pub fn row_into(&self, id: usize, scratch: &mut geom::Scratch, buf: &mut [f64], out: &mut [f32]) -> Result<()> {
        let q = self.cloud.points()[id].pos;
        let mut o = 0;
        if let Some(p) = &self.pyramid {
            let n = GEOM_FEATURE_COUNT * p.len();
            geom::features_multiscale_into(q, p, self.params.k, scratch, &mut buf[..n])?;
            o = n;
        }
        if self.params.set.needs_color() {
            let n = 3 + 3 * self.params.set.radii.len();
            let own = self.hsv[id];
            match &self.full_index {
                Some(idx) => color::color_feature_block_into(q, own, idx, &self.hsv, &self.params.set.radii, &mut buf[o..o + n])?,
                None => buf[o..o + 3].copy_from_slice(&own.to_array()),
            }
        }
        for (dst, &src) in out.iter_mut().zip(buf.iter()) {
            *dst = src as f32;
        }
        Ok(())
    }

    /// Feature rows of the given cloud point ids, in that order.
    pub fn extract(&self, ids: &[usize]) -> Result<FeatureMatrix> {
        let d = self.n_cols();
        let mut values = alloc::vec![0.0f32; ids.len() * d];
        par::try_for_each_row_init(
            &mut values,
            d,
            || (geom::Scratch::default(), alloc::vec![0.0f64; d]),
            |(scratch, buf), r, out| self.row_into(ids[r], scratch, buf, out),
        )?;
        FeatureMatrix::new(self.names.clone(), values)
    }

    pub fn extract_all(&self) -> Result<FeatureMatrix> {
        let ids: Vec<usize> = (0..self.cloud.len()).collect();
        self.extract(&ids)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Point;
    use alloc::vec;

    #[test]
    fn column_arithmetic() {
        assert_eq!(FeatureSet::geometric().column_count(9), 135);
        assert_eq!(FeatureSet::all().column_count(9), 147);
        assert_eq!(FeatureSet::point_color().column_count(9), 3);
        assert_eq!(FeatureSet::neighborhood(0.6).column_count(9), 6);
        let g_cn = FeatureSet::parse("g+cn:0.6").unwrap();
        assert_eq!(g_cn.column_count(9), 141);
        let names = FeatureSet::all().column_names(9);
        assert_eq!(names[0], "omnivariance@s0");
        assert_eq!(names[134], "height_above@s8");
        assert_eq!(&names[135..141], &["h", "s", "v", "h@r0.4", "s@r0.4", "v@r0.4"]);
    }

    #[test]
    fn parse_and_display() {
        for s in ["g", "cp", "cn:0.6", "all", "g+cn:0.6", "g+cp"] {
            let set = FeatureSet::parse(s).unwrap();
            assert_eq!(FeatureSet::parse(&set.to_string()).unwrap(), set);
        }
        assert_eq!(FeatureSet::parse("ALL").unwrap(), FeatureSet::all());
        assert_eq!(
            FeatureSet::parse("g+cn:0.4+cn:0.6+cn:0.9").unwrap(),
            FeatureSet::all()
        );
        assert!(FeatureSet::parse("xyz").is_err());
        assert!(FeatureSet::parse("cn:-1").is_err());
    }

    #[test]
    fn column_selection_by_name() {
        let m = FeatureMatrix::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        )
        .unwrap();
        let r = m.select_columns(&["c".into(), "a".into()]).unwrap();
        assert_eq!(r.values(), &[3.0, 1.0, 6.0, 4.0]);
        match m.select_columns(&["a".into(), "z".into()]) {
            Err(Error::ColumnMismatch { missing, unexpected }) => {
                assert_eq!(missing, vec!["z".to_string()]);
                assert_eq!(unexpected, vec!["b".to_string(), "c".to_string()]);
            }
            other => panic!("{other:?}"),
        }
        assert!(FeatureMatrix::new(vec!["a".into()], vec![f32::NAN]).is_err());
    }

    #[test]
    fn colorless_cloud_rejected_up_front() {
        let cloud = PointCloud::new(vec![Point::new([0.0; 3])], false, false).unwrap();
        let p = FeatureParams {
            set: FeatureSet::point_color(),
            ..FeatureParams::default()
        };
        assert_eq!(Featurizer::new(&cloud, p).unwrap_err(), Error::MissingColor);
    }

    #[test]
    fn extraction_shapes() {
        let pts: Vec<Point> = (0..400)
            .map(|i| {
                let t = i as f64;
                Point::new([(t * 0.37) % 6.0, (t * 0.53) % 6.0, (t * 0.11) % 1.0])
                    .with_color([(t * 0.1) % 1.0, 0.5, 0.25])
            })
            .collect();
        let cloud = PointCloud::new(pts, true, false).unwrap();
        let fz = Featurizer::new(&cloud, FeatureParams::default()).unwrap();
        let m = fz.extract(&[0, 10, 399]).unwrap();
        assert_eq!(m.n_rows(), 3);
        assert_eq!(m.n_cols(), 147);
        let cp = Featurizer::new(
            &cloud,
            FeatureParams {
                set: FeatureSet::point_color(),
                ..FeatureParams::default()
            },
        )
        .unwrap();
        let m = cp.extract(&[5]).unwrap();
        let want = rgb_to_hsv(cloud.points()[5].color).unwrap().to_array();
        for a in 0..3 {
            assert_eq!(m.get(0, a), want[a] as f32);
        }
    }
}
