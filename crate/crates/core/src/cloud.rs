//! In-memory point cloud records.

use alloc::vec::Vec;

use crate::class::Class;
use crate::error::{Error, Result};

/// A colored, optionally labeled 3D point. Coordinates are meters, color
/// channels are normalized to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub pos: [f64; 3],
    pub color: [f64; 3],
    pub label: Option<Class>,
}

impl Point {
    pub fn new(pos: [f64; 3]) -> Self {
        Point {
            pos,
            color: [0.0; 3],
            label: None,
        }
    }

    pub fn with_color(mut self, color: [f64; 3]) -> Self {
        self.color = color;
        self
    }

    pub fn with_label(mut self, label: Class) -> Self {
        self.label = Some(label);
        self
    }
}

/// Axis-aligned bounds of a cloud.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn of(positions: impl IntoIterator<Item = [f64; 3]>) -> Option<Aabb> {
        let mut it = positions.into_iter();
        let first = it.next()?;
        let mut b = Aabb {
            min: first,
            max: first,
        };
        for p in it {
            for a in 0..3 {
                b.min[a] = b.min[a].min(p[a]);
                b.max[a] = b.max[a].max(p[a]);
            }
        }
        Some(b)
    }

    pub fn extent(&self) -> [f64; 3] {
        [
            self.max[0] - self.min[0],
            self.max[1] - self.min[1],
            self.max[2] - self.min[2],
        ]
    }
}

/// An ordered list of points plus flags recording which attributes are
/// meaningful. Immutable once built.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    points: Vec<Point>,
    has_color: bool,
    has_labels: bool,
}

impl PointCloud {
    /// Validates coordinates (finite) and, when `has_color`, color ranges.
    pub fn new(points: Vec<Point>, has_color: bool, has_labels: bool) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if !p.pos.iter().all(|c| c.is_finite()) {
                return Err(Error::NonFiniteCoordinate { index: i });
            }
            if has_color && !p.color.iter().all(|c| (0.0..=1.0).contains(c)) {
                return Err(Error::ColorOutOfRange { index: i });
            }
        }
        Ok(PointCloud {
            points,
            has_color,
            has_labels,
        })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn has_color(&self) -> bool {
        self.has_color
    }

    pub fn has_labels(&self) -> bool {
        self.has_labels
    }

    pub fn bounds(&self) -> Option<Aabb> {
        Aabb::of(self.points.iter().map(|p| p.pos))
    }

    pub fn positions(&self) -> Vec<[f64; 3]> {
        self.points.iter().map(|p| p.pos).collect()
    }

    /// Label of every point, `None` for unlabeled ones. Errors when the
    /// cloud carries no labels at all.
    pub fn labels(&self) -> Result<Vec<Option<Class>>> {
        if !self.has_labels {
            return Err(Error::MissingLabels);
        }
        Ok(self.points.iter().map(|p| p.label).collect())
    }

    /// New cloud made of the points at `ids`, in that order.
    pub fn select(&self, ids: &[usize]) -> PointCloud {
        PointCloud {
            points: ids.iter().map(|&i| self.points[i]).collect(),
            has_color: self.has_color,
            has_labels: self.has_labels,
        }
    }

    /// Replaces every label, marking the cloud labeled.
    pub fn with_labels(mut self, labels: &[Class]) -> Result<Self> {
        if labels.len() != self.points.len() {
            return Err(Error::ShapeMismatch {
                what: "label count",
                expected: self.points.len(),
                found: labels.len(),
            });
        }
        for (p, &l) in self.points.iter_mut().zip(labels) {
            p.label = Some(l);
        }
        self.has_labels = true;
        Ok(self)
    }

    /// Per-class point counts, ignoring unlabeled points.
    pub fn class_counts(&self) -> [usize; Class::COUNT] {
        let mut counts = [0; Class::COUNT];
        for p in &self.points {
            if let Some(c) = p.label {
                counts[c.index()] += 1;
            }
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn rejects_bad_points() {
        let nan = Point::new([0.0, f64::NAN, 0.0]);
        assert_eq!(
            PointCloud::new(vec![Point::new([0.0; 3]), nan], false, false),
            Err(Error::NonFiniteCoordinate { index: 1 })
        );
        let bright = Point::new([0.0; 3]).with_color([1.5, 0.0, 0.0]);
        assert_eq!(
            PointCloud::new(vec![bright], true, false),
            Err(Error::ColorOutOfRange { index: 0 })
        );
        // colors are not checked on colorless clouds
        assert!(PointCloud::new(vec![bright], false, false).is_ok());
    }

    #[test]
    fn bounds_and_counts() {
        let pts = vec![
            Point::new([1.0, -2.0, 3.0]).with_label(Class::Road),
            Point::new([-1.0, 5.0, 0.0]).with_label(Class::Road),
            Point::new([0.0, 0.0, 9.0]),
        ];
        let c = PointCloud::new(pts, false, true).unwrap();
        let b = c.bounds().unwrap();
        assert_eq!(b.min, [-1.0, -2.0, 0.0]);
        assert_eq!(b.max, [1.0, 5.0, 9.0]);
        assert_eq!(c.class_counts()[Class::Road.index()], 2);
        assert_eq!(c.select(&[2, 0]).points()[1].pos, [1.0, -2.0, 3.0]);
    }
}
