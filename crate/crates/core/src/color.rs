//! HSV color features.

use crate::cloud::Point;
use crate::error::{Error, Result};
use crate::spatial::{check_radius, KdTree};

/// Neighborhood radii (meters) of the full feature set.
pub const DEFAULT_RADII: [f64; 3] = [0.4, 0.6, 0.9];

/// Hue in `[0, 1)`, saturation and value in `[0, 1]`. Hue is 0 for grays.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Hsv {
    pub h: f64,
    pub s: f64,
    pub v: f64,
}

impl Hsv {
    pub fn to_array(self) -> [f64; 3] {
        [self.h, self.s, self.v]
    }
}

/// Hexcone RGB to HSV conversion.
pub fn rgb_to_hsv(rgb: [f64; 3]) -> Result<Hsv> {
    for &c in &rgb {
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::InvalidParameter {
                name: "color channel",
                value: c,
                expected: "a value in [0, 1]",
            });
        }
    }
    let [r, g, b] = rgb;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    if delta == 0.0 {
        return Ok(Hsv { h: 0.0, s, v: max });
    }
    let sector = if max == r {
        let x = (g - b) / delta;
        if x < 0.0 {
            x + 6.0
        } else {
            x
        }
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    let mut h = sector / 6.0;
    if h >= 1.0 {
        h = 0.0;
    }
    Ok(Hsv { h, s, v: max })
}

pub fn point_color_features(point: &Point) -> Result<[f64; 3]> {
    rgb_to_hsv(point.color).map(Hsv::to_array)
}

/// Arithmetic mean of the HSV triples of all points of the indexed cloud
/// within distance `r` of `query` (closed ball). `hsv[i]` is the color of
/// index point `i`. Hue is averaged linearly.
pub fn neighborhood_color_features(query: [f64; 3], index: &KdTree, hsv: &[Hsv], r: f64) -> Result<[f64; 3]> {
    check_radius(r)?;
    let mut sum = [0.0; 3];
    let mut n = 0usize;
    index.for_each_within(query, r * r, |id, _| {
        let c = hsv[id];
        sum[0] += c.h;
        sum[1] += c.s;
        sum[2] += c.v;
        n += 1;
    });
    if n == 0 {
        return Err(Error::EmptyNeighborhood);
    }
    let n = n as f64;
    Ok([sum[0] / n, sum[1] / n, sum[2] / n])
}

/// `[own HSV | mean HSV within radii[0] | ...]`, `3 + 3 * radii.len()`
/// entries written to `out`. One ball query at the largest radius serves
/// every radius.
pub fn color_feature_block_into(
    query: [f64; 3],
    own: Hsv,
    index: &KdTree,
    hsv: &[Hsv],
    radii: &[f64],
    out: &mut [f64],
) -> Result<()> {
    let need = 3 + 3 * radii.len();
    if out.len() != need {
        return Err(Error::ShapeMismatch {
            what: "color feature buffer",
            expected: need,
            found: out.len(),
        });
    }
    out[..3].copy_from_slice(&own.to_array());
    if radii.is_empty() {
        return Ok(());
    }
    check_radii(radii)?;
    const MAX_RADII: usize = 8;
    if radii.len() > MAX_RADII {
        return Err(Error::ShapeMismatch {
            what: "number of color radii",
            expected: MAX_RADII,
            found: radii.len(),
        });
    }
    let mut r2 = [0.0; MAX_RADII];
    for (slot, r) in r2.iter_mut().zip(radii) {
        *slot = r * r;
    }
    let r2 = &r2[..radii.len()];
    let mut sums = [[0.0f64; 3]; MAX_RADII];
    let mut counts = [0usize; MAX_RADII];
    index.for_each_within(query, r2[r2.len() - 1], |id, d2| {
        let c = hsv[id];
        // radii ascending: the first radius containing d2 and all later ones
        let first = r2.partition_point(|&x| x < d2);
        for j in first..r2.len() {
            sums[j][0] += c.h;
            sums[j][1] += c.s;
            sums[j][2] += c.v;
            counts[j] += 1;
        }
    });
    for j in 0..radii.len() {
        if counts[j] == 0 {
            return Err(Error::EmptyNeighborhood);
        }
        let n = counts[j] as f64;
        let o = 3 + 3 * j;
        out[o] = sums[j][0] / n;
        out[o + 1] = sums[j][1] / n;
        out[o + 2] = sums[j][2] / n;
    }
    Ok(())
}

pub fn check_radii(radii: &[f64]) -> Result<()> {
    for &r in radii {
        check_radius(r)?;
    }
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter {
            name: "color radii",
            value: f64::NAN,
            expected: "strictly ascending radii",
        });
    }
    Ok(())
}
