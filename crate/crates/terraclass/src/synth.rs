//! Synthetic labeled scenes built from simple primitives.
//!
//! A recipe is a TOML document with a list of `[[primitive]]` tables and an
//! optional `[town]` table that expands into a random town layout. Points
//! are sampled uniformly on each primitive's visible surfaces at the given
//! density (points per square meter of surface), jittered by isotropic
//! Gaussian noise, and colored from a per-primitive color distribution.

use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use terraclass_core::{Class, Point, PointCloud};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Recipe {
    #[serde(default)]
    pub name: String,
    /// Drop ground points under roads, buildings and cars, and road points
    /// under cars.
    #[serde(default)]
    pub cull_covered: bool,
    #[serde(default)]
    pub town: Option<TownSpec>,
    #[serde(default, rename = "primitive")]
    pub primitives: Vec<Primitive>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColorDist {
    /// Mean color, channels in [0, 1].
    pub rgb: [f64; 3],
    /// Per-channel standard deviation.
    #[serde(default)]
    pub jitter: f64,
}

impl ColorDist {
    pub const fn new(rgb: [f64; 3], jitter: f64) -> Self {
        ColorDist { rgb, jitter }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Roof {
    Flat,
    Gabled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// Ground patch `[origin, origin + size]` at height
    /// `z + slope[0] * x + slope[1] * y`.
    Plane {
        origin: [f64; 2],
        size: [f64; 2],
        #[serde(default)]
        z: f64,
        #[serde(default)]
        slope: [f64; 2],
    },
    /// Axis-aligned box building with walls and a flat or gabled roof.
    /// `height` is the eave height above `base_z`; gabled roofs rise by
    /// `ridge` along the longer side.
    Building {
        origin: [f64; 2],
        size: [f64; 2],
        #[serde(default)]
        base_z: f64,
        height: f64,
        roof: Roof,
        #[serde(default)]
        ridge: f64,
        #[serde(default)]
        wall_color: Option<ColorDist>,
    },
    /// Ellipsoid tree crown.
    Crown { center: [f64; 3], radii: [f64; 3] },
    /// Flat strip of the given width between two points, following the
    /// same height rule as `Plane`.
    Road {
        from: [f64; 2],
        to: [f64; 2],
        width: f64,
        #[serde(default)]
        z: f64,
        #[serde(default)]
        slope: [f64; 2],
    },
    /// Box car rotated by `yaw` radians about its center.
    Car {
        center: [f64; 2],
        size: [f64; 3],
        #[serde(default)]
        yaw: f64,
        #[serde(default)]
        base_z: f64,
    },
    /// Thin vertical cylinder.
    Pole { base: [f64; 3], height: f64, radius: f64 },
}

impl Shape {
    pub fn default_class(&self) -> Class {
        match self {
            Shape::Plane { .. } => Class::Ground,
            Shape::Building { .. } => Class::Building,
            Shape::Crown { .. } => Class::HighVegetation,
            Shape::Road { .. } => Class::Road,
            Shape::Car { .. } => Class::Car,
            Shape::Pole { .. } => Class::HumanMadeObject,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Shape::Plane { .. } => "plane",
            Shape::Building { .. } => "building",
            Shape::Crown { .. } => "crown",
            Shape::Road { .. } => "road",
            Shape::Car { .. } => "car",
            Shape::Pole { .. } => "pole",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    #[serde(flatten)]
    pub shape: Shape,
    /// Overrides the shape's default class (snake_case class name).
    #[serde(default)]
    pub class: Option<String>,
    /// Points per square meter of surface.
    pub density: f64,
    #[serde(default)]
    pub noise: f64,
    pub color: ColorDist,
}

impl Primitive {
    pub fn new(shape: Shape, density: f64, noise: f64, color: ColorDist) -> Self {
        Primitive {
            shape,
            class: None,
            density,
            noise,
            color,
        }
    }

    pub fn class(&self) -> Result<Class> {
        match &self.class {
            None => Ok(self.shape.default_class()),
            Some(n) => Class::from_name(n).ok_or_else(|| Error::Recipe(format!("unknown class `{n}`"))),
        }
    }
}

impl Recipe {
    pub fn parse(text: &str) -> Result<Recipe> {
        toml::from_str(text).map_err(|e| Error::Recipe(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Recipe> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Recipe::parse(&text).map_err(|e| match e {
            Error::Recipe(m) => Error::Recipe(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("recipes always serialize")
    }
}

/// Samples the scene. The same recipe and seed always give the same cloud;
/// each primitive draws from its own random stream.
pub fn synth_scene(recipe: &Recipe, seed: u64) -> Result<PointCloud> {
    let mut prims = recipe.primitives.clone();
    let mut cull = recipe.cull_covered;
    if let Some(town) = &recipe.town {
        prims.extend(town.expand(seed)?);
        cull = true;
    }
    if prims.is_empty() {
        return Err(Error::Recipe("recipe has no primitives".into()));
    }
    let mut points = Vec::new();
    let covers: Vec<Footprint> = if cull { prims.iter().filter_map(Footprint::of).collect() } else { Vec::new() };
    for (i, prim) in prims.iter().enumerate() {
        validate(prim, i)?;
        let class = prim.class()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let noise = Normal::new(0.0, prim.noise).map_err(|e| Error::Recipe(e.to_string()))?;
        let jitter = Normal::new(0.0, prim.color.jitter).map_err(|e| Error::Recipe(e.to_string()))?;
        let wall = match &prim.shape {
            Shape::Building { wall_color, .. } => *wall_color,
            _ => None,
        };
        for patch in patches(&prim.shape) {
            let dist = if patch.is_wall { wall.unwrap_or(prim.color) } else { prim.color };
            let wall_jitter = Normal::new(0.0, dist.jitter).map_err(|e| Error::Recipe(e.to_string()))?;
            let count = (patch.surface.area() * prim.density).round() as usize;
            for _ in 0..count {
                let s = patch.surface.sample(&mut rng);
                let pos = [
                    s[0] + noise.sample(&mut rng),
                    s[1] + noise.sample(&mut rng),
                    s[2] + noise.sample(&mut rng),
                ];
                let j = if patch.is_wall { &wall_jitter } else { &jitter };
                let color = dist.rgb.map(|c| quantize(c + j.sample(&mut rng)));
                if cull && covers.iter().any(|f| f.covers(class, s)) {
                    continue;
                }
                points.push(Point::new(pos).with_color(color).with_label(class));
            }
        }
    }
    Ok(PointCloud::new(points, true, true)?)
}

fn quantize(c: f64) -> f64 {
    (c.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

fn validate(p: &Primitive, i: usize) -> Result<()> {
    let bad = |m: String| Err(Error::Recipe(format!("primitive {i} ({}): {m}", p.shape.kind())));
    if !(p.density > 0.0 && p.density.is_finite()) {
        return bad(format!("density must be positive, got {}", p.density));
    }
    if !(p.noise >= 0.0 && p.noise.is_finite()) {
        return bad(format!("noise must be non-negative, got {}", p.noise));
    }
    if !(p.color.jitter >= 0.0) || p.color.rgb.iter().any(|c| !(0.0..=1.0).contains(c)) {
        return bad("color channels must be in [0, 1] with non-negative jitter".into());
    }
    let positive = |v: &[f64]| v.iter().all(|x| *x > 0.0 && x.is_finite());
    let ok = match &p.shape {
        Shape::Plane { size, .. } => positive(size),
        Shape::Building { size, height, ridge, .. } => positive(size) && positive(&[*height]) && *ridge >= 0.0,
        Shape::Crown { radii, .. } => positive(radii),
        Shape::Road { from, to, width, .. } => positive(&[*width]) && from != to,
        Shape::Car { size, .. } => positive(size),
        Shape::Pole { height, radius, .. } => positive(&[*height, *radius]),
    };
    if !ok {
        return bad("sizes must be positive".into());
    }
    Ok(())
}

// ---- surfaces ------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
enum Surface {
    /// Parallelogram `o + s u + t v`.
    Quad { o: [f64; 3], u: [f64; 3], v: [f64; 3] },
    Tri { a: [f64; 3], b: [f64; 3], c: [f64; 3] },
    Ellipsoid { c: [f64; 3], r: [f64; 3] },
    Cylinder { base: [f64; 3], r: f64, h: f64 },
}

struct Patch {
    surface: Surface,
    is_wall: bool,
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross_norm(u: [f64; 3], v: [f64; 3]) -> f64 {
    let c = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
    (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt()
}

impl Surface {
    fn area(&self) -> f64 {
        match *self {
            Surface::Quad { u, v, .. } => cross_norm(u, v),
            Surface::Tri { a, b, c } => 0.5 * cross_norm(sub(b, a), sub(c, a)),
            Surface::Ellipsoid { r, .. } => {
                // Knud Thomsen's approximation, within about 1%
                let p = 1.6075;
                let [a, b, c] = r.map(|x| x.powf(p));
                4.0 * PI * ((a * b + a * c + b * c) / 3.0).powf(1.0 / p)
            }
            Surface::Cylinder { r, h, .. } => 2.0 * PI * r * h,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> [f64; 3] {
        match *self {
            Surface::Quad { o, u, v } => {
                let (s, t): (f64, f64) = (rng.random(), rng.random());
                [0, 1, 2].map(|i| o[i] + s * u[i] + t * v[i])
            }
            Surface::Tri { a, b, c } => {
                let (mut s, mut t): (f64, f64) = (rng.random(), rng.random());
                if s + t > 1.0 {
                    s = 1.0 - s;
                    t = 1.0 - t;
                }
                [0, 1, 2].map(|i| a[i] + s * (b[i] - a[i]) + t * (c[i] - a[i]))
            }
            Surface::Ellipsoid { c, r } => {
                let z: f64 = rng.random_range(-1.0..1.0);
                let phi: f64 = rng.random_range(0.0..2.0 * PI);
                let q = (1.0 - z * z).sqrt();
                [c[0] + r[0] * q * phi.cos(), c[1] + r[1] * q * phi.sin(), c[2] + r[2] * z]
            }
            Surface::Cylinder { base, r, h } => {
                let phi: f64 = rng.random_range(0.0..2.0 * PI);
                let t: f64 = rng.random();
                [base[0] + r * phi.cos(), base[1] + r * phi.sin(), base[2] + t * h]
            }
        }
    }
}

fn ground_z(z: f64, slope: [f64; 2], x: f64, y: f64) -> f64 {
    z + slope[0] * x + slope[1] * y
}

fn patches(shape: &Shape) -> Vec<Patch> {
    let surf = |s| Patch { surface: s, is_wall: false };
    let wall = |s| Patch { surface: s, is_wall: true };
    match *shape {
        Shape::Plane { origin, size, z, slope } => {
            let o = [origin[0], origin[1], ground_z(z, slope, origin[0], origin[1])];
            vec![surf(Surface::Quad {
                o,
                u: [size[0], 0.0, slope[0] * size[0]],
                v: [0.0, size[1], slope[1] * size[1]],
            })]
        }
        Shape::Road { from, to, width, z, slope } => {
            let d = [to[0] - from[0], to[1] - from[1]];
            let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
            let n = [-d[1] / len * width, d[0] / len * width];
            let ox = from[0] - 0.5 * n[0];
            let oy = from[1] - 0.5 * n[1];
            let h = |dx: f64, dy: f64| slope[0] * dx + slope[1] * dy;
            vec![surf(Surface::Quad {
                o: [ox, oy, ground_z(z, slope, ox, oy)],
                u: [d[0], d[1], h(d[0], d[1])],
                v: [n[0], n[1], h(n[0], n[1])],
            })]
        }
        Shape::Building {
            origin,
            size,
            base_z,
            height,
            roof,
            ridge,
            ..
        } => {
            let [x0, y0] = origin;
            let [w, d] = size;
            let top = base_z + height;
            let mut out = vec![
                wall(Surface::Quad { o: [x0, y0, base_z], u: [w, 0.0, 0.0], v: [0.0, 0.0, height] }),
                wall(Surface::Quad { o: [x0, y0 + d, base_z], u: [w, 0.0, 0.0], v: [0.0, 0.0, height] }),
                wall(Surface::Quad { o: [x0, y0, base_z], u: [0.0, d, 0.0], v: [0.0, 0.0, height] }),
                wall(Surface::Quad { o: [x0 + w, y0, base_z], u: [0.0, d, 0.0], v: [0.0, 0.0, height] }),
            ];
            match roof {
                Roof::Flat => out.push(surf(Surface::Quad { o: [x0, y0, top], u: [w, 0.0, 0.0], v: [0.0, d, 0.0] })),
                Roof::Gabled if w >= d => {
                    let ym = y0 + d / 2.0;
                    out.push(surf(Surface::Quad { o: [x0, y0, top], u: [w, 0.0, 0.0], v: [0.0, d / 2.0, ridge] }));
                    out.push(surf(Surface::Quad { o: [x0, y0 + d, top], u: [w, 0.0, 0.0], v: [0.0, -d / 2.0, ridge] }));
                    for x in [x0, x0 + w] {
                        out.push(wall(Surface::Tri { a: [x, y0, top], b: [x, y0 + d, top], c: [x, ym, top + ridge] }));
                    }
                }
                Roof::Gabled => {
                    let xm = x0 + w / 2.0;
                    out.push(surf(Surface::Quad { o: [x0, y0, top], u: [0.0, d, 0.0], v: [w / 2.0, 0.0, ridge] }));
                    out.push(surf(Surface::Quad { o: [x0 + w, y0, top], u: [0.0, d, 0.0], v: [-w / 2.0, 0.0, ridge] }));
                    for y in [y0, y0 + d] {
                        out.push(wall(Surface::Tri { a: [x0, y, top], b: [x0 + w, y, top], c: [xm, y, top + ridge] }));
                    }
                }
            }
            out
        }
        Shape::Crown { center, radii } => vec![surf(Surface::Ellipsoid { c: center, r: radii })],
        Shape::Car { center, size, yaw, base_z } => {
            let (s, c) = yaw.sin_cos();
            let ax = [c * size[0], s * size[0], 0.0];
            let ay = [-s * size[1], c * size[1], 0.0];
            let up = [0.0, 0.0, size[2]];
            let o = [
                center[0] - 0.5 * (ax[0] + ay[0]),
                center[1] - 0.5 * (ax[1] + ay[1]),
                base_z,
            ];
            let add = |p: [f64; 3], q: [f64; 3]| [p[0] + q[0], p[1] + q[1], p[2] + q[2]];
            vec![
                surf(Surface::Quad { o: add(o, up), u: ax, v: ay }),
                surf(Surface::Quad { o, u: ax, v: up }),
                surf(Surface::Quad { o: add(o, ay), u: ax, v: up }),
                surf(Surface::Quad { o, u: ay, v: up }),
                surf(Surface::Quad { o: add(o, ax), u: ay, v: up }),
            ]
        }
        Shape::Pole { base, height, radius } => vec![surf(Surface::Cylinder { base, r: radius, h: height })],
    }
}

/// Horizontal footprint that hides lower-ranked surfaces beneath it.
struct Footprint {
    rank: u8,
    /// Center, unit axes and half extents of an oriented rectangle.
    c: [f64; 2],
    axes: [[f64; 2]; 2],
    half: [f64; 2],
}

impl Footprint {
    fn of(p: &Primitive) -> Option<Footprint> {
        let rect = |c: [f64; 2], angle: f64, half: [f64; 2]| {
            let (s, co) = angle.sin_cos();
            (c, [[co, s], [-s, co]], half)
        };
        let (rank, (c, axes, half)) = match p.shape {
            Shape::Road { from, to, width, .. } => {
                let d = [to[0] - from[0], to[1] - from[1]];
                let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
                let c = [(from[0] + to[0]) / 2.0, (from[1] + to[1]) / 2.0];
                (1, rect(c, d[1].atan2(d[0]), [len / 2.0, width / 2.0]))
            }
            Shape::Building { origin, size, .. } => (
                2,
                rect([origin[0] + size[0] / 2.0, origin[1] + size[1] / 2.0], 0.0, [size[0] / 2.0, size[1] / 2.0]),
            ),
            Shape::Car { center, size, yaw, .. } => (2, rect(center, yaw, [size[0] / 2.0, size[1] / 2.0])),
            _ => return None,
        };
        Some(Footprint { rank, c, axes, half })
    }

    fn covers(&self, class: Class, p: [f64; 3]) -> bool {
        let own = match class {
            Class::Ground => 0,
            Class::Road => 1,
            _ => return false,
        };
        if own >= self.rank {
            return false;
        }
        let d = [p[0] - self.c[0], p[1] - self.c[1]];
        (0..2).all(|i| (d[0] * self.axes[i][0] + d[1] * self.axes[i][1]).abs() <= self.half[i])
    }
}

// ---- towns ---------------------------------------------------------------

pub const GROUND_COLOR: ColorDist = ColorDist::new([0.45, 0.47, 0.3], 0.06);
pub const ROAD_COLOR: ColorDist = ColorDist::new([0.4, 0.4, 0.41], 0.04);
pub const GRAY_ROOF: ColorDist = ColorDist::new([0.47, 0.47, 0.49], 0.05);
pub const RED_ROOF: ColorDist = ColorDist::new([0.64, 0.27, 0.2], 0.05);
pub const WALL_COLOR: ColorDist = ColorDist::new([0.78, 0.74, 0.66], 0.05);
pub const CROWN_COLOR: ColorDist = ColorDist::new([0.24, 0.4, 0.17], 0.06);
pub const POLE_COLOR: ColorDist = ColorDist::new([0.6, 0.6, 0.62], 0.04);
const CAR_COLORS: [[f64; 3]; 5] = [[0.75, 0.1, 0.1], [0.15, 0.2, 0.6], [0.9, 0.9, 0.9], [0.1, 0.1, 0.1], [0.5, 0.55, 0.6]];

/// Random town layout: a street grid with buildings in the blocks, trees,
/// parked cars and poles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TownSpec {
    /// Side length of the square scene in meters.
    pub size: f64,
    pub density: f64,
    #[serde(default = "default_noise")]
    pub noise: f64,
    /// Terrain slope `[dz/dx, dz/dy]`.
    #[serde(default)]
    pub slope: [f64; 2],
    /// Share of gabled roofs.
    #[serde(default = "default_half")]
    pub gabled: f64,
    /// Share of red roofs; the rest are gray.
    #[serde(default = "default_half")]
    pub red_roofs: f64,
    #[serde(default = "default_block")]
    pub block: f64,
}

fn default_noise() -> f64 {
    0.03
}

fn default_half() -> f64 {
    0.5
}

fn default_block() -> f64 {
    30.0
}

impl TownSpec {
    pub fn new(size: f64, density: f64) -> Self {
        TownSpec {
            size,
            density,
            noise: default_noise(),
            slope: [0.0; 2],
            gabled: 0.5,
            red_roofs: 0.5,
            block: default_block(),
        }
    }

    /// Primitives of one layout; the layout is random per seed.
    pub fn expand(&self, seed: u64) -> Result<Vec<Primitive>> {
        if !(self.size > 0.0 && self.block > 8.0 && self.density > 0.0) {
            return Err(Error::Recipe("town needs positive size, density and a block over 8 m".into()));
        }
        if !((0.0..=1.0).contains(&self.gabled) && (0.0..=1.0).contains(&self.red_roofs)) {
            return Err(Error::Recipe("town `gabled` and `red_roofs` are shares in [0, 1]".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX);
        let (dens, noise, slope) = (self.density, self.noise, self.slope);
        let gz = |x: f64, y: f64| ground_z(0.0, slope, x, y);
        let mut out = vec![Primitive::new(
            Shape::Plane { origin: [0.0, 0.0], size: [self.size, self.size], z: 0.0, slope },
            dens,
            noise,
            GROUND_COLOR,
        )];
        let road_w = 7.0;
        // at least one street each way, so every town has roads, cars and poles
        let n_blocks = (self.size / self.block).round().max(2.0) as usize;
        let pitch = self.size / n_blocks as f64;
        // streets run along block boundaries, one per interior line
        let streets: Vec<f64> = (1..n_blocks).map(|i| i as f64 * pitch).collect();
        for &s in &streets {
            for horizontal in [false, true] {
                let (from, to) = if horizontal { ([0.0, s], [self.size, s]) } else { ([s, 0.0], [s, self.size]) };
                out.push(Primitive::new(
                    Shape::Road { from, to, width: road_w, z: 0.02, slope },
                    dens,
                    noise,
                    ROAD_COLOR,
                ));
            }
        }
        // roof colors are stratified: a share strictly inside (0, 1) gives both colors
        let n_cells = n_blocks * n_blocks;
        let mut n_red = (self.red_roofs * n_cells as f64).round() as usize;
        if self.red_roofs > 0.0 && self.red_roofs < 1.0 {
            n_red = n_red.clamp(1, n_cells - 1);
        }
        let mut red: Vec<bool> = (0..n_cells).map(|i| i < n_red).collect();
        red.shuffle(&mut rng);
        for bx in 0..n_blocks {
            for by in 0..n_blocks {
                let red = red[bx * n_blocks + by];
                let x0 = bx as f64 * pitch + if bx > 0 { road_w / 2.0 } else { 0.0 } + 1.5;
                let y0 = by as f64 * pitch + if by > 0 { road_w / 2.0 } else { 0.0 } + 1.5;
                let x1 = (bx + 1) as f64 * pitch - if bx + 1 < n_blocks { road_w / 2.0 } else { 0.0 } - 1.5;
                let y1 = (by + 1) as f64 * pitch - if by + 1 < n_blocks { road_w / 2.0 } else { 0.0 } - 1.5;
                self.fill_block(&mut rng, [x0, y0, x1, y1], red, &gz, &mut out);
            }
        }
        // parked cars and poles along the streets
        for &s in &streets {
            for horizontal in [false, true] {
                let mut t = rng.random_range(2.0..8.0);
                while t < self.size - 5.0 {
                    let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    let off = s + side * (road_w / 2.0 - 1.3);
                    let (c, yaw) = if horizontal { ([t, off], 0.0) } else { ([off, t], PI / 2.0) };
                    let near_cross = streets.iter().any(|&q| (q - t).abs() < road_w);
                    if !near_cross && rng.random_bool(0.6) {
                        let rgb = CAR_COLORS[rng.random_range(0..CAR_COLORS.len())];
                        out.push(Primitive::new(
                            Shape::Car { center: c, size: [4.4, 1.8, 1.5], yaw, base_z: gz(c[0], c[1]) + 0.3 },
                            dens,
                            noise,
                            ColorDist::new(rgb, 0.05),
                        ));
                    }
                    t += rng.random_range(5.5..9.0);
                }
                let mut t = rng.random_range(4.0..12.0);
                while t < self.size - 2.0 {
                    let off = s + road_w / 2.0 + 0.6;
                    let b = if horizontal { [t, off] } else { [off, t] };
                    if !streets.iter().any(|&q| (q - t).abs() < road_w) {
                        out.push(Primitive::new(
                            Shape::Pole { base: [b[0], b[1], gz(b[0], b[1])], height: 6.0, radius: 0.12 },
                            dens * 3.0,
                            noise,
                            POLE_COLOR,
                        ));
                    }
                    t += rng.random_range(15.0..25.0);
                }
            }
        }
        Ok(out)
    }

    fn fill_block(&self, rng: &mut ChaCha8Rng, r: [f64; 4], red: bool, gz: &dyn Fn(f64, f64) -> f64, out: &mut Vec<Primitive>) {
        let [x0, y0, x1, y1] = r;
        let (w, d) = (x1 - x0, y1 - y0);
        if w < 6.0 || d < 6.0 {
            return;
        }
        // one building in a random corner region, trees in the rest
        let bw = rng.random_range(0.35..0.65) * w;
        let bd = rng.random_range(0.35..0.65) * d;
        let bx = x0 + rng.random_range(0.0..(w - bw));
        let by = y0 + rng.random_range(0.0..(d - bd));
        let base = gz(bx + bw / 2.0, by + bd / 2.0);
        let gabled = rng.random_bool(self.gabled);
        let color = if red { RED_ROOF } else { GRAY_ROOF };
        out.push(Primitive {
            shape: Shape::Building {
                origin: [bx, by],
                size: [bw, bd],
                base_z: base,
                height: rng.random_range(4.0..12.0),
                roof: if gabled { Roof::Gabled } else { Roof::Flat },
                ridge: if gabled { 0.35 * bw.min(bd) } else { 0.0 },
                wall_color: Some(WALL_COLOR),
            },
            class: None,
            density: self.density,
            noise: self.noise,
            color,
        });
        let n_trees = rng.random_range(1..4);
        for _ in 0..n_trees {
            for _attempt in 0..20 {
                let rx = rng.random_range(1.5..3.0);
                let cx = rng.random_range(x0 + rx..x1 - rx);
                let cy = rng.random_range(y0 + rx..y1 - rx);
                let clear = cx + rx < bx - 0.5 || cx - rx > bx + bw + 0.5 || cy + rx < by - 0.5 || cy - rx > by + bd + 0.5;
                if clear {
                    let rz = rng.random_range(1.5..3.0);
                    let cz = gz(cx, cy) + rng.random_range(3.0..6.0) + rz;
                    out.push(Primitive::new(
                        Shape::Crown { center: [cx, cy, cz], radii: [rx, rx * rng.random_range(0.8..1.2), rz] },
                        self.density,
                        self.noise * 3.0,
                        CROWN_COLOR,
                    ));
                    break;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane(density: f64) -> Recipe {
        Recipe {
            name: "plane".into(),
            cull_covered: false,
            town: None,
            primitives: vec![Primitive::new(
                Shape::Plane { origin: [0.0, 0.0], size: [10.0, 10.0], z: 0.0, slope: [0.0, 0.0] },
                density,
                0.0,
                GROUND_COLOR,
            )],
        }
    }

    #[test]
    fn plane_count_is_area_times_density() {
        let c = synth_scene(&plane(100.0), 1).unwrap();
        assert_eq!(c.len(), 10_000);
        assert_eq!(c.class_counts()[0], 10_000);
    }

    #[test]
    fn zero_density_is_rejected() {
        assert!(synth_scene(&plane(0.0), 1).is_err());
    }

    #[test]
    fn same_seed_same_cloud() {
        let r = Recipe {
            town: Some(TownSpec::new(60.0, 5.0)),
            ..plane(3.0)
        };
        assert_eq!(synth_scene(&r, 4).unwrap(), synth_scene(&r, 4).unwrap());
        assert_ne!(synth_scene(&r, 4).unwrap(), synth_scene(&r, 5).unwrap());
    }

    #[test]
    fn building_roof_height() {
        let mut r = plane(20.0);
        r.primitives.push(Primitive::new(
            Shape::Building {
                origin: [2.0, 2.0],
                size: [5.0, 4.0],
                base_z: 0.0,
                height: 5.0,
                roof: Roof::Flat,
                ridge: 0.0,
                wall_color: None,
            },
            50.0,
            0.02,
            RED_ROOF,
        ));
        let c = synth_scene(&r, 3).unwrap();
        let zmax = c
            .points()
            .iter()
            .filter(|p| p.label == Some(Class::Building))
            .map(|p| p.pos[2])
            .fold(f64::MIN, f64::max);
        assert!((zmax - 5.0).abs() < 5.0 * 0.02, "{zmax}");
    }

    #[test]
    fn recipe_toml_round_trip() {
        let text = r#"
            name = "demo"
            [[primitive]]
            kind = "plane"
            origin = [0, 0]
            size = [10, 10]
            density = 2
            color = { rgb = [0.5, 0.5, 0.5] }

            [[primitive]]
            kind = "building"
            origin = [1, 1]
            size = [4, 6]
            height = 5
            roof = "gabled"
            ridge = 1.5
            density = 4
            noise = 0.01
            class = "building"
            color = { rgb = [0.6, 0.2, 0.2], jitter = 0.05 }
        "#;
        let r = Recipe::parse(text).unwrap();
        assert_eq!(r.primitives.len(), 2);
        let text2 = r.to_toml();
        assert_eq!(Recipe::parse(&text2).unwrap_or_else(|e| panic!("{e}\n{text2}")), r);
        assert!(Recipe::parse("[[primitive]]\nkind = \"blob\"\n").is_err());
    }

    #[test]
    fn town_has_every_class() {
        let r = Recipe {
            town: Some(TownSpec::new(70.0, 4.0)),
            ..Recipe::parse("").unwrap()
        };
        let c = synth_scene(&r, 11).unwrap();
        assert!(c.class_counts().iter().all(|&n| n > 0), "{:?}", c.class_counts());
    }

    #[test]
    fn small_towns_have_streets_and_both_roof_colors() {
        for (size, seed) in [(40.0, 1), (40.0, 2), (48.0, 3), (48.0, 105)] {
            let r = Recipe {
                town: Some(TownSpec::new(size, 3.0)),
                ..Recipe::parse("").unwrap()
            };
            let c = synth_scene(&r, seed).unwrap();
            assert!(c.class_counts().iter().all(|&n| n > 0), "{size} {seed}: {:?}", c.class_counts());
            let roofs = c.points().iter().filter(|p| p.label == Some(Class::Building));
            let red = roofs.clone().filter(|p| p.color[0] > 1.8 * p.color[1]).count();
            let gray = roofs.filter(|p| (p.color[0] - p.color[2]).abs() < 0.1 && p.color[2] < 0.6).count();
            assert!(red > 0 && gray > 0, "{size} {seed}: red {red} gray {gray}");
        }
        let bad = TownSpec {
            red_roofs: 1.5,
            ..TownSpec::new(40.0, 3.0)
        };
        assert!(bad.expand(0).is_err());
    }
}
