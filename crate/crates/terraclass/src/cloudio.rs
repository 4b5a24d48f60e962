//! PLY (ascii and binary little endian) and plain-text point cloud files.
//!
//! Colors are 8-bit in files and `[0, 1]` in memory. Labels live in a
//! `classification` vertex property; 255 marks an unlabeled point.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use terraclass_core::class::UNLABELED;
use terraclass_core::{Class, Point, PointCloud};

use crate::error::{Error, Location, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    PlyAscii,
    PlyBinaryLe,
    /// Whitespace separated `x y z [r g b] [label]`, `#` comments.
    XyzrgbText,
}

impl CloudFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            CloudFormat::PlyAscii => "ply_ascii",
            CloudFormat::PlyBinaryLe => "ply_binary_le",
            CloudFormat::XyzrgbText => "xyzrgb_text",
        }
    }

    /// Format implied by a file extension when writing: binary PLY for
    /// `.ply`, text otherwise.
    pub fn for_output(path: &Path) -> CloudFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("ply") => CloudFormat::PlyBinaryLe,
            _ => CloudFormat::XyzrgbText,
        }
    }

    /// Sniffs the format from the first bytes of a file.
    pub fn detect(bytes: &[u8]) -> CloudFormat {
        if !bytes.starts_with(b"ply") {
            return CloudFormat::XyzrgbText;
        }
        let head = &bytes[..bytes.len().min(256)];
        let text = String::from_utf8_lossy(head);
        if text.lines().any(|l| l.trim() == "format ascii 1.0") {
            CloudFormat::PlyAscii
        } else {
            CloudFormat::PlyBinaryLe
        }
    }
}

impl std::fmt::Display for CloudFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CloudFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ply_ascii" => Ok(CloudFormat::PlyAscii),
            "ply_binary_le" => Ok(CloudFormat::PlyBinaryLe),
            "xyzrgb_text" => Ok(CloudFormat::XyzrgbText),
            _ => Err(format!("unknown cloud format `{s}` (expected ply_ascii, ply_binary_le or xyzrgb_text)")),
        }
    }
}

pub fn read_cloud(path: &Path, format: CloudFormat) -> Result<PointCloud> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_cloud(&bytes, format, path)
}

/// Reads a cloud whose format is sniffed from its content.
pub fn read_cloud_auto(path: &Path) -> Result<PointCloud> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_cloud(&bytes, CloudFormat::detect(&bytes), path)
}

/// Parses file content; `path` only labels errors.
pub fn parse_cloud(bytes: &[u8], format: CloudFormat, path: &Path) -> Result<PointCloud> {
    match format {
        CloudFormat::XyzrgbText => parse_text(bytes, path),
        CloudFormat::PlyAscii | CloudFormat::PlyBinaryLe => {
            let header = parse_header(bytes, path)?;
            if header.format != format {
                return Err(Error::parse(
                    path,
                    Location::Line(2),
                    format!("file is {} but {} was requested", header.format, format),
                ));
            }
            match format {
                CloudFormat::PlyAscii => parse_ply_ascii(bytes, &header, path),
                _ => parse_ply_binary(bytes, &header, path),
            }
        }
    }
}

pub fn write_cloud(cloud: &PointCloud, path: &Path, format: CloudFormat) -> Result<()> {
    let bytes = encode_cloud(cloud, format)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes the cloud with every labeled point colored by its class palette
/// entry. Unlabeled points keep their color (gray when the cloud has none).
pub fn write_colorized(cloud: &PointCloud, path: &Path, format: CloudFormat) -> Result<()> {
    write_cloud(&colorize(cloud)?, path, format)
}

pub fn colorize(cloud: &PointCloud) -> Result<PointCloud> {
    if !cloud.has_labels() {
        return Err(terraclass_core::Error::MissingLabels.into());
    }
    let has_color = cloud.has_color();
    let points = cloud
        .points()
        .iter()
        .map(|p| {
            let color = match p.label {
                Some(c) => c.palette().map(|v| v as f64 / 255.0),
                None if has_color => p.color,
                None => [0.5; 3],
            };
            Point { color, ..*p }
        })
        .collect();
    Ok(PointCloud::new(points, true, true)?)
}

pub fn encode_cloud(cloud: &PointCloud, format: CloudFormat) -> Result<Vec<u8>> {
    if cloud.is_empty() {
        return Err(terraclass_core::Error::EmptyCloud.into());
    }
    Ok(match format {
        CloudFormat::XyzrgbText => encode_text(cloud),
        CloudFormat::PlyAscii => encode_ply(cloud, false),
        CloudFormat::PlyBinaryLe => encode_ply(cloud, true),
    })
}

fn to_byte(c: f64) -> u8 {
    (c * 255.0).round().clamp(0.0, 255.0) as u8
}

fn label_byte(p: &Point) -> u8 {
    p.label.map_or(UNLABELED, Class::id)
}

fn encode_text(cloud: &PointCloud) -> Vec<u8> {
    let mut s = String::with_capacity(cloud.len() * 48);
    for p in cloud.points() {
        let _ = write!(s, "{} {} {}", p.pos[0], p.pos[1], p.pos[2]);
        if cloud.has_color() {
            let [r, g, b] = p.color.map(to_byte);
            let _ = write!(s, " {r} {g} {b}");
        }
        if cloud.has_labels() {
            let _ = write!(s, " {}", label_byte(p));
        }
        s.push('\n');
    }
    s.into_bytes()
}

fn encode_ply(cloud: &PointCloud, binary: bool) -> Vec<u8> {
    let mut head = String::from("ply\n");
    head.push_str(if binary {
        "format binary_little_endian 1.0\n"
    } else {
        "format ascii 1.0\n"
    });
    let _ = writeln!(head, "element vertex {}", cloud.len());
    for c in ["x", "y", "z"] {
        let _ = writeln!(head, "property double {c}");
    }
    if cloud.has_color() {
        for c in ["red", "green", "blue"] {
            let _ = writeln!(head, "property uchar {c}");
        }
    }
    if cloud.has_labels() {
        head.push_str("property uchar classification\n");
    }
    head.push_str("end_header\n");
    let mut out = head.into_bytes();
    if !binary {
        out.extend(encode_text(cloud));
        return out;
    }
    for p in cloud.points() {
        for v in p.pos {
            out.extend_from_slice(&v.to_le_bytes());
        }
        if cloud.has_color() {
            out.extend(p.color.map(to_byte));
        }
        if cloud.has_labels() {
            out.push(label_byte(p));
        }
    }
    out
}

// ---- text ----------------------------------------------------------------

fn parse_text(bytes: &[u8], path: &Path) -> Result<PointCloud> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        Error::parse(path, Location::Byte(e.valid_up_to() as u64), "file is not valid UTF-8")
    })?;
    let mut points = Vec::new();
    let mut width = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let at = Location::Line(line_no);
        let fields: Vec<&str> = line.split_whitespace().collect();
        if !matches!(fields.len(), 3 | 4 | 6 | 7) {
            return Err(Error::parse(
                path,
                at,
                format!("expected 3, 4, 6 or 7 fields, found {}", fields.len()),
            ));
        }
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(Error::parse(
                    path,
                    at,
                    format!("{} fields after earlier lines with {w}", fields.len()),
                ))
            }
            _ => {}
        }
        let mut pos = [0.0; 3];
        for (a, f) in pos.iter_mut().zip(&fields) {
            *a = parse_coord(f).ok_or_else(|| Error::parse(path, at, format!("bad coordinate `{f}`")))?;
        }
        let mut p = Point::new(pos);
        if fields.len() >= 6 {
            for (c, f) in fields[3..6].iter().enumerate() {
                let v: u8 = f
                    .parse()
                    .map_err(|_| Error::parse(path, at, format!("bad color `{f}` (expected 0..255)")))?;
                p.color[c] = v as f64 / 255.0;
            }
        }
        if fields.len() % 3 == 1 {
            let f = fields[fields.len() - 1];
            let id: u8 = f
                .parse()
                .map_err(|_| Error::parse(path, at, format!("bad label `{f}`")))?;
            p.label = decode_label(id).map_err(|m| Error::parse(path, at, m))?;
        }
        points.push(p);
    }
    let Some(width) = width else {
        return Err(terraclass_core::Error::EmptyCloud.into());
    };
    Ok(PointCloud::new(points, width >= 6, width % 3 == 1)?)
}

fn parse_coord(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn decode_label(id: u8) -> std::result::Result<Option<Class>, String> {
    if id == UNLABELED {
        return Ok(None);
    }
    Class::from_id(id)
        .map(Some)
        .ok_or_else(|| format!("classification {id} is neither a class id (0..5) nor 255"))
}

// ---- PLY -----------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Scalar> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn is_integer(self) -> bool {
        !matches!(self, Scalar::F32 | Scalar::F64)
    }

    fn decode_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }

    fn parse_text(self, s: &str) -> Option<f64> {
        if self.is_integer() {
            let v: i64 = s.parse().ok()?;
            let (lo, hi) = match self {
                Scalar::I8 => (i8::MIN as i64, i8::MAX as i64),
                Scalar::U8 => (0, u8::MAX as i64),
                Scalar::I16 => (i16::MIN as i64, i16::MAX as i64),
                Scalar::U16 => (0, u16::MAX as i64),
                Scalar::I32 => (i32::MIN as i64, i32::MAX as i64),
                _ => (0, u32::MAX as i64),
            };
            (lo..=hi).contains(&v).then_some(v as f64)
        } else {
            s.parse().ok()
        }
    }
}

#[derive(Debug, Clone)]
enum PropKind {
    Scalar(Scalar),
    List(Scalar, Scalar),
}

#[derive(Debug, Clone)]
struct Property {
    name: String,
    kind: PropKind,
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

#[derive(Debug)]
struct Header {
    format: CloudFormat,
    elements: Vec<Element>,
    body: usize,
    body_line: usize,
}

/// Column indices of the vertex properties we use.
struct VertexLayout {
    xyz: [usize; 3],
    rgb: Option<[usize; 3]>,
    label: Option<usize>,
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<Header> {
    let mut offset = 0usize;
    let mut line_no = 0usize;
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let at = Location::Line(line_no + 1);
        let Some(len) = bytes[offset..].iter().position(|&b| b == b'\n') else {
            return Err(Error::parse(path, at, "header ends without end_header"));
        };
        let line = std::str::from_utf8(&bytes[offset..offset + len])
            .map_err(|_| Error::parse(path, at, "header is not valid UTF-8"))?
            .trim_end_matches('\r');
        offset += len + 1;
        line_no += 1;
        let words: Vec<&str> = line.split_whitespace().collect();
        if line_no == 1 {
            if line != "ply" {
                return Err(Error::parse(path, at, "missing `ply` magic"));
            }
            continue;
        }
        match words.as_slice() {
            [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", f, "1.0"] => {
                format = Some(match *f {
                    "ascii" => CloudFormat::PlyAscii,
                    "binary_little_endian" => CloudFormat::PlyBinaryLe,
                    _ => return Err(Error::parse(path, at, format!("unsupported PLY format `{f}`"))),
                })
            }
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| Error::parse(path, at, format!("bad element count `{count}`")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            ["property", "list", ct, it, name] => {
                let ty = |t: &str| {
                    Scalar::parse(t)
                        .ok_or_else(|| Error::parse(path, at, format!("unknown property type `{t}`")))
                };
                let kind = PropKind::List(ty(ct)?, ty(it)?);
                push_prop(&mut elements, name, kind).map_err(|m| Error::parse(path, at, m))?;
            }
            ["property", t, name] => {
                let s = Scalar::parse(t).ok_or_else(|| Error::parse(path, at, format!("unknown property type `{t}`")))?;
                push_prop(&mut elements, name, PropKind::Scalar(s)).map_err(|m| Error::parse(path, at, m))?;
            }
            ["end_header"] => break,
            _ => return Err(Error::parse(path, at, format!("malformed header line `{line}`"))),
        }
    }
    let format = format.ok_or_else(|| Error::parse(path, Location::Line(2), "missing format line"))?;
    Ok(Header {
        format,
        elements,
        body: offset,
        body_line: line_no + 1,
    })
}

fn push_prop(elements: &mut [Element], name: &str, kind: PropKind) -> std::result::Result<(), String> {
    let e = elements
        .last_mut()
        .ok_or_else(|| "property before any element".to_string())?;
    if e.props.iter().any(|p| p.name == name) {
        return Err(format!("duplicate property `{name}`"));
    }
    e.props.push(Property {
        name: name.to_string(),
        kind,
    });
    Ok(())
}

fn vertex_layout(e: &Element, path: &Path) -> Result<VertexLayout> {
    let find = |name: &str| -> Result<Option<usize>> {
        match e.props.iter().position(|p| p.name == name) {
            None => Ok(None),
            Some(i) => match e.props[i].kind {
                PropKind::Scalar(_) => Ok(Some(i)),
                PropKind::List(..) => Err(Error::parse(
                    path,
                    Location::Line(1),
                    format!("vertex property `{name}` must be a scalar"),
                )),
            },
        }
    };
    let mut xyz = [0; 3];
    for (slot, n) in xyz.iter_mut().zip(["x", "y", "z"]) {
        *slot = find(n)?.ok_or_else(|| Error::parse(path, Location::Line(1), format!("vertex has no `{n}` property")))?;
    }
    let r = find("red")?;
    let g = find("green")?;
    let b = find("blue")?;
    let rgb = match (r, g, b) {
        (Some(r), Some(g), Some(b)) => {
            for i in [r, g, b] {
                if !matches!(e.props[i].kind, PropKind::Scalar(Scalar::U8)) {
                    return Err(Error::parse(
                        path,
                        Location::Line(1),
                        format!("color property `{}` must be uchar", e.props[i].name),
                    ));
                }
            }
            Some([r, g, b])
        }
        (None, None, None) => None,
        _ => {
            return Err(Error::parse(
                path,
                Location::Line(1),
                "vertex has only some of red, green, blue",
            ))
        }
    };
    let label = find("classification")?;
    if let Some(i) = label {
        if !matches!(e.props[i].kind, PropKind::Scalar(s) if s.is_integer()) {
            return Err(Error::parse(path, Location::Line(1), "classification must be an integer property"));
        }
    }
    Ok(VertexLayout { xyz, rgb, label })
}

fn vertex_element<'h>(header: &'h Header, path: &Path) -> Result<(usize, &'h Element, VertexLayout)> {
    let i = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::parse(path, Location::Line(1), "no vertex element"))?;
    let e = &header.elements[i];
    if e.count == 0 {
        return Err(terraclass_core::Error::EmptyCloud.into());
    }
    Ok((i, e, vertex_layout(e, path)?))
}

/// Builds a point from one row of vertex property values.
fn make_point(values: &[f64], layout: &VertexLayout) -> std::result::Result<Point, String> {
    let pos = layout.xyz.map(|i| values[i]);
    if pos.iter().any(|v| !v.is_finite()) {
        return Err("non-finite coordinate".into());
    }
    let mut p = Point::new(pos);
    if let Some(rgb) = layout.rgb {
        p.color = rgb.map(|i| values[i] / 255.0);
    }
    if let Some(l) = layout.label {
        let v = values[l];
        if !(0.0..=255.0).contains(&v) {
            return Err(format!("classification {v} is neither a class id (0..5) nor 255"));
        }
        p.label = decode_label(v as u8)?;
    }
    Ok(p)
}

fn parse_ply_ascii(bytes: &[u8], header: &Header, path: &Path) -> Result<PointCloud> {
    let (vi, ve, layout) = vertex_element(header, path)?;
    let body = std::str::from_utf8(&bytes[header.body..])
        .map_err(|e| Error::parse(path, Location::Byte((header.body + e.valid_up_to()) as u64), "body is not valid UTF-8"))?;
    let mut lines = body.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let mut points = Vec::with_capacity(ve.count);
    let mut values = Vec::new();
    for (ei, e) in header.elements.iter().enumerate() {
        for _ in 0..e.count {
            let Some((i, line)) = lines.next() else {
                return Err(Error::parse(
                    path,
                    Location::Line(header.body_line + body.lines().count()),
                    format!("truncated payload: fewer than {} `{}` rows", e.count, e.name),
                ));
            };
            let at = Location::Line(header.body_line + i);
            let mut tokens = line.split_whitespace();
            values.clear();
            let mut next = |t: Scalar| -> Result<f64> {
                let tok = tokens.next().ok_or_else(|| Error::parse(path, at, "too few values"))?;
                t.parse_text(tok)
                    .ok_or_else(|| Error::parse(path, at, format!("bad {t:?} value `{tok}`")))
            };
            for p in &e.props {
                match p.kind {
                    PropKind::Scalar(t) => values.push(next(t)?),
                    PropKind::List(ct, it) => {
                        let n = next(ct)?;
                        for _ in 0..n as usize {
                            next(it)?;
                        }
                        values.push(n);
                    }
                }
            }
            if tokens.next().is_some() {
                return Err(Error::parse(path, at, "too many values"));
            }
            if ei == vi {
                points.push(make_point(&values, &layout).map_err(|m| Error::parse(path, at, m))?);
            }
        }
    }
    Ok(PointCloud::new(points, layout.rgb.is_some(), layout.label.is_some())?)
}

fn parse_ply_binary(bytes: &[u8], header: &Header, path: &Path) -> Result<PointCloud> {
    let (vi, ve, layout) = vertex_element(header, path)?;
    let mut off = header.body;
    let mut points = Vec::with_capacity(ve.count);
    let mut values = Vec::new();
    let take = |off: &mut usize, t: Scalar| -> Result<f64> {
        let end = *off + t.size();
        if end > bytes.len() {
            return Err(Error::parse(
                path,
                Location::Byte(*off as u64),
                "truncated payload",
            ));
        }
        let v = t.decode_le(&bytes[*off..end]);
        *off = end;
        Ok(v)
    };
    for (ei, e) in header.elements.iter().enumerate() {
        for _ in 0..e.count {
            let start = off;
            values.clear();
            for p in &e.props {
                match p.kind {
                    PropKind::Scalar(t) => values.push(take(&mut off, t)?),
                    PropKind::List(ct, it) => {
                        let n = take(&mut off, ct)?;
                        if n < 0.0 {
                            return Err(Error::parse(path, Location::Byte(start as u64), "negative list length"));
                        }
                        let skip = n as usize * it.size();
                        if off + skip > bytes.len() {
                            return Err(Error::parse(path, Location::Byte(off as u64), "truncated payload"));
                        }
                        off += skip;
                        values.push(n);
                    }
                }
            }
            if ei == vi {
                points.push(make_point(&values, &layout).map_err(|m| Error::parse(path, Location::Byte(start as u64), m))?);
            }
        }
    }
    if off != bytes.len() {
        return Err(Error::parse(
            path,
            Location::Byte(off as u64),
            format!("{} trailing bytes after the last element", bytes.len() - off),
        ));
    }
    Ok(PointCloud::new(points, layout.rgb.is_some(), layout.label.is_some())?)
}
