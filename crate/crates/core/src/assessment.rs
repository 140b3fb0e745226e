//! Accuracy assessment against reference EC polygons.
//!
//! The protocol draws a fixed number of reference samples inside the EC polygons and a
//! fixed number outside them, looks up the classified mask at each sample, and reports
//! user's, producer's and overall accuracy plus F1.
//!
//! Pixels are unit squares: pixel `(col, row)` covers `[col, col+1] × [row, row+1]` in
//! pixel coordinates. A pixel whose open footprint is crossed by a polygon edge is mixed
//! and belongs to neither stratum.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::raster::{BinaryMask, MaskValue};
use crate::{Error, Result};

/// Default per-image sample counts for the EC and background strata.
pub const DEFAULT_N_EC: usize = 300;
pub const DEFAULT_N_BG: usize = 450;

pub type Point = (f64, f64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoordinateSpace {
    Pixel,
    Geo,
}

/// A simple closed polygon ring. The closing vertex is not repeated internally.
#[derive(Debug, Clone, PartialEq)]
pub struct Ring {
    vertices: Vec<Point>,
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

fn within_box(p: Point, a: Point, b: Point) -> bool {
    p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

fn on_segment(p: Point, a: Point, b: Point) -> bool {
    cross(a, b, p) == 0.0 && within_box(p, a, b)
}

fn segments_touch(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && within_box(a, c, d))
        || (d2 == 0.0 && within_box(b, c, d))
        || (d3 == 0.0 && within_box(c, a, b))
        || (d4 == 0.0 && within_box(d, a, b))
}

impl Ring {
    /// Validates a closed ring given as a vertex list whose last vertex repeats the first.
    pub fn new(mut points: Vec<Point>) -> Result<Self> {
        if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
            return Err(Error::DegenerateRing("non-finite coordinate".into()));
        }
        if points.len() < 4 || points.first() != points.last() {
            return Err(Error::DegenerateRing(format!(
                "a ring needs at least 3 vertices and must be closed (first == last); got {} points",
                points.len()
            )));
        }
        points.pop();
        let ring = Self { vertices: points };
        if ring.signed_area() == 0.0 {
            return Err(Error::DegenerateRing("ring has zero area".into()));
        }
        let n = ring.vertices.len();
        for i in 0..n {
            for j in i + 1..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                let (a, b) = ring.edge(i);
                let (c, d) = ring.edge(j);
                if !adjacent && segments_touch(a, b, c, d) {
                    return Err(Error::DegenerateRing(format!(
                        "ring self-intersects between edges {i} and {j}"
                    )));
                }
            }
        }
        Ok(ring)
    }

    /// Convenience for axis-aligned rectangles `[x0, x1] × [y0, y1]`.
    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        Self::new(vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)])
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    fn edge(&self, i: usize) -> (Point, Point) {
        (
            self.vertices[i],
            self.vertices[(i + 1) % self.vertices.len()],
        )
    }

    fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        (0..self.vertices.len()).map(|i| self.edge(i))
    }

    fn signed_area(&self) -> f64 {
        0.5 * self
            .edges()
            .map(|(a, b)| a.0 * b.1 - b.0 * a.1)
            .sum::<f64>()
    }

    fn bbox(&self) -> (Point, Point) {
        let mut lo = (f64::INFINITY, f64::INFINITY);
        let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &(x, y) in &self.vertices {
            lo = (lo.0.min(x), lo.1.min(y));
            hi = (hi.0.max(x), hi.1.max(y));
        }
        (lo, hi)
    }

    fn map(&self, f: impl Fn(Point) -> Point) -> Result<Self> {
        let mut pts: Vec<Point> = self.vertices.iter().map(|&p| f(p)).collect();
        pts.push(pts[0]);
        Self::new(pts)
    }
}

/// Even-odd ray casting. Points on the ring boundary are outside.
pub fn point_in_polygon(p: Point, ring: &Ring) -> bool {
    let mut inside = false;
    for (a, b) in ring.edges() {
        if on_segment(p, a, b) {
            return false;
        }
        if (a.1 > p.1) != (b.1 > p.1) {
            let x = a.0 + (p.1 - a.1) * (b.0 - a.0) / (b.1 - a.1);
            if p.0 < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Reference EC polygons (exterior rings only).
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonSet {
    pub rings: Vec<Ring>,
    pub coordinate_space: CoordinateSpace,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PixelPolygonFile {
    coordinate_space: CoordinateSpace,
    polygons: Vec<Vec<[f64; 2]>>,
}

fn ring_from_coords(coords: &serde_json::Value) -> Result<Ring> {
    let arr = coords
        .as_array()
        .ok_or_else(|| Error::InvalidConfig("ring is not a coordinate array".into()))?;
    let pts = arr
        .iter()
        .map(|c| match c.as_array().map(Vec::as_slice) {
            Some([x, y, ..]) => match (x.as_f64(), y.as_f64()) {
                (Some(x), Some(y)) => Ok((x, y)),
                _ => Err(Error::InvalidConfig("non-numeric coordinate".into())),
            },
            _ => Err(Error::InvalidConfig("coordinate needs two numbers".into())),
        })
        .collect::<Result<Vec<_>>>()?;
    Ring::new(pts)
}

fn polygon_rings(coords: &serde_json::Value, out: &mut Vec<Ring>) -> Result<()> {
    let rings = coords
        .as_array()
        .ok_or_else(|| Error::InvalidConfig("polygon coordinates must be an array".into()))?;
    match rings.as_slice() {
        [] => Err(Error::InvalidConfig("polygon without rings".into())),
        [exterior] => {
            out.push(ring_from_coords(exterior)?);
            Ok(())
        }
        _ => Err(Error::InvalidConfig(
            "polygons with holes are not supported; split them into hole-free parts".into(),
        )),
    }
}

fn collect_geometry(v: &serde_json::Value, out: &mut Vec<Ring>) -> Result<()> {
    let kind = v.get("type").and_then(|t| t.as_str()).unwrap_or_default();
    match kind {
        "FeatureCollection" => {
            for f in v
                .get("features")
                .and_then(|f| f.as_array())
                .into_iter()
                .flatten()
            {
                collect_geometry(f, out)?;
            }
            Ok(())
        }
        "Feature" => match v.get("geometry") {
            Some(g) if !g.is_null() => collect_geometry(g, out),
            _ => Ok(()),
        },
        "GeometryCollection" => {
            for g in v
                .get("geometries")
                .and_then(|g| g.as_array())
                .into_iter()
                .flatten()
            {
                collect_geometry(g, out)?;
            }
            Ok(())
        }
        "Polygon" => polygon_rings(&v["coordinates"], out),
        "MultiPolygon" => {
            for poly in v["coordinates"].as_array().into_iter().flatten() {
                polygon_rings(poly, out)?;
            }
            Ok(())
        }
        other => Err(Error::InvalidConfig(format!(
            "unsupported GeoJSON type {other:?}; expected polygons"
        ))),
    }
}

impl PolygonSet {
    pub fn pixel(rings: Vec<Ring>) -> Self {
        Self {
            rings,
            coordinate_space: CoordinateSpace::Pixel,
        }
    }

    /// Parses GeoJSON (geographic coordinates) or the pixel-space form
    /// `{"coordinate_space": "pixel", "polygons": [[[x, y], ...], ...]}`.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(s)
            .map_err(|e| Error::InvalidConfig(format!("polygon file is not JSON: {e}")))?;
        if v.get("type").is_some() {
            let mut rings = Vec::new();
            collect_geometry(&v, &mut rings)?;
            return Ok(Self {
                rings,
                coordinate_space: CoordinateSpace::Geo,
            });
        }
        let f: PixelPolygonFile = serde_json::from_value(v)
            .map_err(|e| Error::InvalidConfig(format!("bad polygon file: {e}")))?;
        let rings = f
            .polygons
            .into_iter()
            .map(|r| Ring::new(r.into_iter().map(|[x, y]| (x, y)).collect()))
            .collect::<Result<_>>()?;
        Ok(Self {
            rings,
            coordinate_space: f.coordinate_space,
        })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&s)
    }

    /// Converts to pixel coordinates through a GDAL-ordered affine transform.
    pub fn to_pixel_space(&self, geo_transform: Option<&[f64; 6]>) -> Result<Self> {
        if self.coordinate_space == CoordinateSpace::Pixel {
            return Ok(self.clone());
        }
        let gt = geo_transform.ok_or_else(|| {
            Error::InvalidConfig("geographic polygons need a georeferenced raster".into())
        })?;
        let det = gt[1] * gt[5] - gt[2] * gt[4];
        if det == 0.0 || !det.is_finite() {
            return Err(Error::InvalidConfig(
                "geo transform is not invertible".into(),
            ));
        }
        let inv = |(x, y): Point| {
            let (dx, dy) = (x - gt[0], y - gt[3]);
            (
                (gt[5] * dx - gt[2] * dy) / det,
                (gt[1] * dy - gt[4] * dx) / det,
            )
        };
        let rings = self
            .rings
            .iter()
            .map(|r| r.map(inv))
            .collect::<Result<_>>()?;
        Ok(Self::pixel(rings))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Truth {
    Ec,
    Background,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SamplePoint {
    pub col: usize,
    pub row: usize,
    pub truth: Truth,
}

impl SamplePoint {
    pub fn center(&self) -> Point {
        (self.col as f64 + 0.5, self.row as f64 + 0.5)
    }
}

/// Candidate pixels per stratum, in row-major order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Strata {
    pub ec: Vec<(usize, usize)>,
    pub background: Vec<(usize, usize)>,
    /// Mixed pixels excluded from both strata.
    pub boundary: usize,
}

/// Whether segment `a→b` passes through the open unit square at `(col, row)`.
fn crosses_open_pixel(a: Point, b: Point, col: usize, row: usize) -> bool {
    let (x0, y0) = (col as f64, row as f64);
    let (x1, y1) = (x0 + 1.0, y0 + 1.0);
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (p, q) in [
        (-dx, a.0 - x0),
        (dx, x1 - a.0),
        (-dy, a.1 - y0),
        (dy, y1 - a.1),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return false;
            }
        } else {
            let t = q / p;
            if p < 0.0 {
                t0 = t0.max(t);
            } else {
                t1 = t1.min(t);
            }
        }
    }
    if t0 > t1 {
        return false;
    }
    // the clipped chord touches the open interior iff its midpoint does
    let tm = 0.5 * (t0 + t1);
    let (mx, my) = (a.0 + tm * dx, a.1 + tm * dy);
    mx > x0 && mx < x1 && my > y0 && my < y1
}

/// Marks every pixel whose open footprint is crossed by an edge of `ring`.
fn mark_boundary(ring: &Ring, width: usize, height: usize, mixed: &mut [bool]) {
    let clamp = |v: f64, n: usize| -> Option<usize> {
        if v < 0.0 {
            Some(0)
        } else if v >= n as f64 {
            n.checked_sub(1)
        } else {
            Some(v as usize)
        }
    };
    for (a, b) in ring.edges() {
        let (ylo, yhi) = (a.1.min(b.1), a.1.max(b.1));
        if yhi < 0.0 || ylo > height as f64 {
            continue;
        }
        let (Some(r0), Some(r1)) = (clamp(ylo.floor(), height), clamp(yhi.floor(), height)) else {
            continue;
        };
        for row in r0..=r1 {
            // x-extent of the edge within this row band
            let (ry0, ry1) = (row as f64, row as f64 + 1.0);
            let xs = if a.1 == b.1 {
                (a.0.min(b.0), a.0.max(b.0))
            } else {
                let at = |y: f64| a.0 + (y.clamp(ylo, yhi) - a.1) * (b.0 - a.0) / (b.1 - a.1);
                let (u, v) = (at(ry0), at(ry1));
                (u.min(v), u.max(v))
            };
            if xs.1 < 0.0 || xs.0 > width as f64 {
                continue;
            }
            let (Some(c0), Some(c1)) = (clamp(xs.0.floor(), width), clamp(xs.1.floor(), width))
            else {
                continue;
            };
            for col in c0..=c1 {
                if !mixed[row * width + col] && crosses_open_pixel(a, b, col, row) {
                    mixed[row * width + col] = true;
                }
            }
        }
    }
}

/// Marks pixels whose center is inside `ring` by scanline crossing counts.
fn mark_interior(ring: &Ring, width: usize, height: usize, inside: &mut [bool]) {
    let (lo, hi) = ring.bbox();
    if hi.1 < 0.0 || lo.1 > height as f64 {
        return;
    }
    let r0 = (lo.1 - 0.5).ceil().max(0.0) as usize;
    let r1 = ((hi.1 - 0.5).floor().max(-1.0) + 1.0).min(height as f64) as usize;
    let mut xs = Vec::new();
    for row in r0..r1 {
        let y = row as f64 + 0.5;
        xs.clear();
        for (a, b) in ring.edges() {
            if (a.1 > y) != (b.1 > y) {
                xs.push(a.0 + (y - a.1) * (b.0 - a.0) / (b.1 - a.1));
            }
        }
        xs.sort_by(f64::total_cmp);
        for span in xs.chunks_exact(2) {
            // centers strictly between the crossings
            let c0 = (span[0] - 0.5).floor() + 1.0;
            let c1 = (span[1] - 0.5).ceil() - 1.0;
            let c0 = c0.max(0.0);
            let c1 = c1.min(width as f64 - 1.0);
            if c1 < c0 {
                continue;
            }
            for col in c0 as usize..=c1 as usize {
                inside[row * width + col] = true;
            }
        }
    }
}

impl Strata {
    /// EC = pixels entirely inside some polygon; background = entirely outside all.
    pub fn from_polygons(width: usize, height: usize, polygons: &PolygonSet) -> Result<Self> {
        if polygons.coordinate_space != CoordinateSpace::Pixel {
            return Err(Error::InvalidConfig(
                "polygons must be converted to pixel space before sampling".into(),
            ));
        }
        let n = width * height;
        let mut inside = vec![false; n];
        let mut mixed = vec![false; n];
        for ring in &polygons.rings {
            mark_interior(ring, width, height, &mut inside);
            mark_boundary(ring, width, height, &mut mixed);
        }
        let mut s = Strata::default();
        for i in 0..n {
            let px = (i % width, i / width);
            if mixed[i] {
                s.boundary += 1;
            } else if inside[i] {
                s.ec.push(px);
            } else {
                s.background.push(px);
            }
        }
        Ok(s)
    }

    /// Strata from a reference raster: EC and non-EC pixels; nodata is skipped.
    pub fn from_truth_mask(truth: &BinaryMask) -> Self {
        let mut s = Strata::default();
        for ((row, col), v) in truth.values().indexed_iter() {
            match v {
                MaskValue::Ec => s.ec.push((col, row)),
                MaskValue::NonEc => s.background.push((col, row)),
                MaskValue::Nodata => {}
            }
        }
        s
    }

    /// Draws `n_ec` and `n_bg` distinct pixels with a seeded ChaCha8 generator.
    pub fn sample(&self, n_ec: usize, n_bg: usize, seed: u64) -> Result<Vec<SamplePoint>> {
        if n_ec > self.ec.len() {
            return Err(Error::InsufficientPixels {
                stratum: "EC",
                needed: n_ec,
                available: self.ec.len(),
            });
        }
        if n_bg > self.background.len() {
            return Err(Error::InsufficientPixels {
                stratum: "background",
                needed: n_bg,
                available: self.background.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n_ec + n_bg);
        for (pool, n, truth) in [
            (&self.ec, n_ec, Truth::Ec),
            (&self.background, n_bg, Truth::Background),
        ] {
            for i in rand::seq::index::sample(&mut rng, pool.len(), n) {
                let (col, row) = pool[i];
                out.push(SamplePoint { col, row, truth });
            }
        }
        Ok(out)
    }
}

/// Draws `n_ec` samples inside the polygons and `n_bg` outside, without replacement.
pub fn stratified_sample(
    dims: (usize, usize),
    polygons: &PolygonSet,
    n_ec: usize,
    n_bg: usize,
    seed: u64,
) -> Result<Vec<SamplePoint>> {
    if polygons.rings.is_empty() && n_ec > 0 {
        return Err(Error::EmptyPolygonSet(n_ec));
    }
    Strata::from_polygons(dims.0, dims.1, polygons)?.sample(n_ec, n_bg, seed)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    fn add(self, o: Self) -> Self {
        Self::new(
            self.tp + o.tp,
            self.fp + o.fp,
            self.fn_ + o.fn_,
            self.tn + o.tn,
        )
    }

    fn tally(truth_ec: bool, pred_ec: bool) -> Self {
        match (truth_ec, pred_ec) {
            (true, true) => Self::new(1, 0, 0, 0),
            (false, true) => Self::new(0, 1, 0, 0),
            (true, false) => Self::new(0, 0, 1, 0),
            (false, false) => Self::new(0, 0, 0, 1),
        }
    }
}

/// Confusion counts plus samples that fell on nodata and were left out.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evaluation {
    pub matrix: ConfusionMatrix,
    pub nodata_excluded: u64,
}

impl Evaluation {
    fn add(self, o: Self) -> Self {
        Self {
            matrix: self.matrix.add(o.matrix),
            nodata_excluded: self.nodata_excluded + o.nodata_excluded,
        }
    }
}

pub fn evaluate(mask: &BinaryMask, samples: &[SamplePoint]) -> Result<Evaluation> {
    let (w, h) = mask.dims();
    if let Some(s) = samples.iter().find(|s| s.col >= w || s.row >= h) {
        return Err(Error::OutOfBounds {
            col: s.col,
            row: s.row,
            width: w,
            height: h,
        });
    }
    Ok(samples
        .par_iter()
        .map(|s| match mask.get(s.row, s.col) {
            MaskValue::Nodata => Evaluation {
                nodata_excluded: 1,
                ..Evaluation::default()
            },
            v => Evaluation {
                matrix: ConfusionMatrix::tally(s.truth == Truth::Ec, v == MaskValue::Ec),
                nodata_excluded: 0,
            },
        })
        .reduce(Evaluation::default, Evaluation::add))
}

/// Wall-to-wall comparison of a prediction against a reference mask.
pub fn evaluate_pixels(pred: &BinaryMask, truth: &BinaryMask) -> Result<Evaluation> {
    if pred.dims() != truth.dims() {
        return Err(Error::DimensionMismatch {
            expected: truth.dims(),
            found: pred.dims(),
        });
    }
    Ok(pred
        .as_slice()
        .par_iter()
        .zip(truth.as_slice().par_iter())
        .map(|(&p, &t)| {
            if p == MaskValue::Nodata || t == MaskValue::Nodata {
                Evaluation {
                    nodata_excluded: 1,
                    ..Evaluation::default()
                }
            } else {
                Evaluation {
                    matrix: ConfusionMatrix::tally(t == MaskValue::Ec, p == MaskValue::Ec),
                    nodata_excluded: 0,
                }
            }
        })
        .reduce(Evaluation::default, Evaluation::add))
}

/// UA, PA and OA in percent; F1 as a fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    /// `None` when nothing was predicted EC.
    pub ua: Option<f64>,
    pub pa: f64,
    pub oa: f64,
    pub f1: f64,
    pub ua_defined: bool,
    pub matrix: ConfusionMatrix,
}

impl AccuracyReport {
    pub fn f1_percent(&self) -> f64 {
        self.f1 * 100.0
    }
}

pub fn metrics(m: &ConfusionMatrix) -> Result<AccuracyReport> {
    let total = m.total();
    if total == 0 {
        return Err(Error::EmptyMatrix);
    }
    if m.tp + m.fn_ == 0 {
        return Err(Error::UndefinedProducerAccuracy);
    }
    let (tp, fp, fn_, tn) = (m.tp as f64, m.fp as f64, m.fn_ as f64, m.tn as f64);
    let ua = (m.tp + m.fp > 0).then(|| tp / (tp + fp));
    let pa = tp / (tp + fn_);
    let f1 = match ua {
        Some(ua) if pa > 0.0 => 2.0 * (ua * pa) / (ua + pa),
        _ => 0.0,
    };
    Ok(AccuracyReport {
        ua: ua.map(|v| v * 100.0),
        pa: pa * 100.0,
        oa: (tp + tn) / total as f64 * 100.0,
        f1,
        ua_defined: ua.is_some(),
        matrix: *m,
    })
}
