//! Optional 3D mode: extruded building footprints and line-of-sight
//! between elevated nodes.
//!
//! Footprints are read from a GeoJSON `FeatureCollection` whose features are
//! `Polygon`s in WGS84 degrees with a numeric `height` property (meters).
//! Only the outer ring of each polygon is used. Coordinates are projected to
//! local meters with an equirectangular projection about an origin, which is
//! either given by the caller or taken as the center of the bounding box of
//! all vertices.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::geometry::{sample_fhppp, segments_intersect, GeometryError, Point2, Region, Segment};

/// Mean Earth radius (IUGG), meters.
const EARTH_RADIUS_M: f64 = 6_371_008.8;

#[derive(Debug, Error)]
pub enum TerrainError {
    #[error("cannot read footprint file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("footprint file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("footprint file: {0}")]
    Format(String),
    #[error("feature {index}: {reason}")]
    Feature { index: usize, reason: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid parameter `{name}`: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn from_2d(p: Point2, z: f64) -> Self {
        Self::new(p.x, p.y, z)
    }

    pub fn xy(self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn distance(self, other: Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingPrism {
    footprint: Vec<Point2>,
    height: f64,
    min: Point2,
    max: Point2,
}

impl BuildingPrism {
    /// Validates the footprint (≥ 3 vertices, simple) and height (> 0).
    pub fn new(footprint: Vec<Point2>, height: f64) -> Result<Self, String> {
        if footprint.len() < 3 {
            return Err(format!("footprint has {} vertices, need at least 3", footprint.len()));
        }
        if !(height > 0.0 && height.is_finite()) {
            return Err(format!("height must be positive, got {height}"));
        }
        if footprint.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err("footprint has non-finite coordinates".into());
        }
        if !is_simple_polygon(&footprint) {
            return Err("footprint polygon is self-intersecting".into());
        }
        let mut min = footprint[0];
        let mut max = footprint[0];
        for p in &footprint {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        Ok(Self {
            footprint,
            height,
            min,
            max,
        })
    }

    pub fn footprint(&self) -> &[Point2] {
        &self.footprint
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn centroid(&self) -> Point2 {
        let n = self.footprint.len() as f64;
        let (sx, sy) = self
            .footprint
            .iter()
            .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
        Point2::new(sx / n, sy / n)
    }

    fn edges(&self) -> impl Iterator<Item = Segment> + '_ {
        let n = self.footprint.len();
        (0..n).map(move |i| Segment::new(self.footprint[i], self.footprint[(i + 1) % n]))
    }

    /// Closed point-in-polygon test (boundary counts as inside).
    pub fn footprint_contains(&self, p: Point2) -> bool {
        if p.x < self.min.x - EPS || p.x > self.max.x + EPS || p.y < self.min.y - EPS || p.y > self.max.y + EPS {
            return false;
        }
        let mut inside = false;
        for e in self.edges() {
            if on_segment(p, &e) {
                return true;
            }
            let (a, b) = (e.a, e.b);
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// True iff the closed 3D segment touches the solid prism.
    pub fn blocks(&self, tx: Point3, rx: Point3) -> bool {
        if tx.z.min(rx.z) > self.height {
            return false;
        }
        if tx.x.max(rx.x) < self.min.x - EPS
            || tx.x.min(rx.x) > self.max.x + EPS
            || tx.y.max(rx.y) < self.min.y - EPS
            || tx.y.min(rx.y) > self.max.y + EPS
        {
            return false;
        }
        // The part of the segment over the footprint is a union of intervals
        // bounded by the ends and the edge crossings; height is linear along
        // the segment, so its minimum over that set sits on one of those
        // breakpoints.
        let mut breakpoints = vec![0.0, 1.0];
        let dx = rx.x - tx.x;
        let dy = rx.y - tx.y;
        for e in self.edges() {
            crossing_parameters(tx.xy(), dx, dy, &e, &mut breakpoints);
        }
        breakpoints.into_iter().any(|t| {
            let p = Point2::new(tx.x + t * dx, tx.y + t * dy);
            let z = tx.z + t * (rx.z - tx.z);
            z <= self.height + EPS && self.footprint_contains(p)
        })
    }
}

const EPS: f64 = 1e-9;

fn on_segment(p: Point2, e: &Segment) -> bool {
    let len = e.length();
    if len == 0.0 {
        return p.distance(e.a) <= EPS;
    }
    let cross = (e.b.x - e.a.x) * (p.y - e.a.y) - (e.b.y - e.a.y) * (p.x - e.a.x);
    if (cross / len).abs() > EPS {
        return false;
    }
    let dot = (p.x - e.a.x) * (e.b.x - e.a.x) + (p.y - e.a.y) * (e.b.y - e.a.y);
    dot >= -EPS * len && dot <= len * len + EPS * len
}

/// Parameters `t ∈ [0, 1]` along `origin + t·(dx, dy)` where it meets edge `e`.
fn crossing_parameters(origin: Point2, dx: f64, dy: f64, e: &Segment, out: &mut Vec<f64>) {
    let ex = e.b.x - e.a.x;
    let ey = e.b.y - e.a.y;
    let denom = dx * ey - dy * ex;
    let qx = e.a.x - origin.x;
    let qy = e.a.y - origin.y;
    if denom.abs() > 1e-15 {
        let t = (qx * ey - qy * ex) / denom;
        let u = (qx * dy - qy * dx) / denom;
        if (-EPS..=1.0 + EPS).contains(&t) && (-EPS..=1.0 + EPS).contains(&u) {
            out.push(t.clamp(0.0, 1.0));
        }
        return;
    }
    // parallel: only collinear overlaps contribute, via the edge endpoints
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 || (qx * dy - qy * dx).abs() > EPS * len2.sqrt() {
        return;
    }
    for p in [e.a, e.b] {
        let t = ((p.x - origin.x) * dx + (p.y - origin.y) * dy) / len2;
        if (0.0..=1.0).contains(&t) {
            out.push(t);
        }
    }
}

fn is_simple_polygon(vertices: &[Point2]) -> bool {
    let n = vertices.len();
    let edges: Vec<Segment> = (0..n)
        .map(|i| Segment::new(vertices[i], vertices[(i + 1) % n]))
        .collect();
    if edges.iter().any(|e| e.length() == 0.0) {
        return false;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                // neighbours share a vertex; they must not fold back onto each other
                let (a, b) = (&edges[i], &edges[j]);
                let shared = if j == i + 1 { a.b } else { a.a };
                let other_a = if shared == a.a { a.b } else { a.a };
                let other_b = if shared == b.a { b.b } else { b.a };
                if on_segment(other_a, b) || on_segment(other_b, a) {
                    return false;
                }
                continue;
            }
            if segments_intersect(&edges[i], &edges[j]) {
                return false;
            }
        }
    }
    true
}

/// True iff the tx→rx segment touches none of the prisms.
pub fn los_3d(tx: Point3, rx: Point3, prisms: &[BuildingPrism]) -> Result<bool, GeometryError> {
    if tx == rx {
        return Err(GeometryError::DegenerateLink);
    }
    Ok(!prisms.iter().any(|b| b.blocks(tx, rx)))
}

/// Antenna heights per node class, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeHeights {
    pub mbs: f64,
    pub sbs: f64,
    pub ue: f64,
}

impl Default for NodeHeights {
    fn default() -> Self {
        Self {
            mbs: 25.0,
            sbs: 10.0,
            ue: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene3D {
    pub prisms: Vec<BuildingPrism>,
    pub heights: NodeHeights,
}

/// Geographic origin (degrees) used for the local projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoOrigin {
    pub lon: f64,
    pub lat: f64,
}

fn project(lon: f64, lat: f64, origin: GeoOrigin) -> Point2 {
    let k = std::f64::consts::PI / 180.0;
    Point2::new(
        EARTH_RADIUS_M * (lon - origin.lon) * k * (origin.lat * k).cos(),
        EARTH_RADIUS_M * (lat - origin.lat) * k,
    )
}

pub fn load_buildings(path: &Path, origin: Option<GeoOrigin>) -> Result<Vec<BuildingPrism>, TerrainError> {
    let text = fs::read_to_string(path).map_err(|source| TerrainError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_buildings(&text, origin)
}

/// Parses footprint GeoJSON text; see the module docs for the accepted subset.
pub fn parse_buildings(text: &str, origin: Option<GeoOrigin>) -> Result<Vec<BuildingPrism>, TerrainError> {
    let doc: Value = serde_json::from_str(text)?;
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(TerrainError::Format(
            "top-level object must be a FeatureCollection".into(),
        ));
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| TerrainError::Format("missing `features` array".into()))?;

    let mut rings = Vec::with_capacity(features.len());
    for (index, feature) in features.iter().enumerate() {
        let fail = |reason: &str| TerrainError::Feature {
            index,
            reason: reason.to_string(),
        };
        let geometry = feature.get("geometry").ok_or_else(|| fail("missing geometry"))?;
        if geometry.get("type").and_then(Value::as_str) != Some("Polygon") {
            return Err(fail("geometry type must be Polygon"));
        }
        let outer = geometry
            .get("coordinates")
            .and_then(Value::as_array)
            .and_then(|rings| rings.first())
            .and_then(Value::as_array)
            .ok_or_else(|| fail("missing polygon coordinates"))?;
        let mut ring = Vec::with_capacity(outer.len());
        for vertex in outer {
            let pair = vertex
                .as_array()
                .filter(|v| v.len() >= 2)
                .ok_or_else(|| fail("vertex must be [lon, lat]"))?;
            let lon = pair[0].as_f64().ok_or_else(|| fail("non-numeric longitude"))?;
            let lat = pair[1].as_f64().ok_or_else(|| fail("non-numeric latitude"))?;
            ring.push((lon, lat));
        }
        if ring.len() > 1 && ring.first() == ring.last() {
            ring.pop();
        }
        let height = feature
            .get("properties")
            .and_then(|p| p.get("height"))
            .and_then(Value::as_f64)
            .ok_or_else(|| fail("missing numeric `height` property"))?;
        rings.push((index, ring, height));
    }

    let origin = origin.unwrap_or_else(|| bbox_center(rings.iter().flat_map(|(_, r, _)| r.iter().copied())));
    rings
        .into_iter()
        .map(|(index, ring, height)| {
            let footprint = ring.into_iter().map(|(lon, lat)| project(lon, lat, origin)).collect();
            BuildingPrism::new(footprint, height).map_err(|reason| TerrainError::Feature { index, reason })
        })
        .collect()
}

fn bbox_center(coords: impl Iterator<Item = (f64, f64)>) -> GeoOrigin {
    let mut lo = (f64::INFINITY, f64::INFINITY);
    let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (lon, lat) in coords {
        lo = (lo.0.min(lon), lo.1.min(lat));
        hi = (hi.0.max(lon), hi.1.max(lat));
    }
    if lo.0.is_finite() {
        GeoOrigin {
            lon: 0.5 * (lo.0 + hi.0),
            lat: 0.5 * (lo.1 + hi.1),
        }
    } else {
        GeoOrigin { lon: 0.0, lat: 0.0 }
    }
}

/// Parameters of the randomized stand-in city.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CityParams {
    /// Buildings per km².
    pub density: f64,
    pub size_min: f64,
    pub size_max: f64,
    pub height_min: f64,
    pub height_max: f64,
}

impl Default for CityParams {
    fn default() -> Self {
        Self {
            density: 300.0,
            size_min: 10.0,
            size_max: 30.0,
            height_min: 6.0,
            height_max: 18.0,
        }
    }
}

impl CityParams {
    pub fn validate(&self) -> Result<(), TerrainError> {
        let checks = [
            ("density", self.density, self.density >= 0.0),
            ("size_min", self.size_min, self.size_min > 0.0),
            ("size_max", self.size_max, self.size_max >= self.size_min),
            ("height_min", self.height_min, self.height_min > 0.0),
            ("height_max", self.height_max, self.height_max >= self.height_min),
        ];
        for (name, value, ok) in checks {
            if !ok || !value.is_finite() {
                return Err(TerrainError::InvalidParameter { name, value });
            }
        }
        Ok(())
    }
}

fn uniform_in<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Axis-aligned rectangular buildings on FHPPP centers.
pub fn generate_synthetic_city<R: Rng + ?Sized>(
    params: &CityParams,
    region: &Region,
    rng: &mut R,
) -> Result<Vec<BuildingPrism>, TerrainError> {
    params.validate()?;
    let centers = sample_fhppp(params.density, region, rng)?;
    centers
        .into_iter()
        .map(|c| {
            let w = uniform_in(params.size_min, params.size_max, rng);
            let d = uniform_in(params.size_min, params.size_max, rng);
            let h = uniform_in(params.height_min, params.height_max, rng);
            let (hw, hd) = (0.5 * w, 0.5 * d);
            let footprint = vec![
                Point2::new(c.x - hw, c.y - hd),
                Point2::new(c.x + hw, c.y - hd),
                Point2::new(c.x + hw, c.y + hd),
                Point2::new(c.x - hw, c.y + hd),
            ];
            BuildingPrism::new(footprint, h).map_err(TerrainError::Format)
        })
        .collect()
}
