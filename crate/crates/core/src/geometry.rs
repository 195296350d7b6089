//! Planar geometry for the disk-shaped deployment area: Poisson point
//! sampling, germ-grain wall and tree-line layouts, and segment-crossing
//! queries used for blockage and foliage.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid parameter `{name}`: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("degenerate link: transmitter and receiver coincide")]
    DegenerateLink,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Direction from `self` to `other` in radians, in `(-π, π]`.
    pub fn bearing_to(self, other: Point2) -> f64 {
        (other.y - self.y).atan2(other.x - self.x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Point2,
    pub b: Point2,
}

impl Segment {
    pub fn new(a: Point2, b: Point2) -> Self {
        Self { a, b }
    }

    pub fn length(&self) -> f64 {
        self.a.distance(self.b)
    }
}

/// Circular deployment area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    center: Point2,
    radius: f64,
}

impl Region {
    pub fn new(center: Point2, radius: f64) -> Result<Self, GeometryError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(GeometryError::InvalidParameter {
                name: "radius",
                value: radius,
            });
        }
        Ok(Self { center, radius })
    }

    /// Disk of the given radius (meters) centered on the origin.
    pub fn disk(radius: f64) -> Result<Self, GeometryError> {
        Self::new(Point2::ORIGIN, radius)
    }

    pub fn center(&self) -> Point2 {
        self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn area_km2(&self) -> f64 {
        PI * (self.radius / 1000.0).powi(2)
    }

    pub fn contains(&self, p: Point2) -> bool {
        self.center.distance(p) <= self.radius
    }

    /// One point uniform on the disk.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point2 {
        let u: f64 = rng.random();
        let w: f64 = rng.random();
        let r = self.radius * u.sqrt();
        let phi = 2.0 * PI * w;
        Point2::new(self.center.x + r * phi.cos(), self.center.y + r * phi.sin())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Mbs,
    Sbs,
    Ue,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub position: Point2,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSet {
    pub kind: NodeKind,
    pub nodes: Vec<Node>,
}

impl NodeSet {
    pub fn new(kind: NodeKind, positions: Vec<Point2>, height: f64) -> Self {
        let nodes = positions
            .into_iter()
            .map(|position| Node { position, height })
            .collect();
        Self { kind, nodes }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

fn check_non_negative(name: &'static str, value: f64) -> Result<(), GeometryError> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(GeometryError::InvalidParameter { name, value })
    }
}

/// Draws a finite homogeneous Poisson point process on `region`.
/// `density` is in points per km².
pub fn sample_fhppp<R: Rng + ?Sized>(density: f64, region: &Region, rng: &mut R) -> Result<Vec<Point2>, GeometryError> {
    check_non_negative("density", density)?;
    let mean = density * region.area_km2();
    if mean == 0.0 {
        return Ok(Vec::new());
    }
    let poisson = Poisson::new(mean).map_err(|_| GeometryError::InvalidParameter {
        name: "density",
        value: density,
    })?;
    let count = poisson.sample(rng) as usize;
    Ok(sample_uniform(count, region, rng))
}

/// Exactly `count` IID uniform points (binomial point process).
pub fn sample_uniform<R: Rng + ?Sized>(count: usize, region: &Region, rng: &mut R) -> Vec<Point2> {
    (0..count).map(|_| region.sample_point(rng)).collect()
}

/// A line-shaped grain: a segment described by its germ (midpoint),
/// length and orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grain {
    pub midpoint: Point2,
    pub length: f64,
    pub orientation: f64,
}

impl Grain {
    pub fn segment(&self) -> Segment {
        let (s, c) = self.orientation.sin_cos();
        let h = 0.5 * self.length;
        Segment::new(
            Point2::new(self.midpoint.x - h * c, self.midpoint.y - h * s),
            Point2::new(self.midpoint.x + h * c, self.midpoint.y + h * s),
        )
    }
}

/// Blocking walls (germ-grain model). Segments are cached and bucketed in
/// a uniform grid for the intersection hot path.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "Vec<Grain>", into = "Vec<Grain>")]
pub struct WallSet {
    grains: Vec<Grain>,
    segments: Vec<Segment>,
    grid: SegmentGrid,
}

impl From<Vec<Grain>> for WallSet {
    fn from(grains: Vec<Grain>) -> Self {
        Self::new(grains)
    }
}

impl From<WallSet> for Vec<Grain> {
    fn from(walls: WallSet) -> Self {
        walls.grains
    }
}

impl WallSet {
    pub fn new(grains: Vec<Grain>) -> Self {
        let segments: Vec<Segment> = grains.iter().map(Grain::segment).collect();
        let grid = SegmentGrid::build(&segments);
        Self { grains, segments, grid }
    }

    pub fn from_segments(segments: Vec<Segment>) -> Self {
        let grains = segments
            .iter()
            .map(|s| Grain {
                midpoint: Point2::new(0.5 * (s.a.x + s.b.x), 0.5 * (s.a.y + s.b.y)),
                length: s.length(),
                orientation: (s.b.y - s.a.y).atan2(s.b.x - s.a.x).rem_euclid(2.0 * PI),
            })
            .collect();
        let grid = SegmentGrid::build(&segments);
        Self { grains, segments, grid }
    }

    pub fn grains(&self) -> &[Grain] {
        &self.grains
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.grains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grains.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeLine {
    pub grain: Grain,
    pub in_leaf: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "Vec<TreeLine>", into = "Vec<TreeLine>")]
pub struct TreeLineSet {
    lines: Vec<TreeLine>,
    segments: Vec<Segment>,
    grid: SegmentGrid,
}

impl From<Vec<TreeLine>> for TreeLineSet {
    fn from(lines: Vec<TreeLine>) -> Self {
        Self::new(lines)
    }
}

impl From<TreeLineSet> for Vec<TreeLine> {
    fn from(trees: TreeLineSet) -> Self {
        trees.lines
    }
}

impl TreeLineSet {
    pub fn new(lines: Vec<TreeLine>) -> Self {
        let segments: Vec<Segment> = lines.iter().map(|l| l.grain.segment()).collect();
        let grid = SegmentGrid::build(&segments);
        Self { lines, segments, grid }
    }

    pub fn lines(&self) -> &[TreeLine] {
        &self.lines
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }
}

/// Uniform bucket grid over segment bounding boxes (CSR layout).
///
/// Every segment is registered in each cell its slightly padded bounding
/// box touches, and a query walks the cells a link passes through, so the
/// candidate set is a superset of the segments the link can meet.
#[derive(Debug, Clone, PartialEq, Default)]
struct SegmentGrid {
    min: Point2,
    cell: f64,
    nx: usize,
    ny: usize,
    starts: Vec<u32>,
    items: Vec<u32>,
}

const GRID_PAD: f64 = 1e-6;
const GRID_MAX_SIDE: usize = 512;

impl SegmentGrid {
    fn build(segments: &[Segment]) -> Self {
        if segments.is_empty() {
            return Self::default();
        }
        let (mut lo, mut hi) = (Point2::new(f64::MAX, f64::MAX), Point2::new(f64::MIN, f64::MIN));
        for s in segments {
            lo.x = lo.x.min(s.a.x.min(s.b.x));
            lo.y = lo.y.min(s.a.y.min(s.b.y));
            hi.x = hi.x.max(s.a.x.max(s.b.x));
            hi.y = hi.y.max(s.a.y.max(s.b.y));
        }
        lo = Point2::new(lo.x - GRID_PAD, lo.y - GRID_PAD);
        hi = Point2::new(hi.x + GRID_PAD, hi.y + GRID_PAD);
        let (w, h) = (hi.x - lo.x, hi.y - lo.y);
        // about one segment per cell
        let cell = (w * h / segments.len() as f64)
            .sqrt()
            .max(w.max(h) / GRID_MAX_SIDE as f64)
            .max(GRID_PAD * 4.0);
        let nx = ((w / cell).ceil() as usize).clamp(1, GRID_MAX_SIDE);
        let ny = ((h / cell).ceil() as usize).clamp(1, GRID_MAX_SIDE);
        let mut grid = Self {
            min: lo,
            cell,
            nx,
            ny,
            starts: Vec::new(),
            items: Vec::new(),
        };
        let ranges: Vec<_> = segments.iter().map(|s| grid.cell_range(s)).collect();
        let mut counts = vec![0u32; nx * ny + 1];
        for &(x0, x1, y0, y1) in &ranges {
            for y in y0..=y1 {
                for x in x0..=x1 {
                    counts[y * nx + x + 1] += 1;
                }
            }
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let mut fill = counts.clone();
        let mut items = vec![0u32; counts[nx * ny] as usize];
        for (k, &(x0, x1, y0, y1)) in ranges.iter().enumerate() {
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let c = y * nx + x;
                    items[fill[c] as usize] = k as u32;
                    fill[c] += 1;
                }
            }
        }
        grid.starts = counts;
        grid.items = items;
        grid
    }

    fn clamp_x(&self, x: f64) -> usize {
        (((x - self.min.x) / self.cell).floor().max(0.0) as usize).min(self.nx - 1)
    }

    fn clamp_y(&self, y: f64) -> usize {
        (((y - self.min.y) / self.cell).floor().max(0.0) as usize).min(self.ny - 1)
    }

    fn cell_range(&self, s: &Segment) -> (usize, usize, usize, usize) {
        (
            self.clamp_x(s.a.x.min(s.b.x) - GRID_PAD),
            self.clamp_x(s.a.x.max(s.b.x) + GRID_PAD),
            self.clamp_y(s.a.y.min(s.b.y) - GRID_PAD),
            self.clamp_y(s.a.y.max(s.b.y) + GRID_PAD),
        )
    }

    /// Calls `f` with candidate indices (possibly repeated) for segments
    /// near `link`; stops early and returns true once `f` does.
    fn any_candidate(&self, link: &Segment, mut f: impl FnMut(usize) -> bool) -> bool {
        if self.items.is_empty() {
            return false;
        }
        let Some((t0, t1)) = self.clip(link) else {
            return false;
        };
        let d = Point2::new(link.b.x - link.a.x, link.b.y - link.a.y);
        let at = |t: f64| Point2::new(link.a.x + t * d.x, link.a.y + t * d.y);
        let (p, q) = (at(t0), at(t1));
        let (mut ix, mut iy) = (self.clamp_x(p.x), self.clamp_y(p.y));
        let (ex, ey) = (self.clamp_x(q.x), self.clamp_y(q.y));
        let (sx, sy) = (d.x.signum() as isize, d.y.signum() as isize);
        let next = |i: usize, step: isize, origin: f64, start: f64, delta: f64| {
            if delta == 0.0 {
                f64::INFINITY
            } else {
                let edge = origin + (i as f64 + if step > 0 { 1.0 } else { 0.0 }) * self.cell;
                (edge - start) / delta
            }
        };
        let mut tx = t0 + next(ix, sx, self.min.x, p.x, d.x);
        let mut ty = t0 + next(iy, sy, self.min.y, p.y, d.y);
        let dtx = if d.x == 0.0 {
            f64::INFINITY
        } else {
            self.cell / d.x.abs()
        };
        let dty = if d.y == 0.0 {
            f64::INFINITY
        } else {
            self.cell / d.y.abs()
        };
        for _ in 0..(self.nx + self.ny + 2) {
            let c = iy * self.nx + ix;
            let (lo, hi) = (self.starts[c] as usize, self.starts[c + 1] as usize);
            if self.items[lo..hi].iter().any(|&k| f(k as usize)) {
                return true;
            }
            if (ix == ex && iy == ey) || tx.min(ty) > t1 {
                break;
            }
            if tx < ty {
                let n = ix as isize + sx;
                if n < 0 || n >= self.nx as isize {
                    break;
                }
                ix = n as usize;
                tx += dtx;
            } else {
                let n = iy as isize + sy;
                if n < 0 || n >= self.ny as isize {
                    break;
                }
                iy = n as usize;
                ty += dty;
            }
        }
        false
    }

    /// Parameter interval of `link` inside the grid rectangle (Liang-Barsky).
    fn clip(&self, link: &Segment) -> Option<(f64, f64)> {
        let max = Point2::new(
            self.min.x + self.nx as f64 * self.cell,
            self.min.y + self.ny as f64 * self.cell,
        );
        let d = Point2::new(link.b.x - link.a.x, link.b.y - link.a.y);
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        for (p, q) in [
            (-d.x, link.a.x - self.min.x),
            (d.x, max.x - link.a.x),
            (-d.y, link.a.y - self.min.y),
            (d.y, max.y - link.a.y),
        ] {
            if p == 0.0 {
                if q < 0.0 {
                    return None;
                }
            } else {
                let r = q / p;
                if p < 0.0 {
                    t0 = t0.max(r);
                } else {
                    t1 = t1.min(r);
                }
            }
        }
        (t0 <= t1).then_some((t0, t1))
    }
}

/// Germs from an FHPPP, orientations IID uniform on `[0, 2π)`.
/// Grains whose ends leave the disk are kept.
pub fn sample_grains<R: Rng + ?Sized>(
    density: f64,
    length: f64,
    region: &Region,
    rng: &mut R,
) -> Result<Vec<Grain>, GeometryError> {
    check_non_negative("length", length)?;
    let germs = sample_fhppp(density, region, rng)?;
    Ok(germs
        .into_iter()
        .map(|midpoint| Grain {
            midpoint,
            length,
            orientation: rng.random::<f64>() * 2.0 * PI,
        })
        .collect())
}

pub fn sample_walls<R: Rng + ?Sized>(
    density: f64,
    length: f64,
    region: &Region,
    rng: &mut R,
) -> Result<WallSet, GeometryError> {
    Ok(WallSet::new(sample_grains(density, length, region, rng)?))
}

/// Tree lines; each line is independently in leaf with probability
/// `in_leaf_probability`.
pub fn sample_tree_lines<R: Rng + ?Sized>(
    density: f64,
    length: f64,
    in_leaf_probability: f64,
    region: &Region,
    rng: &mut R,
) -> Result<TreeLineSet, GeometryError> {
    if !(0.0..=1.0).contains(&in_leaf_probability) {
        return Err(GeometryError::InvalidParameter {
            name: "in_leaf_probability",
            value: in_leaf_probability,
        });
    }
    let grains = sample_grains(density, length, region, rng)?;
    let lines = grains
        .into_iter()
        .map(|grain| TreeLine {
            grain,
            in_leaf: rng.random::<f64>() < in_leaf_probability,
        })
        .collect();
    Ok(TreeLineSet::new(lines))
}

#[inline]
fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

#[inline]
fn within_box(p: Point2, a: Point2, b: Point2) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// True iff the closed segments share at least one point.
#[inline]
pub fn segments_intersect(s: &Segment, t: &Segment) -> bool {
    // straddle tests first: for a long link and short walls almost every
    // candidate lies wholly on one side of the link's line
    let d3 = cross(s.a, s.b, t.a);
    let d4 = cross(s.a, s.b, t.b);
    if (d3 > 0.0 && d4 > 0.0) || (d3 < 0.0 && d4 < 0.0) {
        return false;
    }
    let d1 = cross(t.a, t.b, s.a);
    let d2 = cross(t.a, t.b, s.b);
    if (d1 > 0.0 && d2 > 0.0) || (d1 < 0.0 && d2 < 0.0) {
        return false;
    }
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && within_box(s.a, t.a, t.b))
        || (d2 == 0.0 && within_box(s.b, t.a, t.b))
        || (d3 == 0.0 && within_box(t.a, s.a, s.b))
        || (d4 == 0.0 && within_box(t.b, s.a, s.b))
}

fn link_segment(tx: Point2, rx: Point2) -> Result<Segment, GeometryError> {
    if tx == rx {
        return Err(GeometryError::DegenerateLink);
    }
    Ok(Segment::new(tx, rx))
}

/// True iff the straight tx→rx path crosses none of the walls.
pub fn link_is_los(tx: Point2, rx: Point2, walls: &WallSet) -> Result<bool, GeometryError> {
    let link = link_segment(tx, rx)?;
    Ok(!walls
        .grid
        .any_candidate(&link, |k| segments_intersect(&link, &walls.segments[k])))
}

/// One in-leaf flag per tree line crossed by the tx→rx path, in line order.
pub fn foliage_crossings(tx: Point2, rx: Point2, trees: &TreeLineSet) -> Result<Vec<bool>, GeometryError> {
    let link = link_segment(tx, rx)?;
    let mut hits = Vec::new();
    trees.grid.any_candidate(&link, |k| {
        if segments_intersect(&link, &trees.segments[k]) {
            hits.push(k);
        }
        false
    });
    hits.sort_unstable();
    hits.dedup();
    Ok(hits.into_iter().map(|k| trees.lines[k].in_leaf).collect())
}
