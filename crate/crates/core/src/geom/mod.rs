//! Planar geometry in projected metres.
//!
//! Everything in this module assumes a flat Cartesian frame. Rings are stored
//! closed (first vertex repeated at the end) and polygons carry their holes
//! explicitly.

mod clip;
mod hull;
mod index;

pub use clip::{
    disk_intersection_area, disk_polygon, polyline_length_in_disk, segment_distance_sq,
    segment_length_in_disk, DISK_SEGMENTS,
};
pub use hull::convex_hull;
pub(crate) use index::polyline_intersects_disk;
pub use index::{DiskQuery, LinearScan, Spatial, SpatialIndex, DEFAULT_FANOUT};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used for on-boundary tests, in metres.
pub const BOUNDARY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance_sq(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn distance(&self, other: &Point) -> f64 {
        self.distance_sq(other).sqrt()
    }
}

/// Twice the signed area of the triangle (o, a, b); positive when counter-clockwise.
pub(crate) fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl BBox {
    pub const EMPTY: BBox = BBox {
        min_x: f64::INFINITY,
        min_y: f64::INFINITY,
        max_x: f64::NEG_INFINITY,
        max_y: f64::NEG_INFINITY,
    };

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point>) -> BBox {
        points.into_iter().fold(BBox::EMPTY, |b, p| b.extend(*p))
    }

    pub fn extend(self, p: Point) -> BBox {
        BBox {
            min_x: self.min_x.min(p.x),
            min_y: self.min_y.min(p.y),
            max_x: self.max_x.max(p.x),
            max_y: self.max_y.max(p.y),
        }
    }

    pub fn union(self, other: BBox) -> BBox {
        BBox {
            min_x: self.min_x.min(other.min_x),
            min_y: self.min_y.min(other.min_y),
            max_x: self.max_x.max(other.max_x),
            max_y: self.max_y.max(other.max_y),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.min_x > self.max_x || self.min_y > self.max_y
    }

    pub fn center(&self) -> Point {
        Point::new(
            0.5 * (self.min_x + self.max_x),
            0.5 * (self.min_y + self.max_y),
        )
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    /// Squared distance from `p` to the nearest point of the box (0 inside).
    pub fn distance_sq_to(&self, p: Point) -> f64 {
        let dx = (self.min_x - p.x).max(0.0).max(p.x - self.max_x);
        let dy = (self.min_y - p.y).max(0.0).max(p.y - self.max_y);
        dx * dx + dy * dy
    }

    pub fn intersects_disk(&self, center: Point, radius: f64) -> bool {
        !self.is_empty() && self.distance_sq_to(center) <= radius * radius
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolygon", into = "RawPolygon")]
pub struct Polygon {
    exterior: Vec<Point>,
    holes: Vec<Vec<Point>>,
}

#[derive(Serialize, Deserialize)]
struct RawPolygon {
    exterior: Vec<Point>,
    #[serde(default)]
    holes: Vec<Vec<Point>>,
}

impl TryFrom<RawPolygon> for Polygon {
    type Error = Error;

    fn try_from(raw: RawPolygon) -> Result<Self> {
        Polygon::new(raw.exterior, raw.holes)
    }
}

impl From<Polygon> for RawPolygon {
    fn from(p: Polygon) -> Self {
        RawPolygon {
            exterior: p.exterior,
            holes: p.holes,
        }
    }
}

/// Validates a ring and returns it closed with consecutive duplicates removed.
fn normalize_ring(ring: Vec<Point>) -> Result<Vec<Point>> {
    if let Some(p) = ring.iter().find(|p| !p.is_finite()) {
        return Err(Error::Geometry(format!(
            "non-finite coordinate ({}, {})",
            p.x, p.y
        )));
    }
    let mut out: Vec<Point> = Vec::with_capacity(ring.len() + 1);
    for p in ring {
        if out.last() != Some(&p) {
            out.push(p);
        }
    }
    while out.len() > 1 && out.first() == out.last() {
        out.pop();
    }
    let mut distinct = out.clone();
    distinct.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Geometry(format!(
            "ring has {} distinct vertices, need at least 3",
            distinct.len()
        )));
    }
    out.push(out[0]);
    Ok(out)
}

/// Signed shoelace area of a closed ring; positive when counter-clockwise.
pub fn ring_signed_area(ring: &[Point]) -> f64 {
    let sum: f64 = ring
        .windows(2)
        .map(|w| w[0].x * w[1].y - w[1].x * w[0].y)
        .sum();
    0.5 * sum
}

fn on_segment(p: Point, a: Point, b: Point) -> bool {
    let len = a.distance(&b);
    let scale = len.max(1.0);
    if cross(a, b, p).abs() > BOUNDARY_EPS * scale {
        return false;
    }
    p.x >= a.x.min(b.x) - BOUNDARY_EPS
        && p.x <= a.x.max(b.x) + BOUNDARY_EPS
        && p.y >= a.y.min(b.y) - BOUNDARY_EPS
        && p.y <= a.y.max(b.y) + BOUNDARY_EPS
}

pub(crate) fn on_ring_boundary(p: Point, ring: &[Point]) -> bool {
    ring.windows(2).any(|w| on_segment(p, w[0], w[1]))
}

/// Even-odd crossing test against a closed ring, ignoring the boundary.
pub(crate) fn ray_cast(p: Point, ring: &[Point]) -> bool {
    let mut inside = false;
    for w in ring.windows(2) {
        let (a, b) = (w[0], w[1]);
        if (a.y > p.y) != (b.y > p.y) {
            let x_at = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x_at {
                inside = !inside;
            }
        }
    }
    inside
}

/// Boundary-inclusive containment in a single ring.
pub(crate) fn ring_contains(p: Point, ring: &[Point]) -> bool {
    on_ring_boundary(p, ring) || ray_cast(p, ring)
}

impl Polygon {
    /// Builds a polygon from an exterior ring and holes. Rings may be given open
    /// or closed; they are stored closed.
    pub fn new(exterior: Vec<Point>, holes: Vec<Vec<Point>>) -> Result<Self> {
        let exterior = normalize_ring(exterior)?;
        let holes = holes
            .into_iter()
            .map(normalize_ring)
            .collect::<Result<Vec<_>>>()?;
        for hole in &holes {
            if let Some(p) = hole.iter().find(|p| !ring_contains(**p, &exterior)) {
                return Err(Error::Geometry(format!(
                    "hole vertex ({}, {}) lies outside the exterior ring",
                    p.x, p.y
                )));
            }
        }
        Ok(Polygon { exterior, holes })
    }

    pub fn from_exterior(exterior: Vec<Point>) -> Result<Self> {
        Polygon::new(exterior, Vec::new())
    }

    /// Axis-aligned rectangle with the given corners.
    pub fn rect(min: Point, max: Point) -> Result<Self> {
        Polygon::from_exterior(vec![
            min,
            Point::new(max.x, min.y),
            max,
            Point::new(min.x, max.y),
        ])
    }

    /// Closed exterior ring.
    pub fn exterior(&self) -> &[Point] {
        &self.exterior
    }

    pub fn holes(&self) -> &[Vec<Point>] {
        &self.holes
    }

    /// Exterior vertices without the closing duplicate.
    pub fn vertices(&self) -> &[Point] {
        &self.exterior[..self.exterior.len() - 1]
    }

    pub fn bbox(&self) -> BBox {
        BBox::from_points(&self.exterior)
    }

    pub fn area(&self) -> f64 {
        polygon_area(self)
    }

    pub fn contains(&self, p: Point) -> bool {
        point_in_polygon(p, self)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Polygon {
        self.map_points(|p| Point::new(p.x + dx, p.y + dy))
    }

    pub fn scale(&self, s: f64) -> Polygon {
        self.map_points(|p| Point::new(p.x * s, p.y * s))
    }

    fn map_points(&self, f: impl Fn(Point) -> Point) -> Polygon {
        Polygon {
            exterior: self.exterior.iter().map(|p| f(*p)).collect(),
            holes: self
                .holes
                .iter()
                .map(|h| h.iter().map(|p| f(*p)).collect())
                .collect(),
        }
    }
}

/// Shoelace area of the exterior minus the holes.
pub fn polygon_area(p: &Polygon) -> f64 {
    let holes: f64 = p.holes.iter().map(|h| ring_signed_area(h).abs()).sum();
    (ring_signed_area(&p.exterior).abs() - holes).max(0.0)
}

/// Even-odd containment test. Points on the exterior or on a hole boundary
/// count as inside; points strictly inside a hole do not.
pub fn point_in_polygon(pt: Point, p: &Polygon) -> bool {
    if !ring_contains(pt, &p.exterior) {
        return false;
    }
    !p.holes
        .iter()
        .any(|h| !on_ring_boundary(pt, h) && ray_cast(pt, h))
}
