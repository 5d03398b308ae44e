use super::{cross, Point, Polygon};
use crate::error::{Error, Result};

/// Convex hull by Andrew's monotone chain.
///
/// The result is counter-clockwise and contains only strict corners;
/// points on hull edges are dropped.
pub fn convex_hull(points: &[Point]) -> Result<Polygon> {
    if let Some(p) = points.iter().find(|p| !p.is_finite()) {
        return Err(Error::Geometry(format!(
            "non-finite hull input ({}, {})",
            p.x, p.y
        )));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return Err(Error::Geometry(format!(
            "convex hull needs at least 3 distinct points, got {}",
            pts.len()
        )));
    }

    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();

    if hull.len() < 3 {
        return Err(Error::Geometry("all hull input points are collinear".into()));
    }
    Polygon::from_exterior(hull)
}
