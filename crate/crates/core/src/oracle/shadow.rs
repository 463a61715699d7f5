//! Analytical shadow polygons of cuboids on horizontal planes.

use crate::error::{Error, Result};
use crate::scene::Building;
use crate::solar::SunDirection;

/// Tolerance used by every inside/outside decision so that boundary points
/// count as shaded on all code paths.
pub const EDGE_EPS: f64 = 1e-9;

/// A convex polygon with counter-clockwise vertices. May be empty.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvexPolygon {
    pub vertices: Vec<(f64, f64)>,
    min: (f64, f64),
    max: (f64, f64),
}

impl ConvexPolygon {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Convex hull of a point set (Andrew's monotone chain).
    pub fn hull(points: &[(f64, f64)]) -> Self {
        let mut pts: Vec<(f64, f64)> = points.to_vec();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        pts.dedup();
        if pts.len() < 3 {
            return Self::from_ccw(pts);
        }
        let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
            (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
        };
        let mut lower: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
        for &p in &pts {
            while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
                lower.pop();
            }
            lower.push(p);
        }
        let mut upper: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
        for &p in pts.iter().rev() {
            while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
                upper.pop();
            }
            upper.push(p);
        }
        lower.pop();
        upper.pop();
        lower.extend(upper);
        Self::from_ccw(lower)
    }

    fn from_ccw(vertices: Vec<(f64, f64)>) -> Self {
        let mut min = (f64::INFINITY, f64::INFINITY);
        let mut max = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &(x, y) in &vertices {
            min = (min.0.min(x), min.1.min(y));
            max = (max.0.max(x), max.1.max(y));
        }
        Self { vertices, min, max }
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn bounds(&self) -> ((f64, f64), (f64, f64)) {
        (self.min, self.max)
    }

    /// Shoelace area.
    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        if n < 3 {
            return 0.0;
        }
        let mut twice = 0.0;
        for k in 0..n {
            let (x0, y0) = self.vertices[k];
            let (x1, y1) = self.vertices[(k + 1) % n];
            twice += x0 * y1 - x1 * y0;
        }
        0.5 * twice
    }

    /// The closed x-interval where the horizontal line at `y` meets the
    /// polygon, or `None` when it misses.
    #[inline]
    pub fn span_at(&self, y: f64) -> Option<(f64, f64)> {
        if self.vertices.is_empty() || y < self.min.1 || y > self.max.1 {
            return None;
        }
        let n = self.vertices.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for k in 0..n {
            let (ax, ay) = self.vertices[k];
            let (bx, by) = self.vertices[(k + 1) % n];
            let (ylo, yhi) = if ay <= by { (ay, by) } else { (by, ay) };
            if y < ylo || y > yhi {
                continue;
            }
            if ay == by {
                lo = lo.min(ax.min(bx));
                hi = hi.max(ax.max(bx));
            } else {
                let x = ax + (y - ay) * (bx - ax) / (by - ay);
                lo = lo.min(x);
                hi = hi.max(x);
            }
        }
        (lo <= hi).then_some((lo, hi))
    }

    /// Closed containment test, boundary inclusive.
    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        if x < self.min.0 - EDGE_EPS || x > self.max.0 + EDGE_EPS {
            return false;
        }
        match self.span_at(y) {
            Some((lo, hi)) => x >= lo - EDGE_EPS && x <= hi + EDGE_EPS,
            None => false,
        }
    }
}

/// Shadow of a building on the horizontal plane at `plane_z_m`.
///
/// The shadow is the hull of the footprint translated by the shadow offsets
/// of the slab bottom and of the roof, both measured above the plane.
pub fn shadow_polygon(b: &Building, d: &SunDirection, plane_z_m: f64) -> Result<ConvexPolygon> {
    if !(d.dz > 0.0) {
        return Err(Error::SunBelowHorizon {
            altitude_deg: d.dz.clamp(-1.0, 1.0).asin().to_degrees(),
        });
    }
    Ok(shadow_polygon_unchecked(b, d, plane_z_m))
}

pub(crate) fn shadow_polygon_unchecked(b: &Building, d: &SunDirection, plane_z_m: f64) -> ConvexPolygon {
    let top = b.top_z() - plane_z_m;
    if top <= 0.0 {
        return ConvexPolygon::empty();
    }
    let bottom = (b.base_z_m - plane_z_m).max(0.0);
    let (bx, by) = d.shadow_offset(bottom);
    let (tx, ty) = d.shadow_offset(top);
    let fp = b.footprint();
    let mut pts = [(0.0, 0.0); 8];
    for (k, &(x, y)) in fp.iter().enumerate() {
        pts[k] = (x + bx, y + by);
        pts[k + 4] = (x + tx, y + ty);
    }
    ConvexPolygon::hull(&pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solar::{sun_direction, SunPosition};
    use rand::{Rng, SeedableRng};

    fn unit_square() -> Building {
        Building::new("u", (0.5, 0.5), (1.0, 1.0, 1.0), 0.0).unwrap()
    }

    #[test]
    fn zenith_sun_casts_footprint() {
        let d = sun_direction(SunPosition { altitude_deg: 90.0, azimuth_deg: 0.0 }).unwrap();
        let b = Building::new("b", (3.0, 4.0), (20.0, 10.0, 30.0), 30.0).unwrap();
        let p = shadow_polygon(&b, &d, 0.0).unwrap();
        assert!((p.area() - 200.0).abs() < 1e-6);
        for (x, y) in b.footprint() {
            assert!(p.contains(x, y));
        }
    }

    #[test]
    fn nothing_above_plane_is_empty() {
        let d = sun_direction(SunPosition { altitude_deg: 30.0, azimuth_deg: 10.0 }).unwrap();
        let b = unit_square();
        assert!(shadow_polygon(&b, &d, 1.0).unwrap().is_empty());
        assert!(shadow_polygon(&b, &d, 2.0).unwrap().is_empty());
    }

    #[test]
    fn due_south_sun_doubles_unit_square() {
        let d = sun_direction(SunPosition { altitude_deg: 45.0, azimuth_deg: 0.0 }).unwrap();
        let p = shadow_polygon(&unit_square(), &d, 0.0).unwrap();
        // Shoelace on the hull.
        assert!((p.area() - 2.0).abs() < 1e-12);
        let ((x0, y0), (x1, y1)) = p.bounds();
        assert!(x0.abs() < 1e-12 && (x1 - 1.0).abs() < 1e-12);
        assert!(y0.abs() < 1e-12 && (y1 - 2.0).abs() < 1e-12);

        // Monte-Carlo cross-check of the area with the containment test.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 200_000;
        let hits = (0..n)
            .filter(|_| p.contains(rng.random_range(-1.0..2.0), rng.random_range(-1.0..3.0)))
            .count();
        let area = hits as f64 / n as f64 * 12.0;
        assert!((area - 2.0).abs() < 0.05, "{area}");
    }

    #[test]
    fn rejects_sun_below_horizon() {
        let d = SunDirection { dx: 0.0, dy: -1.0, dz: 0.0 };
        assert!(shadow_polygon(&unit_square(), &d, 0.0).is_err());
    }

    #[test]
    fn elevated_slab_shadow_is_detached() {
        // A slab from z=10 to z=11 under a 45-degree due-south sun throws a
        // 1x2 patch starting 10 m north of the footprint.
        let d = sun_direction(SunPosition { altitude_deg: 45.0, azimuth_deg: 0.0 }).unwrap();
        let b = unit_square().with_base(10.0);
        let p = shadow_polygon(&b, &d, 0.0).unwrap();
        let ((_, y0), (_, y1)) = p.bounds();
        assert!((y0 - 10.0).abs() < 1e-9 && (y1 - 12.0).abs() < 1e-9);
        assert!(!p.contains(0.5, 0.5));
    }

    #[test]
    fn hull_drops_interior_and_collinear_points() {
        let h = ConvexPolygon::hull(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0), (1.0, 1.0)]);
        assert_eq!(h.vertices.len(), 4);
        assert!((h.area() - 4.0).abs() < 1e-12);
        assert!(h.contains(2.0, 1.0));
        assert!(!h.contains(2.0 + 1e-6, 1.0));
    }
}
