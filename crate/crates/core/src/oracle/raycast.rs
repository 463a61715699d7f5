//! Ray casting against oriented boxes (slab test in each building's frame).

use crate::scene::{Building, Point3};
use crate::solar::SunDirection;

/// True when the ray from `p` toward the sun hits the building.
#[inline]
pub fn ray_hits_building(p: Point3, d: &SunDirection, b: &Building) -> bool {
    let (s, c) = b.orientation_deg.to_radians().sin_cos();
    let (dx, dy) = (p.x - b.center_x_m, p.y - b.center_y_m);
    let origin = [dx * c + dy * s, -dx * s + dy * c, p.z];
    let dir = [d.dx * c + d.dy * s, -d.dx * s + d.dy * c, d.dz];
    let lo = [-0.5 * b.length_m, -0.5 * b.width_m, b.base_z_m];
    let hi = [0.5 * b.length_m, 0.5 * b.width_m, b.top_z()];

    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for axis in 0..3 {
        if dir[axis].abs() < 1e-15 {
            if origin[axis] < lo[axis] || origin[axis] > hi[axis] {
                return false;
            }
            continue;
        }
        let inv = 1.0 / dir[axis];
        let mut t0 = (lo[axis] - origin[axis]) * inv;
        let mut t1 = (hi[axis] - origin[axis]) * inv;
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        t_near = t_near.max(t0);
        t_far = t_far.min(t1);
        if t_near > t_far {
            return false;
        }
    }
    t_far >= t_near.max(0.0)
}

/// True when any building blocks the sun at `p`.
pub fn raycast_shaded(p: Point3, d: &SunDirection, buildings: &[Building]) -> bool {
    buildings.iter().any(|b| ray_hits_building(p, d, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solar::{sun_direction, SunPosition};
    use rand::{Rng, SeedableRng};

    #[test]
    fn north_of_tall_building_under_low_sun() {
        let b = Building::new("t", (0.0, 0.0), (20.0, 10.0, 60.0), 0.0).unwrap();
        let d = sun_direction(SunPosition { altitude_deg: 15.0, azimuth_deg: 0.0 }).unwrap();
        assert!(raycast_shaded(Point3::new(0.0, 30.0, 0.9), &d, &[b.clone()]));
        assert!(!raycast_shaded(Point3::new(0.0, -30.0, 0.9), &d, &[b.clone()]));
        assert!(!raycast_shaded(Point3::new(0.0, 30.0, 61.0), &d, &[b]));
    }

    /// Dense ray marching with 1 cm steps as an independent oracle.
    fn march(p: Point3, d: &SunDirection, b: &Building) -> bool {
        let inside = |x: f64, y: f64, z: f64| {
            crate::scene::point_under_building(b, x, y) && z >= b.base_z_m && z <= b.top_z()
        };
        let t_max = (b.top_z() - p.z) / d.dz;
        if t_max < 0.0 {
            return false;
        }
        let steps = (t_max / 0.01).ceil() as usize;
        (0..=steps).any(|k| {
            let t = (k as f64 * 0.01).min(t_max);
            inside(p.x + t * d.dx, p.y + t * d.dy, p.z + t * d.dz)
        })
    }

    #[test]
    fn agrees_with_ray_marching() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut disagreements = 0;
        let n = 10_000;
        let mut hits = 0;
        for _ in 0..n {
            let b = Building::new(
                "r",
                (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)),
                (rng.random_range(2.0..10.0), rng.random_range(2.0..10.0), rng.random_range(2.0..12.0)),
                rng.random_range(0.0..180.0),
            )
            .unwrap()
            .with_base(rng.random_range(0.0..2.0));
            let d = sun_direction(SunPosition {
                altitude_deg: rng.random_range(8.0..80.0),
                azimuth_deg: rng.random_range(-90.0..90.0),
            })
            .unwrap();
            let p = Point3::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), rng.random_range(0.0..3.0));
            let fast = ray_hits_building(p, &d, &b);
            hits += fast as usize;
            if fast != march(p, &d, &b) {
                disagreements += 1;
            }
        }
        assert!(hits > 500, "too few hits to be meaningful: {hits}");
        // A marching step can skip a corner clipped by less than 1 cm.
        assert!(disagreements <= n / 1000, "{disagreements} disagreements");
    }
}
