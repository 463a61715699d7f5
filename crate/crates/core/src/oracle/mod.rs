//! Stepped shading-calculation oracle.
//!
//! The sun is sampled at the midpoint of each time step; a point is sunlit
//! during a step when no building shadow covers it. Flat sites use
//! scan-line filling of analytical shadow polygons, terrain sites use ray
//! casting per point.

pub mod raster;
pub mod raycast;
pub mod shadow;

use serde::{Deserialize, Serialize};

pub use raster::{fill_polygon, shade_mask, ShadeMask};
pub use raycast::{ray_hits_building, raycast_shaded};
pub use shadow::{shadow_polygon, ConvexPolygon};

use crate::error::Result;
use crate::heatmap::Heatmap;
use crate::par;
use crate::scene::{Building, Point3, SamplingGrid, Scene};
use crate::solar::SunPath;
use shadow::shadow_polygon_unchecked;

/// When a point is shaded by one building, in hours from the period start.
///
/// The empty interval is `start_h = P, total_h = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShadingInterval {
    pub start_h: f64,
    pub total_h: f64,
}

impl ShadingInterval {
    pub fn empty(period_h: f64) -> Self {
        Self {
            start_h: period_h,
            total_h: 0.0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.total_h <= 0.0
    }

    pub fn end_h(&self) -> f64 {
        self.start_h + self.total_h
    }

    /// Checks the representation invariants for a period of `period_h`.
    pub fn is_valid(&self, period_h: f64) -> bool {
        const EPS: f64 = 1e-9;
        self.start_h >= -EPS
            && self.total_h >= -EPS
            && self.total_h <= period_h + EPS
            && self.start_h + self.total_h <= period_h + EPS
    }
}

/// Per-point shading record against one building.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShadingRecord {
    pub interval: ShadingInterval,
    /// Number of disjoint shaded runs.
    pub runs: usize,
}

/// Oracle heatmap at a regulated step of `delta_t_min` minutes.
pub fn sunlight_hours_sc(scene: &Scene, grid: &SamplingGrid, delta_t_min: f64) -> Result<Heatmap> {
    let path = SunPath::regulated(scene.latitude_deg, scene.period, delta_t_min)?;
    Ok(sunlight_hours_on_path(scene, grid, &path))
}

/// Rows per parallel band of the scan-line accumulation.
const BAND_ROWS: usize = 8;

/// Oracle heatmap along an arbitrary precomputed sun path.
pub fn sunlight_hours_on_path(scene: &Scene, grid: &SamplingGrid, path: &SunPath) -> Heatmap {
    let period_h = path.hours();
    let mut values = if scene.terrain.is_some() {
        let points = grid.points(scene.terrain.as_ref());
        sunlight_at_points(scene, &points, path)
    } else {
        let mut shaded = vec![0.0; grid.len()];
        par::for_each_chunk_mut(&mut shaded, BAND_ROWS * grid.nx, |band, out| {
            let rows = out.len() / grid.nx;
            let sub = SamplingGrid {
                origin_y_m: grid.y(band * BAND_ROWS),
                ny: rows,
                ..*grid
            };
            accumulate_band(&scene.buildings, &sub, path, out);
        });
        shaded.into_iter().map(|s| (period_h - s).max(0.0)).collect()
    };
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            if scene.under_any_building(grid.x(i), grid.y(j)) {
                values[grid.index(i, j)] = 0.0;
            }
        }
    }
    Heatmap { grid: *grid, values }
}

fn accumulate_band(buildings: &[Building], band: &SamplingGrid, path: &SunPath, shaded: &mut [f64]) {
    let mut stamp = vec![usize::MAX; band.len()];
    for (k, step) in path.steps.iter().enumerate() {
        for b in buildings {
            let poly = shadow_polygon_unchecked(b, &step.direction, band.plane_offset_m);
            fill_polygon(band, &poly, |c| {
                if stamp[c] != k {
                    stamp[c] = k;
                    shaded[c] += step.length_h;
                }
            });
        }
    }
}

/// Shadow polygons of a building set for every step, at one plane height.
struct PolygonTable {
    per_step: Vec<Vec<ConvexPolygon>>,
}

impl PolygonTable {
    fn new(buildings: &[Building], path: &SunPath, plane_z: f64) -> Self {
        let per_step = path
            .steps
            .iter()
            .map(|s| {
                buildings
                    .iter()
                    .map(|b| shadow_polygon_unchecked(b, &s.direction, plane_z))
                    .filter(|p| !p.is_empty())
                    .collect()
            })
            .collect();
        Self { per_step }
    }
}

/// Groups point indices by exact z value, preserving first-seen order.
fn group_by_height(points: &[Point3]) -> Vec<(f64, Vec<usize>)> {
    let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
    for (k, p) in points.iter().enumerate() {
        match groups.iter_mut().find(|(z, _)| z.to_bits() == p.z.to_bits()) {
            Some((_, idx)) => idx.push(k),
            None => groups.push((p.z, vec![k])),
        }
    }
    groups
}

/// Oracle sunlight hours at arbitrary points. Points under a footprint
/// score 0. Terrain scenes are ray cast.
pub fn sunlight_at_points(scene: &Scene, points: &[Point3], path: &SunPath) -> Vec<f64> {
    let period_h = path.hours();
    let mut out = vec![0.0; points.len()];
    if scene.terrain.is_some() {
        out = par::map_slice(points, |&p| {
            let shaded: f64 = path
                .steps
                .iter()
                .filter(|s| raycast_shaded(p, &s.direction, &scene.buildings))
                .map(|s| s.length_h)
                .sum();
            (period_h - shaded).max(0.0)
        });
    } else {
        for (z, idx) in group_by_height(points) {
            let table = PolygonTable::new(&scene.buildings, path, z);
            let vals = par::map_slice(&idx, |&k| {
                let p = points[k];
                let mut shaded = 0.0;
                for (step, polys) in path.steps.iter().zip(&table.per_step) {
                    if polys.iter().any(|poly| poly.contains(p.x, p.y)) {
                        shaded += step.length_h;
                    }
                }
                (period_h - shaded).max(0.0)
            });
            for (&k, v) in idx.iter().zip(vals) {
                out[k] = v;
            }
        }
    }
    for (v, p) in out.iter_mut().zip(points) {
        if scene.under_any_building(p.x, p.y) {
            *v = 0.0;
        }
    }
    out
}

/// Shading interval of each point against a single building at a
/// regulated step.
pub fn shading_intervals_sc(
    b: &Building,
    points: &[Point3],
    latitude_deg: f64,
    period: crate::solar::Period,
    delta_t_min: f64,
) -> Result<Vec<ShadingInterval>> {
    let path = SunPath::regulated(latitude_deg, period, delta_t_min)?;
    Ok(shading_records(b, points, &path).into_iter().map(|r| r.interval).collect())
}

/// Shading interval and run count of each point against one building.
///
/// `start_h` is the start of the first shaded step and `total_h` the summed
/// shaded time; multiple runs are folded into that single interval.
pub fn shading_records(b: &Building, points: &[Point3], path: &SunPath) -> Vec<ShadingRecord> {
    let period_h = path.hours();
    let mut out = vec![
        ShadingRecord {
            interval: ShadingInterval::empty(period_h),
            runs: 0
        };
        points.len()
    ];
    let single = std::slice::from_ref(b);
    for (z, idx) in group_by_height(points) {
        let table = PolygonTable::new(single, path, z);
        let recs = par::map_slice(&idx, |&k| {
            let p = points[k];
            let mut first = None;
            let mut total = 0.0;
            let mut runs = 0;
            let mut prev = false;
            for (step, polys) in path.steps.iter().zip(&table.per_step) {
                let shaded = polys.iter().any(|poly| poly.contains(p.x, p.y));
                if shaded {
                    if first.is_none() {
                        first = Some(step.offset_h);
                    }
                    total += step.length_h;
                    if !prev {
                        runs += 1;
                    }
                }
                prev = shaded;
            }
            ShadingRecord {
                interval: match first {
                    Some(start_h) => ShadingInterval { start_h, total_h: total },
                    None => ShadingInterval::empty(period_h),
                },
                runs,
            }
        });
        for (&k, r) in idx.iter().zip(recs) {
            out[k] = r;
        }
    }
    out
}

/// [`shading_records`] for every point of a flat grid, by filling each
/// step's shadow polygon instead of testing points one by one.
pub fn grid_shading_records(b: &Building, grid: &SamplingGrid, path: &SunPath) -> Vec<ShadingRecord> {
    let period_h = path.hours();
    let n = grid.len();
    let mut first = vec![f64::NAN; n];
    let mut total = vec![0.0; n];
    let mut runs = vec![0usize; n];
    let mut last_step = vec![usize::MAX; n];
    for (k, step) in path.steps.iter().enumerate() {
        let poly = shadow_polygon_unchecked(b, &step.direction, grid.plane_offset_m);
        fill_polygon(grid, &poly, |c| {
            if last_step[c] == usize::MAX {
                first[c] = step.offset_h;
            }
            if k == 0 || last_step[c] != k - 1 {
                runs[c] += 1;
            }
            last_step[c] = k;
            total[c] += step.length_h;
        });
    }
    (0..n)
        .map(|c| ShadingRecord {
            interval: if runs[c] == 0 {
                ShadingInterval::empty(period_h)
            } else {
                ShadingInterval {
                    start_h: first[c],
                    total_h: total[c],
                }
            },
            runs: runs[c],
        })
        .collect()
}
