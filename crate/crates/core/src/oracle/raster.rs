//! Scan-line fill of convex shadow polygons onto sampling grids.

use super::shadow::{shadow_polygon_unchecked, ConvexPolygon, EDGE_EPS};
use crate::error::{Error, Result};
use crate::scene::{Building, SamplingGrid, TerrainMesh};
use crate::solar::SunDirection;

/// Per-cell shade state at one instant (`true` = shaded).
#[derive(Debug, Clone, PartialEq)]
pub struct ShadeMask {
    pub grid: SamplingGrid,
    pub bits: Vec<bool>,
}

impl ShadeMask {
    pub fn shaded_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Calls `visit(cell_index)` for every grid point inside `poly`.
///
/// Membership is decided with the same span test as
/// [`ConvexPolygon::contains`], so filling and point queries agree exactly.
#[inline]
pub fn fill_polygon(grid: &SamplingGrid, poly: &ConvexPolygon, mut visit: impl FnMut(usize)) {
    if poly.is_empty() {
        return;
    }
    let ((_, ymin), (_, ymax)) = poly.bounds();
    let s = grid.spacing_m;
    let j_lo = (((ymin - grid.origin_y_m) / s).floor() as i64).max(0);
    let j_hi = (((ymax - grid.origin_y_m) / s).ceil() as i64).min(grid.ny as i64 - 1);
    if j_lo > j_hi {
        return;
    }
    for j in j_lo as usize..=j_hi as usize {
        let y = grid.y(j);
        let Some((lo, hi)) = poly.span_at(y) else {
            continue;
        };
        let (lo, hi) = (lo - EDGE_EPS, hi + EDGE_EPS);
        let mut i_lo = ((lo - grid.origin_x_m) / s).ceil().max(0.0) as usize;
        if i_lo >= grid.nx {
            continue;
        }
        while i_lo > 0 && grid.x(i_lo - 1) >= lo {
            i_lo -= 1;
        }
        while i_lo < grid.nx && grid.x(i_lo) < lo {
            i_lo += 1;
        }
        let hi_f = ((hi - grid.origin_x_m) / s).floor();
        if hi_f < 0.0 {
            continue;
        }
        let mut i_hi = (hi_f as usize).min(grid.nx - 1);
        while i_hi + 1 < grid.nx && grid.x(i_hi + 1) <= hi {
            i_hi += 1;
        }
        while i_hi > 0 && grid.x(i_hi) > hi {
            i_hi -= 1;
        }
        if i_lo > i_hi || grid.x(i_hi) > hi {
            continue;
        }
        let row = j * grid.nx;
        for i in i_lo..=i_hi {
            visit(row + i);
        }
    }
}

/// Instantaneous shade mask.
///
/// On flat sites every building's shadow polygon on the grid plane is
/// scan-line filled. With terrain each grid point is ray cast instead.
pub fn shade_mask(
    buildings: &[Building],
    d: &SunDirection,
    grid: &SamplingGrid,
    terrain: Option<&TerrainMesh>,
) -> Result<ShadeMask> {
    if !(d.dz > 0.0) {
        return Err(Error::SunBelowHorizon {
            altitude_deg: d.dz.clamp(-1.0, 1.0).asin().to_degrees(),
        });
    }
    let mut bits = vec![false; grid.len()];
    match terrain {
        None => {
            for b in buildings {
                let poly = shadow_polygon_unchecked(b, d, grid.plane_offset_m);
                fill_polygon(grid, &poly, |c| bits[c] = true);
            }
        }
        Some(t) => {
            for (c, p) in grid.points(Some(t)).into_iter().enumerate() {
                bits[c] = super::raycast::raycast_shaded(p, d, buildings);
            }
        }
    }
    Ok(ShadeMask { grid: *grid, bits })
}
