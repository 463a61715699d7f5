//! Multi-building assessment: interval union, site heatmaps and compliance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heatmap::Heatmap;
use crate::oracle::ShadingInterval;
use crate::par;
use crate::scene::{point_under_building, Building, Point3, SamplingGrid, Scene};
use crate::surrogate::IntervalPredictor;

/// Total length of the union of shading intervals.
///
/// Start and end times are sorted independently; the union is the span from
/// the first start to the last end minus every positive gap between the
/// m-th end and the (m+1)-th start. Empty intervals are ignored.
pub fn fast_union(intervals: &[ShadingInterval]) -> f64 {
    let mut starts = Vec::with_capacity(intervals.len());
    let mut ends = Vec::with_capacity(intervals.len());
    for i in intervals.iter().filter(|i| !i.is_empty()) {
        starts.push(i.start_h);
        ends.push(i.end_h());
    }
    union_sorted_in_place(&mut starts, &mut ends)
}

/// [`fast_union`] over parallel start/end buffers, which are sorted in place.
pub fn union_sorted_in_place(starts: &mut [f64], ends: &mut [f64]) -> f64 {
    debug_assert_eq!(starts.len(), ends.len());
    let m = starts.len();
    if m == 0 {
        return 0.0;
    }
    starts.sort_unstable_by(f64::total_cmp);
    ends.sort_unstable_by(f64::total_cmp);
    let mut total = ends[m - 1] - starts[0];
    for k in 0..m - 1 {
        total -= (starts[k + 1] - ends[k]).max(0.0);
    }
    total
}

const STACK_INTERVALS: usize = 32;

/// Sunlight hours at arbitrary points from per-building intervals. Points
/// under a footprint score 0.
pub fn predict_points<P: IntervalPredictor + ?Sized>(predictor: &P, scene: &Scene, points: &[Point3]) -> Result<Vec<f64>> {
    let period_h = scene.period.hours();
    let per_building = scene
        .buildings
        .iter()
        .map(|b| predictor.intervals(scene, b, points))
        .collect::<Result<Vec<_>>>()?;
    Ok(par::map_range(points.len(), |k| {
        let p = points[k];
        if scene.under_any_building(p.x, p.y) {
            return 0.0;
        }
        let shaded = if per_building.len() <= STACK_INTERVALS {
            let mut starts = [0.0; STACK_INTERVALS];
            let mut ends = [0.0; STACK_INTERVALS];
            let mut m = 0;
            for intervals in &per_building {
                let i = intervals[k];
                if !i.is_empty() {
                    starts[m] = i.start_h;
                    ends[m] = i.end_h();
                    m += 1;
                }
            }
            union_sorted_in_place(&mut starts[..m], &mut ends[..m])
        } else {
            let column: Vec<ShadingInterval> = per_building.iter().map(|iv| iv[k]).collect();
            fast_union(&column)
        };
        (period_h - shaded).clamp(0.0, period_h)
    }))
}

/// Site heatmap by divide and conquer: one interval per building and point,
/// then the fast union.
pub fn predict_site<P: IntervalPredictor + ?Sized>(predictor: &P, scene: &Scene, grid: &SamplingGrid) -> Result<Heatmap> {
    let points = grid.points(scene.terrain.as_ref());
    let values = predict_points(predictor, scene, &points)?;
    Ok(Heatmap { grid: *grid, values })
}

/// A grid cell used to read compliance for one building.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckPoint {
    pub i: usize,
    pub j: usize,
    pub x_m: f64,
    pub y_m: f64,
}

/// Footprint edges facing most directly south. Two edges tie when the
/// building sits at 45 degrees.
fn south_facades(b: &Building) -> Vec<((f64, f64), (f64, f64))> {
    let fp = b.footprint();
    let edges: Vec<_> = (0..4).map(|k| (fp[k], fp[(k + 1) % 4])).collect();
    // Counter-clockwise vertices: the outward normal of a->b is (dy, -dx).
    let ny: Vec<f64> = edges
        .iter()
        .map(|((ax, ay), (bx, by))| -(bx - ax) / (bx - ax).hypot(by - ay))
        .collect();
    let best = ny.iter().copied().fold(f64::INFINITY, f64::min);
    edges
        .into_iter()
        .zip(ny)
        .filter(|(_, n)| *n <= best + 1e-9)
        .map(|(e, _)| e)
        .collect()
}

/// Grid points just south of a building's south facade: for every grid
/// column over the facade, the nearest point strictly south of it that lies
/// outside all footprints.
pub fn check_points_for(b: &Building, buildings: &[Building], grid: &SamplingGrid) -> Vec<CheckPoint> {
    const EPS: f64 = 1e-9;
    let mut out: Vec<CheckPoint> = Vec::new();
    for ((ax, ay), (bx, by)) in south_facades(b) {
        let (x_lo, x_hi) = (ax.min(bx), ax.max(bx));
        let i_lo = ((x_lo - grid.origin_x_m) / grid.spacing_m - EPS).ceil().max(0.0) as usize;
        let i_hi = ((x_hi - grid.origin_x_m) / grid.spacing_m + EPS).floor();
        if i_hi < 0.0 {
            continue;
        }
        let i_hi = (i_hi as usize).min(grid.nx.saturating_sub(1));
        for i in i_lo..=i_hi {
            let x = grid.x(i);
            let y_facade = if (bx - ax).abs() < EPS {
                ay.min(by)
            } else {
                ay + (x - ax) * (by - ay) / (bx - ax)
            };
            let top = ((y_facade - grid.origin_y_m) / grid.spacing_m - EPS).ceil() - 1.0;
            if top < 0.0 {
                continue;
            }
            let mut j = (top as usize).min(grid.ny - 1);
            loop {
                let y = grid.y(j);
                if y < y_facade - EPS && !buildings.iter().any(|o| point_under_building(o, x, y)) {
                    if !out.iter().any(|c| c.i == i && c.j == j) {
                        out.push(CheckPoint { i, j, x_m: x, y_m: y });
                    }
                    break;
                }
                if j == 0 {
                    break;
                }
                j -= 1;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// No check point could be placed on the grid.
    Indeterminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckPointValue {
    pub x_m: f64,
    pub y_m: f64,
    pub sunlight_hours: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingCompliance {
    pub id: String,
    pub verdict: Verdict,
    pub check_points: Vec<CheckPointValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplianceReport {
    pub min_sunlight_hours: f64,
    pub buildings: Vec<BuildingCompliance>,
    /// True when every building passes.
    pub pass: bool,
}

/// Reads each building's check points from a heatmap of the scene.
pub fn check_compliance(heatmap: &Heatmap, scene: &Scene) -> ComplianceReport {
    let min_h = scene.min_sunlight_hours;
    let buildings: Vec<BuildingCompliance> = scene
        .buildings
        .iter()
        .map(|b| {
            let cps = check_points_for(b, &scene.buildings, &heatmap.grid);
            let values: Vec<CheckPointValue> = cps
                .iter()
                .map(|c| {
                    let h = heatmap.get(c.i, c.j);
                    CheckPointValue {
                        x_m: c.x_m,
                        y_m: c.y_m,
                        sunlight_hours: h,
                        pass: h >= min_h - 1e-9,
                    }
                })
                .collect();
            let verdict = if values.is_empty() {
                log::warn!("building {} has no check points on the grid", b.id);
                Verdict::Indeterminate
            } else if values.iter().all(|v| v.pass) {
                Verdict::Pass
            } else {
                Verdict::Fail
            };
            BuildingCompliance {
                id: b.id.clone(),
                verdict,
                check_points: values,
            }
        })
        .collect();
    let pass = buildings.iter().all(|b| b.verdict == Verdict::Pass);
    ComplianceReport {
        min_sunlight_hours: min_h,
        buildings,
        pass,
    }
}

/// Errors unless the heatmap was computed on `grid`.
pub fn ensure_same_grid(a: &SamplingGrid, b: &SamplingGrid) -> Result<()> {
    if a != b {
        return Err(Error::GridMismatch(format!("{a:?} vs {b:?}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::sunlight_hours_sc;
    use crate::surrogate::OraclePredictor;
    use proptest::prelude::*;

    fn iv(s: f64, e: f64) -> ShadingInterval {
        ShadingInterval { start_h: s, total_h: e - s }
    }

    /// Union length by marking whole minutes on a boolean mask. Exact for
    /// endpoints on the minute lattice.
    pub(crate) fn mask_union(intervals: &[ShadingInterval]) -> f64 {
        let mut mask = [false; 480];
        for i in intervals.iter().filter(|i| !i.is_empty()) {
            let a = (i.start_h * 60.0).round() as usize;
            let b = (i.end_h() * 60.0).round() as usize;
            for m in &mut mask[a..b] {
                *m = true;
            }
        }
        mask.iter().filter(|&&m| m).count() as f64 / 60.0
    }

    #[test]
    fn union_examples() {
        assert_eq!(fast_union(&[iv(1.0, 3.0)]), 2.0);
        assert_eq!(fast_union(&[iv(1.0, 3.0), iv(2.0, 5.0)]), 4.0);
        assert_eq!(fast_union(&[iv(0.0, 1.0), iv(2.0, 3.0), iv(7.0, 8.0)]), 3.0);
        assert_eq!(fast_union(&[]), 0.0);
        assert_eq!(fast_union(&[ShadingInterval::empty(8.0), iv(2.0, 3.0)]), 1.0);
        // Nested intervals.
        assert_eq!(fast_union(&[iv(1.0, 6.0), iv(2.0, 3.0), iv(4.0, 5.0)]), 5.0);
    }

    fn minute_interval() -> impl Strategy<Value = ShadingInterval> {
        (0u32..=480, 0u32..=480).prop_map(|(a, b)| {
            let (a, b) = (a.min(b), a.max(b));
            ShadingInterval { start_h: a as f64 / 60.0, total_h: (b - a) as f64 / 60.0 }
        })
    }

    proptest! {
        #[test]
        fn union_matches_mask(set in prop::collection::vec(minute_interval(), 0..=12)) {
            let fast = fast_union(&set);
            prop_assert!((fast - mask_union(&set)).abs() <= 1e-9);
        }

        #[test]
        fn union_is_permutation_invariant_and_bounded(set in prop::collection::vec(minute_interval(), 1..=12)) {
            let mut rev = set.clone();
            rev.reverse();
            let a = fast_union(&set);
            prop_assert!((a - fast_union(&rev)).abs() <= 1e-12);
            let max_single = set.iter().map(|i| i.total_h).fold(0.0, f64::max);
            let sum: f64 = set.iter().map(|i| i.total_h).sum();
            prop_assert!(a >= max_single - 1e-12 && a <= sum.min(8.0) + 1e-12);
        }
    }

    #[test]
    fn empty_scene_is_all_sunlit() {
        let scene = Scene::new(31.0, vec![]);
        let grid = SamplingGrid::new((0.0, 0.0), 1.0, 5, 4).unwrap();
        let h = predict_site(&crate::mlp::SurrogateModel::init(1), &scene, &grid).unwrap();
        assert!(h.values.iter().all(|&v| v == 8.0));
    }

    #[test]
    fn single_building_union_is_the_interval() {
        let b = Building::new("b", (0.0, 0.0), (30.0, 15.0, 45.0), 20.0).unwrap();
        let scene = Scene::new(30.0, vec![b.clone()]);
        let grid = SamplingGrid::new((-60.0, -20.0), 2.0, 61, 60).unwrap();
        let pred = OraclePredictor::default();
        let h = predict_site(&pred, &scene, &grid).unwrap();
        let pts = grid.points(None);
        let ivs = pred.intervals(&scene, &b, &pts).unwrap();
        for (k, (v, i)) in h.values.iter().zip(ivs).enumerate() {
            let p = pts[k];
            let expect = if point_under_building(&b, p.x, p.y) { 0.0 } else { 8.0 - i.total_h };
            assert!((v - expect).abs() < 1e-12);
        }
    }

    /// Every cell south of a facade column, chosen by scanning the whole
    /// grid.
    fn brute_force_check_points(b: &Building, all: &[Building], grid: &SamplingGrid) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for ((ax, ay), (bx, by)) in south_facades(b) {
            for i in 0..grid.nx {
                let x = grid.x(i);
                if x < ax.min(bx) - 1e-9 || x > ax.max(bx) + 1e-9 {
                    continue;
                }
                let yf = if (bx - ax).abs() < 1e-9 { ay.min(by) } else { ay + (x - ax) * (by - ay) / (bx - ax) };
                let mut best: Option<(f64, usize)> = None;
                for j in 0..grid.ny {
                    let y = grid.y(j);
                    let d = yf - y;
                    if d > 1e-9 && !all.iter().any(|o| point_under_building(o, x, y)) && best.is_none_or(|(bd, _)| d < bd) {
                        best = Some((d, j));
                    }
                }
                if let Some((_, j)) = best {
                    if !out.contains(&(i, j)) {
                        out.push((i, j));
                    }
                }
            }
        }
        out
    }

    #[test]
    fn axis_aligned_check_points_are_the_row_below() {
        let b = Building::new("b", (10.0, 10.0), (10.0, 6.0, 20.0), 0.0).unwrap();
        let grid = SamplingGrid::new((0.0, 0.0), 1.0, 21, 21).unwrap();
        let cps = check_points_for(&b, std::slice::from_ref(&b), &grid);
        // Facade at y = 7 from x = 5 to 15; row y = 6.
        assert_eq!(cps.len(), 11);
        assert!(cps.iter().all(|c| c.y_m == 6.0));
        let xs: Vec<f64> = cps.iter().map(|c| c.x_m).collect();
        assert_eq!(xs, (5..=15).map(|v| v as f64).collect::<Vec<_>>());
    }

    #[test]
    fn rotated_check_points_match_exhaustive_search() {
        let b = Building::new("r", (20.0, 25.0), (24.0, 10.0, 30.0), 30.0).unwrap();
        let neighbour = Building::new("n", (30.0, 8.0), (8.0, 8.0, 10.0), 0.0).unwrap();
        let all = vec![b.clone(), neighbour];
        let grid = SamplingGrid::new((0.0, 0.0), 0.7, 60, 60).unwrap();
        let cps = check_points_for(&b, &all, &grid);
        assert!(!cps.is_empty());
        let got: Vec<(usize, usize)> = cps.iter().map(|c| (c.i, c.j)).collect();
        assert_eq!(got, brute_force_check_points(&b, &all, &grid));
        for c in &cps {
            assert!(!all.iter().any(|o| point_under_building(o, c.x_m, c.y_m)));
        }
        // 45-degree buildings have two south-facing facades.
        let d = Building::new("d", (20.0, 25.0), (12.0, 12.0, 30.0), 45.0).unwrap();
        assert_eq!(south_facades(&d).len(), 2);
        let got: Vec<(usize, usize)> = check_points_for(&d, &[d.clone()], &grid).iter().map(|c| (c.i, c.j)).collect();
        assert_eq!(got, brute_force_check_points(&d, &[d.clone()], &grid));
    }

    #[test]
    fn grid_not_reaching_facade_gives_no_check_points() {
        let b = Building::new("b", (10.0, 10.0), (10.0, 6.0, 20.0), 0.0).unwrap();
        let grid = SamplingGrid::new((0.0, 20.0), 1.0, 21, 5).unwrap();
        assert!(check_points_for(&b, &[b.clone()], &grid).is_empty());
        let mut scene = Scene::new(31.0, vec![b]);
        scene.min_sunlight_hours = 2.0;
        let h = Heatmap::filled(grid, 8.0);
        let r = check_compliance(&h, &scene);
        assert_eq!(r.buildings[0].verdict, Verdict::Indeterminate);
        assert!(!r.pass);
    }

    #[test]
    fn canyon_fails_and_isolated_passes() {
        let north = Building::new("north", (0.0, 40.0), (40.0, 12.0, 30.0), 0.0).unwrap();
        let grid = SamplingGrid::new((-40.0, -40.0), 1.0, 81, 101).unwrap();
        let alone = Scene::new(31.0, vec![north.clone()]);
        let h = sunlight_hours_sc(&alone, &grid, 1.0).unwrap();
        let r = check_compliance(&h, &alone);
        assert!(r.pass, "{r:?}");

        // A 60 m slab whose north face is 10 m south of the facade.
        let slab = Building::new("slab", (0.0, 18.0), (80.0, 12.0, 60.0), 0.0).unwrap();
        let canyon = Scene::new(31.0, vec![north, slab]);
        let h = sunlight_hours_sc(&canyon, &grid, 1.0).unwrap();
        let r = check_compliance(&h, &canyon);
        assert!(!r.pass);
        assert_eq!(r.buildings[0].verdict, Verdict::Fail);
        assert!(r.buildings[0].check_points.iter().all(|c| c.sunlight_hours < 2.0));
    }
}
