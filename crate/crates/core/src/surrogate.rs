//! Per-(building, point) shading intervals, from the MLP or from the oracle.

use crate::error::Result;
use crate::mlp::{post_revise, FeatureVector, FixedNet, SurrogateModel, LANES};
use crate::oracle::{shading_records, ShadingInterval};
use crate::par;
use crate::scene::{
    in_valid_sampling_area, to_surrogate_inputs, world_to_building_frame, Building, LocalPolarPoint, Point3, Scene,
    LOCAL_CENTER_OFFSET, VALID_R,
};
use crate::solar::SunPath;

/// Where a query falls relative to the surrogate's domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Query {
    /// The point is at or above the roof; the building cannot shade it.
    AboveRoof,
    /// Outside the valid sampling area; treated as never shaded.
    OutOfDomain,
    InDomain(FeatureVector),
}

/// Builds the feature vector for a world point against one building.
pub fn query(latitude_deg: f64, b: &Building, p: Point3) -> Query {
    let (x, y, z) = world_to_building_frame(b, p);
    let Ok(inputs) = to_surrogate_inputs(b, x, y, z) else {
        return Query::AboveRoof;
    };
    if !in_valid_sampling_area(inputs.polar) {
        return Query::OutOfDomain;
    }
    Query::InDomain(FeatureVector {
        latitude_deg,
        r_l: inputs.size.r_l,
        r_w: inputs.size.r_w,
        r_h: inputs.size.r_h,
        orientation_deg: b.orientation_deg,
        theta_deg: inputs.polar.theta_deg,
        r: inputs.polar.r,
    })
}

/// MLP shading interval of `p` against `b`.
pub fn predict_interval(model: &SurrogateModel, latitude_deg: f64, period_h: f64, b: &Building, p: Point3) -> ShadingInterval {
    match query(latitude_deg, b, p) {
        Query::InDomain(f) => {
            let (st_raw, tt_raw) = model.forward_array(&f.to_array());
            let (st, tt) = post_revise(st_raw, tt_raw, period_h);
            ShadingInterval { start_h: st, total_h: tt }
        }
        _ => ShadingInterval::empty(period_h),
    }
}

/// Anything that yields one shading interval per point for a building.
pub trait IntervalPredictor: Sync {
    fn intervals(&self, scene: &Scene, b: &Building, points: &[Point3]) -> Result<Vec<ShadingInterval>>;
}

impl IntervalPredictor for SurrogateModel {
    /// Equivalent to [`predict_interval`] per point. The first layer's
    /// point-independent part is computed once per building and height, and
    /// in-domain points are evaluated in lanes.
    fn intervals(&self, scene: &Scene, b: &Building, points: &[Point3]) -> Result<Vec<ShadingInterval>> {
        let period_h = scene.period.hours();
        let net = FixedNet::new(self)?;
        const CHUNK: usize = 1024;
        let chunks = par::map_range(points.len().div_ceil(CHUNK), |c| {
            let slice = &points[c * CHUNK..((c + 1) * CHUNK).min(points.len())];
            let mut out = vec![ShadingInterval::empty(period_h); slice.len()];
            let mut lanes = Lanes::default();
            let mut cached: Option<(u64, f64, [f64; 16])> = None;
            for (k, &p) in slice.iter().enumerate() {
                let (x, y, z) = world_to_building_frame(b, p);
                if z >= b.height_m {
                    continue;
                }
                let (reduced, head) = match cached {
                    Some((bits, reduced, head)) if bits == z.to_bits() => (reduced, head),
                    _ => {
                        if let Some((_, _, head)) = cached {
                            lanes.flush(&net, &head, period_h, &mut out);
                        }
                        let reduced = b.length_m + b.width_m + b.height_m - z;
                        let head = net.head(&FeatureVector {
                            latitude_deg: scene.latitude_deg,
                            r_l: b.length_m / reduced,
                            r_w: b.width_m / reduced,
                            r_h: (b.height_m - z) / reduced,
                            orientation_deg: b.orientation_deg,
                            theta_deg: 0.0,
                            r: 0.0,
                        });
                        cached = Some((z.to_bits(), reduced, head));
                        (reduced, head)
                    }
                };
                let (rx, ry) = (x / reduced, y / reduced + LOCAL_CENTER_OFFSET);
                if clearly_out_of_domain(rx, ry) {
                    continue;
                }
                let polar = LocalPolarPoint::from_local_xy(rx, ry);
                if !in_valid_sampling_area(polar) {
                    continue;
                }
                if lanes.push(k, polar) {
                    lanes.flush(&net, &head, period_h, &mut out);
                }
            }
            if let Some((_, _, head)) = cached {
                lanes.flush(&net, &head, period_h, &mut out);
            }
            out
        });
        Ok(chunks.into_iter().flatten().collect())
    }
}

/// Cheap conservative rejection ahead of the exact polar test.
#[inline]
fn clearly_out_of_domain(rx: f64, ry: f64) -> bool {
    const TAN_30: f64 = 0.577_350_269_189_625_8;
    let r2 = rx * rx + ry * ry;
    let (lo, hi) = (VALID_R.0 * VALID_R.0, VALID_R.1 * VALID_R.1);
    r2 > hi * (1.0 + 1e-9) || r2 < lo * (1.0 - 1e-9) || ry < rx.abs() * TAN_30 - 1e-9
}

#[derive(Default)]
struct Lanes {
    index: [usize; LANES],
    theta: [f64; LANES],
    r: [f64; LANES],
    len: usize,
}

impl Lanes {
    /// Queues a query; true when the lanes are full.
    fn push(&mut self, index: usize, p: LocalPolarPoint) -> bool {
        self.index[self.len] = index;
        self.theta[self.len] = p.theta_deg;
        self.r[self.len] = p.r;
        self.len += 1;
        self.len == LANES
    }

    fn flush(&mut self, net: &FixedNet, head: &[f64; 16], period_h: f64, out: &mut [ShadingInterval]) {
        if self.len == 0 {
            return;
        }
        let (st_raw, tt_raw) = net.tail_lanes(head, &self.theta, &self.r);
        for l in 0..self.len {
            let (st, tt) = post_revise(st_raw[l], tt_raw[l], period_h);
            out[self.index[l]] = ShadingInterval { start_h: st, total_h: tt };
        }
        self.len = 0;
    }
}

/// The stepped oracle exposed through the predictor interface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OraclePredictor {
    pub delta_t_min: f64,
}

impl Default for OraclePredictor {
    fn default() -> Self {
        Self { delta_t_min: 1.0 }
    }
}

impl IntervalPredictor for OraclePredictor {
    fn intervals(&self, scene: &Scene, b: &Building, points: &[Point3]) -> Result<Vec<ShadingInterval>> {
        let path = SunPath::regulated(scene.latitude_deg, scene.period, self.delta_t_min)?;
        Ok(shading_records(b, points, &path).into_iter().map(|r| r.interval).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene_with(b: Building) -> Scene {
        Scene::new(31.0, vec![b])
    }

    #[test]
    fn above_roof_and_far_points_are_unshaded() {
        let model = SurrogateModel::init(3);
        let b = Building::new("b", (0.0, 0.0), (30.0, 20.0, 40.0), 0.0).unwrap();
        let roof = predict_interval(&model, 31.0, 8.0, &b, Point3::new(0.0, 30.0, 40.0));
        assert_eq!(roof, ShadingInterval::empty(8.0));
        // r > 3.2 in units of the total size (90 m).
        let far = predict_interval(&model, 31.0, 8.0, &b, Point3::new(0.0, 300.0, 0.9));
        assert_eq!(far, ShadingInterval::empty(8.0));
        // South of the building theta drops below 30 degrees.
        assert_eq!(query(31.0, &b, Point3::new(0.0, -40.0, 0.9)), Query::OutOfDomain);
    }

    #[test]
    fn zero_model_predicts_no_shade() {
        let b = Building::new("b", (0.0, 0.0), (30.0, 20.0, 40.0), 0.0).unwrap();
        let i = predict_interval(&SurrogateModel::zeros(), 31.0, 8.0, &b, Point3::new(0.0, 40.0, 0.9));
        assert!(i.is_empty() && i.is_valid(8.0));
    }

    #[test]
    fn predictions_are_scale_invariant() {
        let model = SurrogateModel::init(5);
        let b = Building::new("b", (12.0, -7.0), (33.0, 18.0, 51.0), 27.0).unwrap();
        for k in [0.1, 0.5, 3.0, 17.0] {
            let s = Building::new("s", (12.0 * k, -7.0 * k), (33.0 * k, 18.0 * k, 51.0 * k), 27.0).unwrap();
            for (x, y) in [(0.0, 60.0), (-40.0, 35.0), (55.0, 120.0)] {
                let a = query(31.0, &b, Point3::new(12.0 + x, -7.0 + y, 0.9));
                let c = query(31.0, &s, Point3::new((12.0 + x) * k, (-7.0 + y) * k, 0.9 * k));
                let (Query::InDomain(fa), Query::InDomain(fc)) = (a, c) else {
                    panic!("expected in-domain queries at ({x}, {y})");
                };
                let (pa, pc) = (model.forward_array(&fa.to_array()), model.forward_array(&fc.to_array()));
                assert!((pa.0 - pc.0).abs() < 1e-9 && (pa.1 - pc.1).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn bulk_intervals_equal_per_point_predictions() {
        let model = SurrogateModel::init(8);
        let b = Building::new("b", (5.0, -3.0), (30.0, 20.0, 40.0), 35.0).unwrap().with_base(2.0);
        let scene = scene_with(b.clone());
        let mut pts = Vec::new();
        for k in 0..400 {
            let z = [2.9, 2.9, 10.0, 45.0][k % 4];
            pts.push(Point3::new(-150.0 + (k % 20) as f64 * 15.0, -40.0 + (k / 20) as f64 * 12.0, z));
        }
        let bulk = model.intervals(&scene, &b, &pts).unwrap();
        let mut shaded = 0;
        for (p, got) in pts.iter().zip(&bulk) {
            let want = predict_interval(&model, scene.latitude_deg, 8.0, &b, *p);
            assert_eq!(got.start_h.to_bits(), want.start_h.to_bits());
            assert_eq!(got.total_h.to_bits(), want.total_h.to_bits());
            shaded += (!got.is_empty()) as usize;
        }
        assert!(shaded > 0);
    }

    #[test]
    fn oracle_predictor_matches_shading_intervals() {
        let b = Building::new("b", (0.0, 0.0), (30.0, 20.0, 40.0), 10.0).unwrap();
        let scene = scene_with(b.clone());
        let pts: Vec<Point3> = (0..20).map(|k| Point3::new(-30.0 + 3.0 * k as f64, 40.0, 0.9)).collect();
        let got = OraclePredictor::default().intervals(&scene, &b, &pts).unwrap();
        let want = crate::oracle::shading_intervals_sc(&b, &pts, 31.0, scene.period, 1.0).unwrap();
        assert_eq!(got, want);
        assert!(got.iter().any(|i| !i.is_empty()));
    }
}
