//! Surrogate-versus-oracle experiments and the numerical domain checks.
//!
//! Heatmap accuracy is reported as `100 * (1 - MAE_minutes / 480)`, an
//! interpretation: the mean absolute error relative to the 8 h period.

use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{sample_scenario, world_grid, GridSpec, LatticeSpec, ScenarioSpec};
use crate::error::{Error, Result};
use crate::formats::model_from_json;
use crate::heatmap::Heatmap;
use crate::mlp::SurrogateModel;
use crate::optimizer::{ga_optimize, DecisionVector, Evaluator, GaConfig, Lattice, LayoutProblem, ObjectiveBreakdown};
use crate::oracle::{grid_shading_records, raycast_shaded, sunlight_hours_sc, ShadingInterval};
use crate::par;
use crate::scene::{
    in_valid_sampling_area, point_under_building, relative_size, Building, LocalPolarPoint, Point3, SamplingGrid,
    Scene,
};
use crate::scenes::OptimizationSite;
use crate::site::{check_compliance, ensure_same_grid, predict_site, ComplianceReport};
use crate::solar::{Period, SunPath};
use crate::surrogate::IntervalPredictor;

/// Minutes in the assessment period the accuracy is normalised by.
pub const ACCURACY_PERIOD_MIN: f64 = 480.0;

pub fn accuracy_pct(mae_min: f64) -> f64 {
    (100.0 * (1.0 - mae_min / ACCURACY_PERIOD_MIN)).clamp(0.0, 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timing {
    pub reference_s: f64,
    pub surrogate_load_s: f64,
    pub surrogate_s: f64,
}

impl Timing {
    /// Reference time over surrogate compute time, load excluded.
    pub fn speedup(&self) -> f64 {
        self.reference_s / self.surrogate_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// Mean absolute shaded-time (or sunlight-hour) error, minutes.
    pub mae_tt_min: f64,
    /// Mean absolute start-time error over points the reference shades,
    /// minutes. Absent for heatmap comparisons.
    pub mae_st_min: Option<f64>,
    pub accuracy_pct: f64,
    pub n_points: usize,
    pub timing: Option<Timing>,
}

/// Cell-wise comparison of two heatmaps on the same grid.
pub fn compare_heatmaps(a: &Heatmap, b: &Heatmap) -> Result<ComparisonReport> {
    compare_masked(a, b, |_| true)
}

/// As [`compare_heatmaps`], over cells where `keep(index)` holds.
pub fn compare_masked(a: &Heatmap, b: &Heatmap, keep: impl Fn(usize) -> bool) -> Result<ComparisonReport> {
    ensure_same_grid(&a.grid, &b.grid)?;
    let (mut sum, mut n) = (0.0, 0usize);
    for (k, (x, y)) in a.values.iter().zip(&b.values).enumerate() {
        if keep(k) {
            sum += (x - y).abs();
            n += 1;
        }
    }
    let mae = if n == 0 { 0.0 } else { 60.0 * sum / n as f64 };
    Ok(ComparisonReport {
        mae_tt_min: mae,
        mae_st_min: None,
        accuracy_pct: accuracy_pct(mae),
        n_points: n,
        timing: None,
    })
}

/// Accumulates per-point interval errors.
#[derive(Debug, Clone, Copy, Default)]
struct IntervalErrors {
    tt: f64,
    n: usize,
    st: f64,
    n_st: usize,
}

impl IntervalErrors {
    fn add(&mut self, got: &ShadingInterval, want: &ShadingInterval) {
        self.tt += (got.total_h - want.total_h).abs();
        self.n += 1;
        if want.total_h > 0.0 {
            self.st += (got.start_h - want.start_h).abs();
            self.n_st += 1;
        }
    }

    fn merge(mut self, o: Self) -> Self {
        self.tt += o.tt;
        self.n += o.n;
        self.st += o.st;
        self.n_st += o.n_st;
        self
    }

    fn report(&self, timing: Option<Timing>) -> ComparisonReport {
        let tt = if self.n == 0 { 0.0 } else { 60.0 * self.tt / self.n as f64 };
        let st = if self.n_st == 0 { 0.0 } else { 60.0 * self.st / self.n_st as f64 };
        ComparisonReport {
            mae_tt_min: tt,
            mae_st_min: Some(st),
            accuracy_pct: accuracy_pct(tt),
            n_points: self.n,
            timing,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleBuildingConfig {
    pub n_scenarios: usize,
    /// Grid spacing in units of the building's total size.
    pub spacing: f64,
    pub seed: u64,
    pub delta_t_min: f64,
}

impl Default for SingleBuildingConfig {
    fn default() -> Self {
        Self {
            n_scenarios: 256,
            spacing: 0.02,
            seed: 2024,
            delta_t_min: 1.0,
        }
    }
}

/// The coarse lattice extent at a finer spacing, without offsets.
fn evaluation_lattice(spacing: f64) -> SamplingGrid {
    let c = GridSpec::default().coarse;
    let l = LatticeSpec { spacing, max_offset: 0.0, ..c };
    let (nx, ny) = l.counts();
    SamplingGrid {
        origin_x_m: l.x_min,
        origin_y_m: l.y_min,
        spacing_m: spacing,
        nx,
        ny,
        plane_offset_m: 0.0,
    }
}

/// Per-point interval errors over random single-building scenarios. Every
/// grid point outside the footprint counts, including points outside the
/// valid sampling area, where the surrogate predicts no shade.
pub fn experiment_single_building<P: IntervalPredictor + ?Sized>(
    predictor: &P,
    config: &SingleBuildingConfig,
) -> Result<ComparisonReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let scenarios: Vec<ScenarioSpec> = (0..config.n_scenarios).map(|_| sample_scenario(&mut rng)).collect();
    let local = evaluation_lattice(config.spacing);
    let errors = scenarios
        .iter()
        .map(|s| scenario_errors(predictor, s, &local, config.delta_t_min))
        .collect::<Result<Vec<_>>>()?;
    Ok(errors.into_iter().fold(IntervalErrors::default(), IntervalErrors::merge).report(None))
}

fn scenario_errors<P: IntervalPredictor + ?Sized>(
    predictor: &P,
    s: &ScenarioSpec,
    local: &SamplingGrid,
    delta_t_min: f64,
) -> Result<IntervalErrors> {
    let b = s.building();
    let (_, total) = relative_size(&b, None)?;
    let grid = world_grid(local, total);
    let mut scene = Scene::new(s.latitude_deg, vec![b.clone()]);
    scene.period = Period::default();
    let path = SunPath::regulated(s.latitude_deg, scene.period, delta_t_min)?;
    let reference = grid_shading_records(&b, &grid, &path);
    let points: Vec<Point3> = grid.points(None);
    let predicted = predictor.intervals(&scene, &b, &points)?;
    let mut e = IntervalErrors::default();
    for (k, p) in points.iter().enumerate() {
        if !point_under_building(&b, p.x, p.y) {
            e.add(&predicted[k], &reference[k].interval);
        }
    }
    Ok(e)
}

/// Surrogate heatmap against the oracle heatmap on a multi-building site,
/// over cells outside every footprint. Both engines are timed on the
/// calling thread's pool; the model load is timed separately.
pub fn experiment_multi_building(
    model_json: &str,
    scene: &Scene,
    grid: &SamplingGrid,
    delta_t_min: f64,
) -> Result<(ComparisonReport, Heatmap, Heatmap)> {
    let t = Instant::now();
    let model = model_from_json(model_json)?;
    let load = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let predicted = predict_site(&model, scene, grid)?;
    let surrogate_s = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let reference = sunlight_hours_sc(scene, grid, delta_t_min)?;
    let reference_s = t.elapsed().as_secs_f64();
    let mut report = compare_masked(&predicted, &reference, |k| {
        let (i, j) = (k % grid.nx, k / grid.nx);
        !scene.under_any_building(grid.x(i), grid.y(j))
    })?;
    report.timing = Some(Timing {
        reference_s,
        surrogate_load_s: load,
        surrogate_s,
    });
    Ok((report, predicted, reference))
}

/// Ray-cast interval of each point against one building.
pub fn raycast_intervals(b: &Building, points: &[Point3], path: &SunPath) -> Vec<ShadingInterval> {
    let single = std::slice::from_ref(b);
    par::map_slice(points, |&p| {
        let mut first = None;
        let mut total = 0.0;
        for step in &path.steps {
            if raycast_shaded(p, &step.direction, single) {
                first.get_or_insert(step.offset_h);
                total += step.length_h;
            }
        }
        match first {
            Some(start_h) => ShadingInterval { start_h, total_h: total },
            None => ShadingInterval::empty(path.hours()),
        }
    })
}

/// Surrogate intervals on a terrain-draped grid against ray-cast intervals
/// for the single building of `scene`.
pub fn experiment_slope<P: IntervalPredictor + ?Sized>(
    predictor: &P,
    scene: &Scene,
    grid: &SamplingGrid,
    delta_t_min: f64,
) -> Result<ComparisonReport> {
    let [b] = scene.buildings.as_slice() else {
        return Err(Error::field("buildings", "slope experiment needs exactly one building"));
    };
    let points = grid.points(scene.terrain.as_ref());
    let path = SunPath::regulated(scene.latitude_deg, scene.period, delta_t_min)?;
    let t = Instant::now();
    let reference = raycast_intervals(b, &points, &path);
    let reference_s = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let predicted = predictor.intervals(scene, b, &points)?;
    let surrogate_s = t.elapsed().as_secs_f64();
    let mut e = IntervalErrors::default();
    for (k, p) in points.iter().enumerate() {
        if !point_under_building(b, p.x, p.y) {
            e.add(&predicted[k], &reference[k]);
        }
    }
    Ok(e.report(Some(Timing {
        reference_s,
        surrogate_load_s: 0.0,
        surrogate_s,
    })))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionCheck {
    pub decision: DecisionVector,
    /// The score the search itself reported.
    pub search_score: f64,
    pub oracle: ObjectiveBreakdown,
    pub oracle_compliance: ComplianceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub ga: GaConfig,
    pub surrogate_solution: SolutionCheck,
    pub oracle_solution: SolutionCheck,
    pub same_solution: bool,
    /// `|oracle(surrogate pick) - oracle(oracle pick)| / oracle(oracle pick)`.
    pub score_gap: f64,
    /// `100 * (1 - score_gap)`.
    pub accuracy_pct: f64,
    pub surrogate_search_s: f64,
    pub oracle_search_s: f64,
}

fn check_solution(site: &OptimizationSite, d: DecisionVector, search_score: f64, delta_t_min: f64) -> Result<SolutionCheck> {
    let problem = LayoutProblem {
        scene: site.scene.clone(),
        grid: site.grid,
        northern: site.northern.clone(),
        evaluator: Evaluator::Oracle { delta_t_min },
    };
    let oracle = problem.objective(&d)?;
    let scene = problem.scene_with(&d)?;
    let heatmap = sunlight_hours_sc(&scene, &site.grid, delta_t_min)?;
    Ok(SolutionCheck {
        decision: d,
        search_score,
        oracle,
        oracle_compliance: check_compliance(&heatmap, &scene),
    })
}

/// Runs the search with each evaluator and scores both picks with the oracle.
pub fn experiment_optimization(
    model: &SurrogateModel,
    site: &OptimizationSite,
    lattice: &Lattice,
    ga: &GaConfig,
    delta_t_min: f64,
) -> Result<OptimizationReport> {
    let run = |evaluator: Evaluator| -> Result<(DecisionVector, f64, f64)> {
        let problem = LayoutProblem {
            scene: site.scene.clone(),
            grid: site.grid,
            northern: site.northern.clone(),
            evaluator,
        };
        let t = Instant::now();
        let out = ga_optimize(lattice, ga, |d| problem.objective(d).map(|o| o.objective))?;
        Ok((out.best, out.best_score, t.elapsed().as_secs_f64()))
    };
    let (sd, ss, st) = run(Evaluator::Surrogate(model))?;
    let (od, os, ot) = run(Evaluator::Oracle { delta_t_min })?;
    let surrogate_solution = check_solution(site, sd, ss, delta_t_min)?;
    let oracle_solution = check_solution(site, od, os, delta_t_min)?;
    let reference = oracle_solution.oracle.objective;
    let score_gap = if reference > 0.0 {
        (surrogate_solution.oracle.objective - reference).abs() / reference
    } else {
        f64::INFINITY
    };
    Ok(OptimizationReport {
        ga: *ga,
        same_solution: sd == od,
        surrogate_solution,
        oracle_solution,
        score_gap,
        accuracy_pct: (100.0 * (1.0 - score_gap)).max(0.0),
        surrogate_search_s: st,
        oracle_search_s: ot,
    })
}

/// Multi-run incidence over random scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncidenceReport {
    pub n_scenarios: usize,
    pub n_points: usize,
    pub n_multi: usize,
    pub incidence: f64,
}

/// Fraction of coarse-lattice points (outside the footprint) shaded in more
/// than one disjoint run by a single building.
pub fn proof_c1(n_scenarios: usize, seed: u64, delta_t_min: f64) -> Result<IncidenceReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scenarios: Vec<ScenarioSpec> = (0..n_scenarios).map(|_| sample_scenario(&mut rng)).collect();
    let local = evaluation_lattice(GridSpec::default().coarse.spacing);
    let counts = par::map_slice(&scenarios, |s| -> Result<(usize, usize)> {
        let b = s.building();
        let (_, total) = relative_size(&b, None)?;
        let grid = world_grid(&local, total);
        let path = SunPath::regulated(s.latitude_deg, Period::default(), delta_t_min)?;
        let recs = grid_shading_records(&b, &grid, &path);
        let (mut n, mut multi) = (0, 0);
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                if point_under_building(&b, grid.x(i), grid.y(j)) {
                    continue;
                }
                n += 1;
                multi += usize::from(recs[grid.index(i, j)].runs > 1);
            }
        }
        Ok((n, multi))
    });
    let (mut n_points, mut n_multi) = (0, 0);
    for c in counts {
        let (n, m) = c?;
        n_points += n;
        n_multi += m;
    }
    Ok(IncidenceReport {
        n_scenarios,
        n_points,
        n_multi,
        incidence: if n_points == 0 { 0.0 } else { n_multi as f64 / n_points as f64 },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub n_scenarios: usize,
    pub n_shaded: usize,
    pub n_inside: usize,
    pub fraction: f64,
}

/// Local lattice used to find shaded points well beyond the valid area.
pub const COVERAGE_LATTICE: LatticeSpec = LatticeSpec {
    spacing: 0.1,
    x_min: -8.0,
    x_max: 8.0,
    y_min: -1.0,
    y_max: 8.0,
    max_offset: 0.0,
};

/// Fraction of shaded points (outside the footprint) that fall inside the
/// valid sampling area.
pub fn proof_c3(n_scenarios: usize, seed: u64, delta_t_min: f64) -> Result<CoverageReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scenarios: Vec<ScenarioSpec> = (0..n_scenarios).map(|_| sample_scenario(&mut rng)).collect();
    let (nx, ny) = COVERAGE_LATTICE.counts();
    let local = SamplingGrid {
        origin_x_m: COVERAGE_LATTICE.x_min,
        origin_y_m: COVERAGE_LATTICE.y_min,
        spacing_m: COVERAGE_LATTICE.spacing,
        nx,
        ny,
        plane_offset_m: 0.0,
    };
    let counts = par::map_slice(&scenarios, |s| -> Result<(usize, usize)> {
        let b = s.building();
        let (_, total) = relative_size(&b, None)?;
        let grid = world_grid(&local, total);
        let path = SunPath::regulated(s.latitude_deg, Period::default(), delta_t_min)?;
        let recs = grid_shading_records(&b, &grid, &path);
        let (mut shaded, mut inside) = (0, 0);
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                if recs[grid.index(i, j)].runs == 0 || point_under_building(&b, grid.x(i), grid.y(j)) {
                    continue;
                }
                shaded += 1;
                let polar = LocalPolarPoint::from_local_xy(local.x(i), local.y(j));
                inside += usize::from(in_valid_sampling_area(polar));
            }
        }
        Ok((shaded, inside))
    });
    let (mut n_shaded, mut n_inside) = (0, 0);
    for c in counts {
        let (s, i) = c?;
        n_shaded += s;
        n_inside += i;
    }
    Ok(CoverageReport {
        n_scenarios,
        n_shaded,
        n_inside,
        fraction: if n_shaded == 0 { 1.0 } else { n_inside as f64 / n_shaded as f64 },
    })
}

/// Which engine a speed measurement times.
#[derive(Debug, Clone, Copy)]
pub enum Engine<'a> {
    Oracle { delta_t_min: f64 },
    Surrogate(&'a SurrogateModel),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedReport {
    pub seconds: f64,
    pub n_points: usize,
    /// Oracle time steps; the surrogate is charged the same count.
    pub n_steps: usize,
    pub seconds_per_step_per_point: f64,
}

/// Wall-clock cost of one site evaluation per time step per point.
pub fn speed_metric(engine: Engine, scene: &Scene, grid: &SamplingGrid, delta_t_min: f64) -> Result<SpeedReport> {
    let n_steps = SunPath::regulated(scene.latitude_deg, scene.period, delta_t_min)?.steps.len();
    let t = Instant::now();
    match engine {
        Engine::Oracle { delta_t_min } => {
            sunlight_hours_sc(scene, grid, delta_t_min)?;
        }
        Engine::Surrogate(m) => {
            predict_site(m, scene, grid)?;
        }
    }
    let seconds = t.elapsed().as_secs_f64();
    Ok(SpeedReport {
        seconds,
        n_points: grid.len(),
        n_steps,
        seconds_per_step_per_point: seconds / (n_steps * grid.len()) as f64,
    })
}

/// Writes any report as pretty JSON.
pub fn write_report<T: Serialize>(path: &Path, report: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(report)?)?;
    Ok(())
}
