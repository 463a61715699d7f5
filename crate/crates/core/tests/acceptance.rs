//! Acceptance suite. Prints one line per criterion and exits non-zero when
//! any criterion fails.
//!
//! Criteria 7, 8, 9 and 11 load the shipped model from
//! `models/surrogate.json`.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sunhours::formats::{
    export_heatmap, import_heatmap_csv, import_heatmap_json, model_from_json, model_to_json, HeatmapFormat,
    SceneDocument, Strictness,
};
use sunhours::mlp::{Sample, SurrogateModel, FeatureVector};
use sunhours::optimizer::{exhaustive_optimum, ga_optimize, Evaluator, GaConfig, Lattice, LayoutProblem};
use sunhours::oracle::{raycast_shaded, shade_mask, shading_records, sunlight_hours_sc, ShadingInterval};
use sunhours::scene::{point_under_building, Building, Point3, SamplingGrid};
use sunhours::scenes::{canyon_site, multi_building_site, optimization_site};
use sunhours::site::{fast_union, predict_site};
use sunhours::solar::{reference_day, solar_declination, sun_direction, sun_position, Period, SunPath};
use sunhours::surrogate::{query, OraclePredictor, Query};
use sunhours::validation::{
    experiment_multi_building, experiment_optimization, experiment_single_building, proof_c1, proof_c3,
    SingleBuildingConfig,
};

// Pinned tolerances and sample sizes.
const UNION_SETS: usize = 10_000;
const RASTER_SCENES: usize = 100;
const RASTER_MAX_MISMATCH: f64 = 0.001;
const BOUNDARY_PROBE_M: f64 = 1e-6;
const INVARIANCE_CASES: usize = 200;
const ONE_STEP_H: f64 = 1.0 / 60.0;
const STEP_SLACK_H: f64 = 1e-9;
const GRADIENT_PAIRS: usize = 100;
const GRADIENT_MAX_REL: f64 = 1e-4;
const GRADIENT_FD_H: f64 = 1e-5;
const GRADIENT_DENOM_FLOOR: f64 = 1e-4;
const PROOF_SCENARIOS: usize = 500;
const C1_MAX_INCIDENCE: f64 = 1e-4;
const C3_MIN_FRACTION: f64 = 0.90;
const HELD_OUT_SCENARIOS: usize = 64;
const HELD_OUT_SEED: u64 = 9_001;
const MIN_TRAINING_ROUNDS: usize = 20;
const MAX_TRAINING_S: f64 = 4.0 * 3600.0;
const MAX_TT_MAE_MIN: f64 = 5.0;
const MAX_ST_MAE_MIN: f64 = 12.0;
const MIN_SITE_ACCURACY_PCT: f64 = 95.0;
const MIN_SPEEDUP: f64 = 10.0;
const TIMING_REPEATS: usize = 5;
const MIN_UNION_AGREEMENT: f64 = 0.999;
const MAX_SCORE_GAP: f64 = 0.05;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn repo(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn shipped_model() -> Result<(String, SurrogateModel), String> {
    let path = repo("models/surrogate.json");
    let text = std::fs::read_to_string(&path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let model = model_from_json(&text).map_err(|e| format!("bad model: {e}"))?;
    Ok((text, model))
}

// 1. Sorted-endpoint union against a minute occupancy mask.

fn union_against_mask() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut failures = 0;
    for _ in 0..UNION_SETS {
        let m = rng.random_range(0..=12);
        let mut mask = [false; 480];
        let intervals: Vec<ShadingInterval> = (0..m)
            .map(|_| {
                let start = rng.random_range(0..480u32);
                let len = rng.random_range(0..=480 - start);
                for minute in start..start + len {
                    mask[minute as usize] = true;
                }
                ShadingInterval {
                    start_h: start as f64 / 60.0,
                    total_h: len as f64 / 60.0,
                }
            })
            .collect();
        let expected = mask.iter().filter(|&&b| b).count() as f64 / 60.0;
        let err = (fast_union(&intervals) - expected).abs();
        worst = worst.max(err);
        failures += usize::from(err > 1e-9);
    }
    outcome(
        failures == 0,
        format!("{UNION_SETS} sets, {failures} mismatches, max error {worst:.2e} h"),
    )
}

// 2. Scan-line fill against ray casting.

fn random_building(rng: &mut ChaCha8Rng, id: usize) -> Building {
    Building::new(
        format!("b{id}"),
        (rng.random_range(-60.0..60.0), rng.random_range(-60.0..60.0)),
        (rng.random_range(10.0..60.0), rng.random_range(8.0..25.0), rng.random_range(6.0..80.0)),
        rng.random_range(-90.0..90.0),
    )
    .unwrap()
}

fn scanline_against_raycast() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let grid = SamplingGrid::new((-100.0, -100.0), 1.0, 201, 201).unwrap().with_plane_offset(0.9);
    let (mut cells, mut differ, mut off_boundary) = (0usize, 0usize, 0usize);
    for _ in 0..RASTER_SCENES {
        let n = rng.random_range(1..=4);
        let buildings: Vec<Building> = (0..n).map(|k| random_building(&mut rng, k)).collect();
        let latitude = rng.random_range(18.0..50.0);
        let hour = rng.random_range(8.0..16.0);
        let pos = sun_position(latitude, solar_declination(reference_day()), hour);
        let d = sun_direction(pos).unwrap();
        let mask = shade_mask(&buildings, &d, &grid, None).unwrap();
        for (c, p) in grid.points(None).into_iter().enumerate() {
            if buildings.iter().any(|b| point_under_building(b, p.x, p.y)) {
                continue;
            }
            cells += 1;
            let ray = raycast_shaded(p, &d, &buildings);
            if ray == mask.bits[c] {
                continue;
            }
            differ += 1;
            let e = BOUNDARY_PROBE_M;
            let probes = [(e, 0.0), (-e, 0.0), (0.0, e), (0.0, -e)];
            let on_boundary = probes
                .iter()
                .map(|&(dx, dy)| raycast_shaded(Point3::new(p.x + dx, p.y + dy, p.z), &d, &buildings))
                .any(|s| s != ray);
            off_boundary += usize::from(!on_boundary);
        }
    }
    let frac = differ as f64 / cells as f64;
    outcome(
        frac <= RASTER_MAX_MISMATCH && off_boundary == 0,
        format!(
            "{RASTER_SCENES} scenes, {differ}/{cells} cells differ ({:.4}%), {off_boundary} away from a boundary",
            100.0 * frac
        ),
    )
}

// 3. Translation and scaling.

/// A multiple of 1/4 in `[lo, hi]`; such values keep sums and power-of-two
/// products exact.
fn quarter(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo..=hi) * 4.0).round() / 4.0
}

fn oracle_interval(latitude: f64, b: &Building, p: Point3) -> ShadingInterval {
    let path = SunPath::regulated(latitude, Period::default(), 1.0).unwrap();
    shading_records(b, &[p], &path)[0].interval
}

fn within_one_step(a: &ShadingInterval, b: &ShadingInterval) -> bool {
    let tol = ONE_STEP_H + STEP_SLACK_H;
    (a.total_h - b.total_h).abs() <= tol && (a.is_empty() && b.is_empty() || (a.start_h - b.start_h).abs() <= tol)
}

fn invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut oracle_bad, mut feature_bad, mut in_domain) = (0, 0, 0);
    for case in 0..INVARIANCE_CASES {
        let latitude = rng.random_range(18.0..50.0);
        let dims = (quarter(&mut rng, 10.0, 60.0), quarter(&mut rng, 8.0, 25.0), quarter(&mut rng, 12.0, 80.0));
        let center = (quarter(&mut rng, -50.0, 50.0), quarter(&mut rng, -50.0, 50.0));
        let orientation = 5.0 * rng.random_range(-9..=9) as f64;
        let b = Building::new(format!("c{case}"), center, dims, orientation).unwrap();
        let p = Point3::new(
            center.0 + quarter(&mut rng, -120.0, 120.0),
            center.1 + quarter(&mut rng, -20.0, 180.0),
            quarter(&mut rng, 0.0, 3.0),
        );
        let t = (
            rng.random_range(-1000..=1000) as f64,
            rng.random_range(-1000..=1000) as f64,
            rng.random_range(-50..=50) as f64,
        );
        let moved = Building::new(b.id.clone(), (center.0 + t.0, center.1 + t.1), dims, orientation)
            .unwrap()
            .with_base(t.2);
        let moved_p = Point3::new(p.x + t.0, p.y + t.1, p.z + t.2);
        let k = [0.25, 0.5, 2.0, 4.0][rng.random_range(0..4)];
        let scaled = b.scaled(k);
        let scaled_p = Point3::new(p.x * k, p.y * k, p.z * k);

        let base = oracle_interval(latitude, &b, p);
        for (bb, pp) in [(&moved, moved_p), (&scaled, scaled_p)] {
            if !within_one_step(&base, &oracle_interval(latitude, bb, pp)) {
                oracle_bad += 1;
            }
        }
        let q = query(latitude, &b, p);
        in_domain += usize::from(matches!(q, Query::InDomain(_)));
        feature_bad += usize::from(query(latitude, &moved, moved_p) != q);
        feature_bad += usize::from(query(latitude, &scaled, scaled_p) != q);
    }
    outcome(
        oracle_bad == 0 && feature_bad == 0,
        format!(
            "{INVARIANCE_CASES} cases ({in_domain} in domain): {oracle_bad} oracle intervals off by more than one step, {feature_bad} feature vectors not identical"
        ),
    )
}

// 4. Back-propagation against central finite differences.

/// Hidden-unit activity of every sample, from an independent forward pass.
fn relu_pattern(m: &SurrogateModel, batch: &[Sample]) -> Vec<bool> {
    let mut bits = Vec::new();
    for s in batch {
        let mut a: Vec<f64> = m.input_norm.apply(&s.features.to_array()).to_vec();
        for (k, l) in m.layers.iter().enumerate() {
            let z: Vec<f64> = (0..l.out_dim)
                .map(|o| l.biases[o] + (0..l.in_dim).map(|i| l.weights[o * l.in_dim + i] * a[i]).sum::<f64>())
                .collect();
            if k + 1 < m.layers.len() {
                bits.extend(z.iter().map(|&v| v > 0.0));
                a = z.into_iter().map(|v| v.max(0.0)).collect();
            } else {
                a = z;
            }
        }
    }
    bits
}

fn random_sample(rng: &mut ChaCha8Rng) -> Sample {
    let (l, w, h) = (rng.random_range(10.0..60.0), rng.random_range(8.0..25.0), rng.random_range(12.0..80.0));
    let total = l + w + h;
    let label = if rng.random_bool(0.3) {
        ShadingInterval::empty(8.0)
    } else {
        let start = rng.random_range(0.0..7.0);
        ShadingInterval { start_h: start, total_h: rng.random_range(0.01..8.0 - start) }
    };
    Sample {
        features: FeatureVector {
            latitude_deg: rng.random_range(18.0..50.0),
            r_l: l / total,
            r_w: w / total,
            r_h: h / total,
            orientation_deg: rng.random_range(0.0..180.0),
            theta_deg: rng.random_range(30.0..150.0),
            r: rng.random_range(0.2..3.2),
        },
        label,
    }
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst, mut checked, mut skipped) = (0.0f64, 0usize, 0usize);
    for pair in 0..GRADIENT_PAIRS {
        let mut model = SurrogateModel::init(1000 + pair as u64);
        // Spread the parameters beyond the initial scale so outputs vary.
        for p in model.params_mut() {
            *p += rng.random_range(-0.2..0.2);
        }
        let batch: Vec<Sample> = (0..8).map(|_| random_sample(&mut rng)).collect();
        let (_, grads) = model.backward(&batch);
        let analytic: Vec<f64> = grads.values().copied().collect();
        let pattern = relu_pattern(&model, &batch);
        for (k, a) in analytic.iter().enumerate() {
            let mut plus = model.clone();
            let mut minus = model.clone();
            *plus.params_mut().nth(k).unwrap() += GRADIENT_FD_H;
            *minus.params_mut().nth(k).unwrap() -= GRADIENT_FD_H;
            // A perturbation that crosses a ReLU kink has no derivative to compare.
            if relu_pattern(&plus, &batch) != pattern || relu_pattern(&minus, &batch) != pattern {
                skipped += 1;
                continue;
            }
            let numeric = (plus.batch_loss(&batch) - minus.batch_loss(&batch)) / (2.0 * GRADIENT_FD_H);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRADIENT_DENOM_FLOOR);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    outcome(
        worst < GRADIENT_MAX_REL,
        format!("{GRADIENT_PAIRS} model/batch pairs, {checked} partials checked ({skipped} at ReLU kinks skipped), max relative error {worst:.2e}"),
    )
}

// 5 and 6. Single-run and coverage checks.

fn multi_run_incidence() -> Outcome {
    match proof_c1(PROOF_SCENARIOS, 5, 1.0) {
        Ok(r) => outcome(
            r.incidence < C1_MAX_INCIDENCE,
            format!(
                "{} scenarios, {}/{} points shaded in several runs ({:.5}%)",
                r.n_scenarios,
                r.n_multi,
                r.n_points,
                100.0 * r.incidence
            ),
        ),
        Err(e) => outcome(false, format!("error: {e}")),
    }
}

fn coverage() -> Outcome {
    match proof_c3(PROOF_SCENARIOS, 6, 1.0) {
        Ok(r) => outcome(
            r.fraction >= C3_MIN_FRACTION,
            format!(
                "{} scenarios, {}/{} shaded points inside the valid area ({:.2}%)",
                r.n_scenarios,
                r.n_inside,
                r.n_shaded,
                100.0 * r.fraction
            ),
        ),
        Err(e) => outcome(false, format!("error: {e}")),
    }
}

// 7. Held-out single-building accuracy.

fn single_building(model: &Result<(String, SurrogateModel), String>) -> Outcome {
    let (_, model) = match model {
        Ok(m) => m,
        Err(e) => return outcome(false, e.clone()),
    };
    let cfg = SingleBuildingConfig {
        n_scenarios: HELD_OUT_SCENARIOS,
        spacing: 0.02,
        seed: HELD_OUT_SEED,
        delta_t_min: 1.0,
    };
    let r = match experiment_single_building(model, &cfg) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("error: {e}")),
    };
    let meta = &model.metadata;
    let st = r.mae_st_min.unwrap_or(f64::INFINITY);
    let trained = meta.training_rounds >= MIN_TRAINING_ROUNDS && meta.training_seconds <= MAX_TRAINING_S;
    outcome(
        trained && r.mae_tt_min <= MAX_TT_MAE_MIN && st <= MAX_ST_MAE_MIN,
        format!(
            "{} rounds in {:.0} s; {} points over {HELD_OUT_SCENARIOS} scenarios: TT MAE {:.2} min, ST MAE {:.2} min",
            meta.training_rounds, meta.training_seconds, r.n_points, r.mae_tt_min, st
        ),
    )
}

// 8 and 9. Multi-building accuracy and speed.

fn multi_building(model: &Result<(String, SurrogateModel), String>) -> Outcome {
    let (json, _) = match model {
        Ok(m) => m,
        Err(e) => return outcome(false, e.clone()),
    };
    let (scene, grid) = multi_building_site();
    match experiment_multi_building(json, &scene, &grid, 1.0) {
        Ok((r, _, _)) => outcome(
            r.accuracy_pct >= MIN_SITE_ACCURACY_PCT,
            format!("{} cells: MAE {:.2} min, accuracy {:.2}%", r.n_points, r.mae_tt_min, r.accuracy_pct),
        ),
        Err(e) => outcome(false, format!("error: {e}")),
    }
}

fn median_seconds(mut f: impl FnMut()) -> f64 {
    let mut times: Vec<f64> = (0..TIMING_REPEATS)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64()
        })
        .collect();
    times.sort_by(f64::total_cmp);
    times[TIMING_REPEATS / 2]
}

fn speed(model: &Result<(String, SurrogateModel), String>) -> Outcome {
    let (json, _) = match model {
        Ok(m) => m,
        Err(e) => return outcome(false, e.clone()),
    };
    let (scene, grid) = multi_building_site();
    let t = Instant::now();
    let model = model_from_json(json).unwrap();
    let load = t.elapsed().as_secs_f64();
    // Warm both paths once before timing.
    sunlight_hours_sc(&scene, &grid, 1.0).unwrap();
    predict_site(&model, &scene, &grid).unwrap();
    let oracle = median_seconds(|| {
        sunlight_hours_sc(&scene, &grid, 1.0).unwrap();
    });
    let surrogate = median_seconds(|| {
        predict_site(&model, &scene, &grid).unwrap();
    });
    let speedup = oracle / surrogate;
    outcome(
        speedup >= MIN_SPEEDUP,
        format!(
            "{} cells, {} mode: oracle {:.1} ms, surrogate {:.1} ms (model load {:.2} ms), speedup {speedup:.1}x",
            grid.len(),
            if sunhours::par::is_parallel() { "parallel" } else { "sequential" },
            1e3 * oracle,
            1e3 * surrogate,
            1e3 * load
        ),
    )
}

// 10. Oracle intervals through the union path.

fn union_fidelity() -> Outcome {
    let sites = [("multi", multi_building_site()), ("canyon", canyon_site()), ("optimization", {
        let o = optimization_site();
        (o.scene, o.grid)
    })];
    let (mut n, mut ok) = (0usize, 0usize);
    let mut parts = Vec::new();
    for (name, (scene, grid)) in sites {
        let reference = sunlight_hours_sc(&scene, &grid, 1.0).unwrap();
        let union = predict_site(&OraclePredictor { delta_t_min: 1.0 }, &scene, &grid).unwrap();
        let good = reference
            .values
            .iter()
            .zip(&union.values)
            .filter(|(a, b)| (*a - *b).abs() <= ONE_STEP_H + STEP_SLACK_H)
            .count();
        parts.push(format!("{name} {good}/{}", grid.len()));
        n += grid.len();
        ok += good;
    }
    let frac = ok as f64 / n as f64;
    outcome(
        frac > MIN_UNION_AGREEMENT,
        format!("{} within one step ({:.3}%)", parts.join(", "), 100.0 * frac),
    )
}

// 11. Layout search.

fn optimization(model: &Result<(String, SurrogateModel), String>) -> Outcome {
    let site = optimization_site();
    // Small enough to enumerate.
    let reduced = Lattice {
        x_m: vec![0.0, 5.0],
        y_m: vec![40.0, 60.0, 80.0],
        length_m: vec![30.0],
        width_m: vec![18.0, 24.0],
        height_m: vec![30.0, 45.0, 60.0],
        orientation_deg: vec![0.0, 15.0],
    };
    let problem = LayoutProblem {
        scene: site.scene.clone(),
        grid: site.grid,
        northern: site.northern.clone(),
        evaluator: Evaluator::Oracle { delta_t_min: 1.0 },
    };
    let fitness = |d: &_| problem.objective(d).map(|o| o.objective);
    let small_ga = GaConfig { generations: 40, population: 16, seed: 11, ..Default::default() };
    let (exhaustive, ga) = match (exhaustive_optimum(&reduced, fitness), ga_optimize(&reduced, &small_ga, fitness)) {
        (Ok(e), Ok(g)) => (e, g),
        (Err(e), _) | (_, Err(e)) => return outcome(false, format!("error: {e}")),
    };
    let reduced_ok = ga.best_score == exhaustive.1;

    let (_, model) = match model {
        Ok(m) => m,
        Err(e) => return outcome(false, e.clone()),
    };
    let r = match experiment_optimization(model, &site, &Lattice::default(), &GaConfig { seed: 7, ..Default::default() }, 1.0) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("error: {e}")),
    };
    let both_pass = r.surrogate_solution.oracle_compliance.pass && r.oracle_solution.oracle_compliance.pass;
    outcome(
        reduced_ok && both_pass && r.score_gap <= MAX_SCORE_GAP,
        format!(
            "reduced lattice: GA {:.4} vs exhaustive {:.4}; full lattice: oracle scores {:.4} (surrogate pick) vs {:.4} (oracle pick), gap {:.2}%, compliance {}/{}",
            ga.best_score,
            exhaustive.1,
            r.surrogate_solution.oracle.objective,
            r.oracle_solution.oracle.objective,
            100.0 * r.score_gap,
            r.surrogate_solution.oracle_compliance.pass,
            r.oracle_solution.oracle_compliance.pass
        ),
    )
}

// 12. File formats.

fn formats() -> Outcome {
    let mut problems = Vec::new();
    for site in ["multi", "slope", "optimization", "canyon"] {
        let path = repo(&format!("scenes/{site}.json"));
        let text = std::fs::read_to_string(&path).unwrap_or_default();
        match SceneDocument::parse(&text, Strictness::Strict) {
            Ok(doc) => {
                let again = SceneDocument::parse(&doc.to_json(), Strictness::Strict);
                if again.as_ref().ok() != Some(&doc) {
                    problems.push(format!("scene {site} changed on round trip"));
                }
            }
            Err(e) => problems.push(format!("scene {site}: {e}")),
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut model = SurrogateModel::init(12);
    for p in model.params_mut() {
        *p *= rng.random_range(0.1..10.0);
    }
    if model_from_json(&model_to_json(&model)).ok() != Some(model) {
        problems.push("model changed on round trip".into());
    }

    let (scene, grid) = canyon_site();
    let heatmap = sunlight_hours_sc(&scene, &grid, 1.0).unwrap();
    let csv = export_heatmap(&heatmap, HeatmapFormat::Csv).unwrap();
    let back = import_heatmap_csv(csv.as_slice(), grid.plane_offset_m).unwrap();
    if export_heatmap(&back, HeatmapFormat::Csv).unwrap() != csv {
        problems.push("heatmap CSV not byte-identical after re-export".into());
    }
    let json = export_heatmap(&heatmap, HeatmapFormat::Json).unwrap();
    if import_heatmap_json(json.as_slice()).ok() != Some(heatmap) {
        problems.push("heatmap JSON changed on round trip".into());
    }
    outcome(
        problems.is_empty(),
        if problems.is_empty() {
            "4 scenes, 1 model, CSV and JSON heatmaps round-trip".into()
        } else {
            problems.join("; ")
        },
    )
}

fn main() -> ExitCode {
    // Respect a libtest-style name filter so `cargo test <filter>` for other
    // targets does not trigger the whole suite.
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if args.iter().any(|a| !"acceptance".contains(a.as_str())) {
        return ExitCode::SUCCESS;
    }
    let model = shipped_model();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("interval union matches minute mask", Box::new(union_against_mask)),
        ("scan-line matches ray casting", Box::new(scanline_against_raycast)),
        ("translation and scaling invariance", Box::new(invariance)),
        ("gradients match finite differences", Box::new(gradient_check)),
        ("multi-run incidence", Box::new(multi_run_incidence)),
        ("shade inside valid area", Box::new(coverage)),
        ("single-building held-out accuracy", Box::new(|| single_building(&model))),
        ("multi-building accuracy", Box::new(|| multi_building(&model))),
        ("surrogate speedup", Box::new(|| speed(&model))),
        ("oracle intervals through the union", Box::new(union_fidelity)),
        ("layout search", Box::new(|| optimization(&model))),
        ("format round trips", Box::new(formats)),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = run();
        failed += usize::from(!o.pass);
        println!(
            "criterion {:>2} {} {name}: {} [{:.1} s]",
            k + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
