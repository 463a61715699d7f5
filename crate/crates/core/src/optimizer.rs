//! Genetic search over a lattice of single-building placements.

use std::collections::HashMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::SurrogateModel;
use crate::oracle::sunlight_at_points;
use crate::par;
use crate::scene::{Building, Point3, SamplingGrid, Scene};
use crate::site::{check_points_for, predict_points};
use crate::solar::SunPath;

pub const N_GENES: usize = 6;

/// Lattice indices, one per decision component.
pub type Genome = [usize; N_GENES];

/// A placement: `x_m`/`y_m` are the westernmost/southernmost extent of the
/// rotated footprint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionVector {
    pub x_m: f64,
    pub y_m: f64,
    pub length_m: f64,
    pub width_m: f64,
    pub height_m: f64,
    pub orientation_deg: f64,
}

impl DecisionVector {
    /// The building this decision places. Orientation may be negative here;
    /// it is normalised inside the building.
    pub fn building(&self, id: &str) -> Result<Building> {
        let phi = self.orientation_deg.to_radians();
        let (c, s) = (phi.cos().abs(), phi.sin().abs());
        let half_x = 0.5 * (self.length_m * c + self.width_m * s);
        let half_y = 0.5 * (self.length_m * s + self.width_m * c);
        Building::new(
            id,
            (self.x_m + half_x, self.y_m + half_y),
            (self.length_m, self.width_m, self.height_m),
            self.orientation_deg,
        )
    }
}

/// Candidate values per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub x_m: Vec<f64>,
    pub y_m: Vec<f64>,
    pub length_m: Vec<f64>,
    pub width_m: Vec<f64>,
    pub height_m: Vec<f64>,
    pub orientation_deg: Vec<f64>,
}

fn steps(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| lo + k as f64 * step).collect()
}

impl Default for Lattice {
    /// The full placement lattice of the optimisation site.
    fn default() -> Self {
        Self {
            x_m: steps(0.0, 7.5, 0.5),
            y_m: steps(30.0, 80.0, 0.5),
            length_m: steps(21.0, 42.0, 3.0),
            width_m: steps(18.0, 30.0, 3.0),
            height_m: steps(30.0, 60.0, 3.0),
            orientation_deg: steps(-30.0, 30.0, 5.0),
        }
    }
}

impl Lattice {
    fn axes(&self) -> [&[f64]; N_GENES] {
        [
            &self.x_m,
            &self.y_m,
            &self.length_m,
            &self.width_m,
            &self.height_m,
            &self.orientation_deg,
        ]
    }

    pub fn sizes(&self) -> [usize; N_GENES] {
        self.axes().map(<[f64]>::len)
    }

    /// Number of distinct decisions, saturating.
    pub fn count(&self) -> usize {
        self.sizes().iter().fold(1usize, |a, &n| a.saturating_mul(n))
    }

    pub fn validate(&self) -> Result<()> {
        let names = ["x_m", "y_m", "length_m", "width_m", "height_m", "orientation_deg"];
        for (name, axis) in names.iter().zip(self.axes()) {
            if axis.is_empty() {
                return Err(Error::field(format!("lattice.{name}"), "must not be empty"));
            }
            if axis.iter().any(|v| !v.is_finite()) {
                return Err(Error::field(format!("lattice.{name}"), "must be finite"));
            }
        }
        Ok(())
    }

    pub fn decode(&self, g: &Genome) -> DecisionVector {
        let a = self.axes();
        DecisionVector {
            x_m: a[0][g[0]],
            y_m: a[1][g[1]],
            length_m: a[2][g[2]],
            width_m: a[3][g[3]],
            height_m: a[4][g[4]],
            orientation_deg: a[5][g[5]],
        }
    }

    /// The genome of a decision whose components all lie on the lattice.
    pub fn encode(&self, d: &DecisionVector) -> Option<Genome> {
        let vals = [d.x_m, d.y_m, d.length_m, d.width_m, d.height_m, d.orientation_deg];
        let mut g = [0; N_GENES];
        for (k, axis) in self.axes().iter().enumerate() {
            g[k] = axis.iter().position(|v| (v - vals[k]).abs() < 1e-9)?;
        }
        Some(g)
    }

    fn random<R: Rng>(&self, rng: &mut R) -> Genome {
        self.sizes().map(|n| rng.random_range(0..n))
    }

    /// Every genome in lexicographic order.
    pub fn enumerate(&self) -> Vec<Genome> {
        let sizes = self.sizes();
        let mut out = Vec::with_capacity(self.count());
        let mut g = [0; N_GENES];
        loop {
            out.push(g);
            let mut k = N_GENES;
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                g[k] += 1;
                if g[k] < sizes[k] {
                    break;
                }
                g[k] = 0;
            }
        }
    }
}

/// Floor-area normaliser: the largest building on the full lattice.
pub const MAX_VOLUME_M3: f64 = 42.0 * 30.0 * 60.0;
/// A check point below this many hours zeroes its sunlight score.
pub const SCORE_FLOOR_H: f64 = 1.75;
pub const SCORE_CAP: f64 = 2.0;

/// Sunlight score of one building's check points: 0 when any point is below
/// the floor or there are none, else the mean of `(h - 2) / 0.25`, never
/// negative.
pub fn sunlight_score(hours: &[f64]) -> f64 {
    if hours.is_empty() || hours.iter().any(|&h| h < SCORE_FLOOR_H) {
        return 0.0;
    }
    let mean = hours.iter().map(|h| (h - 2.0) / 0.25).sum::<f64>() / hours.len() as f64;
    mean.max(0.0)
}

/// How candidate sunlight is computed.
#[derive(Debug, Clone, Copy)]
pub enum Evaluator<'a> {
    Oracle { delta_t_min: f64 },
    Surrogate(&'a SurrogateModel),
}

impl Evaluator<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Evaluator::Oracle { .. } => "oracle",
            Evaluator::Surrogate(_) => "surrogate",
        }
    }

    pub fn sunlight(&self, scene: &Scene, points: &[Point3]) -> Result<Vec<f64>> {
        match self {
            Evaluator::Oracle { delta_t_min } => {
                let path = SunPath::regulated(scene.latitude_deg, scene.period, *delta_t_min)?;
                Ok(sunlight_at_points(scene, points, &path))
            }
            Evaluator::Surrogate(m) => predict_points(*m, scene, points),
        }
    }
}

/// The objective and its parts for one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub floor_area_score: f64,
    pub own_score: f64,
    pub northern_score: f64,
    pub objective: f64,
    pub own_hours: Vec<f64>,
    pub northern_hours: Vec<f64>,
}

pub const CANDIDATE_ID: &str = "candidate";

/// A base scene, its grid, and the context buildings whose check points
/// form the second sunlight score.
#[derive(Debug, Clone)]
pub struct LayoutProblem<'a> {
    pub scene: Scene,
    pub grid: SamplingGrid,
    pub northern: Vec<usize>,
    pub evaluator: Evaluator<'a>,
}

impl LayoutProblem<'_> {
    /// The base scene with the candidate appended last.
    pub fn scene_with(&self, d: &DecisionVector) -> Result<Scene> {
        let mut scene = self.scene.clone();
        scene.buildings.push(d.building(CANDIDATE_ID)?);
        Ok(scene)
    }

    pub fn objective(&self, d: &DecisionVector) -> Result<ObjectiveBreakdown> {
        let scene = self.scene_with(d)?;
        let candidate = scene.buildings.last().expect("candidate present");
        let z = |x: f64, y: f64| {
            let ground = scene.terrain.as_ref().and_then(|t| t.elevation_at(x, y)).unwrap_or(0.0);
            Point3::new(x, y, ground + self.grid.plane_offset_m)
        };
        let own: Vec<Point3> = check_points_for(candidate, &scene.buildings, &self.grid)
            .iter()
            .map(|c| z(c.x_m, c.y_m))
            .collect();
        let mut northern = Vec::new();
        for &k in &self.northern {
            let b = self
                .scene
                .buildings
                .get(k)
                .ok_or_else(|| Error::field("northern", format!("no building at index {k}")))?;
            northern.extend(check_points_for(b, &scene.buildings, &self.grid).iter().map(|c| z(c.x_m, c.y_m)));
        }
        let mut points = own.clone();
        points.extend_from_slice(&northern);
        let hours = self.evaluator.sunlight(&scene, &points)?;
        let (own_hours, northern_hours) = hours.split_at(own.len());
        let floor_area_score = d.length_m * d.width_m * d.height_m / MAX_VOLUME_M3;
        let own_score = sunlight_score(own_hours);
        let northern_score = if self.northern.is_empty() {
            SCORE_CAP
        } else {
            sunlight_score(northern_hours)
        };
        Ok(ObjectiveBreakdown {
            floor_area_score,
            own_score,
            northern_score,
            objective: floor_area_score * own_score.min(SCORE_CAP) * northern_score.min(SCORE_CAP),
            own_hours: own_hours.to_vec(),
            northern_hours: northern_hours.to_vec(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub generations: usize,
    pub population: usize,
    pub tournament_size: usize,
    pub crossover_rate: f64,
    /// Per-gene probability of resampling; `None` means one over the gene count.
    pub mutation_rate: Option<f64>,
    pub elites: usize,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            generations: 512,
            population: 64,
            tournament_size: 3,
            crossover_rate: 0.9,
            mutation_rate: None,
            elites: 1,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.generations == 0 {
            return Err(Error::field("generations", "must be at least 1"));
        }
        if self.population == 0 || self.population % 2 != 0 {
            return Err(Error::field("population", "must be positive and even"));
        }
        if self.tournament_size == 0 {
            return Err(Error::field("tournament_size", "must be at least 1"));
        }
        if self.elites >= self.population {
            return Err(Error::field("elites", "must be smaller than the population"));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return Err(Error::field("crossover_rate", "must be within [0, 1]"));
        }
        if self.mutation_rate.is_some_and(|p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::field("mutation_rate", "must be within [0, 1]"));
        }
        Ok(())
    }
}

/// One line of the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    /// Best score seen so far.
    pub best_score: f64,
    pub mean_score: f64,
    pub best_genome: DecisionVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaOutcome {
    pub best: DecisionVector,
    pub best_score: f64,
    pub history: Vec<GenerationRecord>,
    /// Distinct decisions evaluated.
    pub evaluations: usize,
}

/// Genetic search maximising `fitness` over the lattice. Deterministic for a
/// given seed; fitness values are cached per genome.
pub fn ga_optimize<F>(lattice: &Lattice, config: &GaConfig, fitness: F) -> Result<GaOutcome>
where
    F: Fn(&DecisionVector) -> Result<f64> + Sync + Send,
{
    ga_optimize_with(lattice, config, fitness, |_| {})
}

/// [`ga_optimize`] reporting each generation as it completes.
pub fn ga_optimize_with<F>(
    lattice: &Lattice,
    config: &GaConfig,
    fitness: F,
    mut on_generation: impl FnMut(&GenerationRecord),
) -> Result<GaOutcome>
where
    F: Fn(&DecisionVector) -> Result<f64> + Sync + Send,
{
    lattice.validate()?;
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mutation = config.mutation_rate.unwrap_or(1.0 / N_GENES as f64);
    let sizes = lattice.sizes();
    let mut cache: HashMap<Genome, f64> = HashMap::new();

    let evaluate = |pop: &[Genome], cache: &mut HashMap<Genome, f64>| -> Result<Vec<f64>> {
        let mut fresh: Vec<Genome> = Vec::new();
        for g in pop {
            if !cache.contains_key(g) && !fresh.contains(g) {
                fresh.push(*g);
            }
        }
        let scores = par::map_slice(&fresh, |g| fitness(&lattice.decode(g)));
        for (g, s) in fresh.into_iter().zip(scores) {
            cache.insert(g, s?);
        }
        Ok(pop.iter().map(|g| cache[g]).collect())
    };

    let mut pop: Vec<Genome> = (0..config.population).map(|_| lattice.random(&mut rng)).collect();
    let mut scores = evaluate(&pop, &mut cache)?;
    let mut best = (pop[0], scores[0]);
    let mut history = Vec::with_capacity(config.generations);
    for generation in 0..config.generations {
        if generation > 0 {
            let mut order: Vec<usize> = (0..pop.len()).collect();
            order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(pop[a].cmp(&pop[b])));
            let mut next: Vec<Genome> = order[..config.elites].iter().map(|&k| pop[k]).collect();
            let tournament = |rng: &mut ChaCha8Rng| {
                (0..config.tournament_size)
                    .map(|_| rng.random_range(0..pop.len()))
                    .max_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(b.cmp(&a)))
                    .expect("tournament size is positive")
            };
            while next.len() < config.population {
                let (mut a, mut b) = (pop[tournament(&mut rng)], pop[tournament(&mut rng)]);
                if rng.random_bool(config.crossover_rate) {
                    for k in 0..N_GENES {
                        if rng.random_bool(0.5) {
                            std::mem::swap(&mut a[k], &mut b[k]);
                        }
                    }
                }
                for child in [&mut a, &mut b] {
                    for k in 0..N_GENES {
                        if rng.random_bool(mutation) {
                            child[k] = rng.random_range(0..sizes[k]);
                        }
                    }
                }
                next.push(a);
                if next.len() < config.population {
                    next.push(b);
                }
            }
            pop = next;
            scores = evaluate(&pop, &mut cache)?;
        }
        for (g, &s) in pop.iter().zip(&scores) {
            if s > best.1 || (s == best.1 && *g < best.0) {
                best = (*g, s);
            }
        }
        let record = GenerationRecord {
            generation,
            best_score: best.1,
            mean_score: scores.iter().sum::<f64>() / scores.len() as f64,
            best_genome: lattice.decode(&best.0),
        };
        on_generation(&record);
        history.push(record);
    }
    Ok(GaOutcome {
        best: lattice.decode(&best.0),
        best_score: best.1,
        history,
        evaluations: cache.len(),
    })
}

/// Best decision by brute force. Ties go to the lexicographically first genome.
pub fn exhaustive_optimum<F>(lattice: &Lattice, fitness: F) -> Result<(DecisionVector, f64)>
where
    F: Fn(&DecisionVector) -> Result<f64> + Sync + Send,
{
    lattice.validate()?;
    let all = lattice.enumerate();
    let scores = par::map_slice(&all, |g| fitness(&lattice.decode(g)));
    let mut best: Option<(Genome, f64)> = None;
    for (g, s) in all.into_iter().zip(scores) {
        let s = s?;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((g, s));
        }
    }
    let (g, s) = best.expect("lattice is non-empty");
    Ok((lattice.decode(&g), s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatabilityReport {
    pub seeds: Vec<u64>,
    pub solutions: Vec<DecisionVector>,
    pub scores: Vec<f64>,
    /// Runs that found the most common solution.
    pub agreement: usize,
    pub all_agree: bool,
}

/// Runs the search once per seed.
pub fn repeatability_study<F>(lattice: &Lattice, config: &GaConfig, seeds: &[u64], fitness: F) -> Result<RepeatabilityReport>
where
    F: Fn(&DecisionVector) -> Result<f64> + Sync + Send,
{
    if seeds.len() < 2 {
        return Err(Error::field("seeds", "need at least two runs"));
    }
    let mut solutions = Vec::new();
    let mut scores = Vec::new();
    for &seed in seeds {
        let out = ga_optimize(lattice, &GaConfig { seed, ..*config }, &fitness)?;
        solutions.push(out.best);
        scores.push(out.best_score);
    }
    let agreement = solutions
        .iter()
        .map(|a| solutions.iter().filter(|b| *b == a).count())
        .max()
        .unwrap_or(0);
    Ok(RepeatabilityReport {
        seeds: seeds.to_vec(),
        all_agree: agreement == solutions.len(),
        solutions,
        scores,
        agreement,
    })
}

/// Writes the history as JSON lines.
pub fn write_run_log<W: Write>(mut w: W, history: &[GenerationRecord]) -> Result<()> {
    for r in history {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
