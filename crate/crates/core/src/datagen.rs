//! Random single-building scenarios, jittered sampling lattices, and the
//! train-while-generate loop.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::mlp::{Adam, AdamConfig, FeatureVector, Sample, SurrogateModel};
use crate::oracle::{grid_shading_records, ShadingRecord};
use crate::par;
use crate::scene::{
    in_valid_sampling_area, point_under_building, relative_size, Building, LocalPolarPoint, SamplingGrid,
    LOCAL_CENTER_OFFSET,
};
use crate::solar::{Period, SunPath};

/// Bounds on the randomised building proportions.
pub const MIN_SIDE_TO_HEIGHT: f64 = 1.0 / 4.33;
pub const MAX_LENGTH_TO_WIDTH: f64 = 3.33;

/// One random single-building scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub latitude_deg: f64,
    pub length_m: f64,
    pub width_m: f64,
    pub height_m: f64,
    pub orientation_deg: f64,
    /// Seeds the scenario's lattice offsets.
    pub rng_seed: u64,
}

impl ScenarioSpec {
    /// The scenario's building, centred on the origin at ground level.
    pub fn building(&self) -> Building {
        Building {
            id: "scenario".into(),
            center_x_m: 0.0,
            center_y_m: 0.0,
            base_z_m: 0.0,
            length_m: self.length_m,
            width_m: self.width_m,
            height_m: self.height_m,
            orientation_deg: self.orientation_deg,
        }
    }

    /// True when every proportion bound holds.
    pub fn within_bounds(&self) -> bool {
        let (l, w, h) = (self.length_m, self.width_m, self.height_m);
        let in_range = |v: f64, lo: f64, hi: f64| v >= lo - 1e-12 && v <= hi + 1e-12;
        (25.0..=35.0).contains(&self.latitude_deg)
            && (0.0..=180.0).contains(&self.orientation_deg)
            && in_range(l / h, MIN_SIDE_TO_HEIGHT, 1.0)
            && in_range(w / h, MIN_SIDE_TO_HEIGHT, 1.0)
            && in_range(l / w, 1.0 / MAX_LENGTH_TO_WIDTH, MAX_LENGTH_TO_WIDTH)
    }
}

/// Draws a scenario. Height is uniform on [20, 100] m; length and width are
/// uniform fractions of it, redrawn until their ratio is in bounds.
pub fn sample_scenario<R: Rng>(rng: &mut R) -> ScenarioSpec {
    let latitude_deg = rng.random_range(25.0..=35.0);
    let orientation_deg = rng.random_range(0.0..180.0);
    let height_m = rng.random_range(20.0..=100.0);
    let (length_m, width_m) = loop {
        let u = rng.random_range(MIN_SIDE_TO_HEIGHT..=1.0);
        let v = rng.random_range(MIN_SIDE_TO_HEIGHT..=1.0);
        let ratio = u / v;
        if (1.0 / MAX_LENGTH_TO_WIDTH..=MAX_LENGTH_TO_WIDTH).contains(&ratio) {
            break (height_m * u, height_m * v);
        }
    };
    ScenarioSpec {
        latitude_deg,
        length_m,
        width_m,
        height_m,
        orientation_deg,
        rng_seed: rng.random(),
    }
}

/// A jittered square lattice in the local frame (unit = total size).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub spacing: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    /// Each axis origin is shifted by a uniform draw from `[-max_offset, max_offset]`.
    pub max_offset: f64,
}

impl LatticeSpec {
    pub fn counts(&self) -> (usize, usize) {
        let n = |lo: f64, hi: f64| ((hi - lo) / self.spacing + 1e-9).floor() as usize + 1;
        (n(self.x_min, self.x_max), n(self.y_min, self.y_max))
    }
}

/// Coarse and fine training lattices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub coarse: LatticeSpec,
    pub fine: LatticeSpec,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            coarse: LatticeSpec {
                spacing: 0.1,
                x_min: -3.0,
                x_max: 3.0,
                y_min: 0.0,
                y_max: 3.2,
                max_offset: 0.05,
            },
            fine: LatticeSpec {
                spacing: 0.05,
                x_min: -1.0,
                x_max: 1.0,
                y_min: 0.2,
                y_max: 1.2,
                max_offset: 0.025,
            },
        }
    }
}

/// A lattice point retained for training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalSample {
    /// Local Cartesian coordinates, unit = total size.
    pub x: f64,
    pub y: f64,
    pub polar: LocalPolarPoint,
    /// Index into the lattice drawn by [`jittered_lattices`].
    pub lattice: usize,
    pub cell: usize,
}

/// The two lattices with their random offsets, as sampling grids in local
/// units.
pub fn jittered_lattices<R: Rng>(rng: &mut R, spec: &GridSpec) -> [SamplingGrid; 2] {
    let mut draw = |l: &LatticeSpec| {
        let (nx, ny) = l.counts();
        let (ox, oy) = if l.max_offset > 0.0 {
            (
                rng.random_range(-l.max_offset..=l.max_offset),
                rng.random_range(-l.max_offset..=l.max_offset),
            )
        } else {
            (0.0, 0.0)
        };
        SamplingGrid {
            origin_x_m: l.x_min + ox,
            origin_y_m: l.y_min + oy,
            spacing_m: l.spacing,
            nx,
            ny,
            plane_offset_m: 0.0,
        }
    };
    let coarse = draw(&spec.coarse);
    let fine = draw(&spec.fine);
    [coarse, fine]
}

/// Lattice points inside the valid sampling area.
pub fn build_sample_points<R: Rng>(rng: &mut R, spec: &GridSpec) -> Vec<LocalSample> {
    filter_valid(&jittered_lattices(rng, spec))
}

fn filter_valid(lattices: &[SamplingGrid; 2]) -> Vec<LocalSample> {
    let mut out = Vec::new();
    for (lattice, g) in lattices.iter().enumerate() {
        for j in 0..g.ny {
            for i in 0..g.nx {
                let (x, y) = (g.x(i), g.y(j));
                let polar = LocalPolarPoint::from_local_xy(x, y);
                if in_valid_sampling_area(polar) {
                    out.push(LocalSample {
                        x,
                        y,
                        polar,
                        lattice,
                        cell: g.index(i, j),
                    });
                }
            }
        }
    }
    out
}

/// Scales a local lattice into world metres for a building centred on the
/// origin with total size `total`.
pub fn world_grid(local: &SamplingGrid, total: f64) -> SamplingGrid {
    SamplingGrid {
        origin_x_m: local.origin_x_m * total,
        origin_y_m: (local.origin_y_m - LOCAL_CENTER_OFFSET) * total,
        spacing_m: local.spacing_m * total,
        nx: local.nx,
        ny: local.ny,
        plane_offset_m: 0.0,
    }
}

/// Training samples for one scenario: valid-area lattice points outside the
/// footprint, labelled by the oracle at `delta_t_min` steps.
pub fn scenario_samples(spec: &ScenarioSpec, grid: &GridSpec, delta_t_min: f64) -> Result<Vec<Sample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let lattices = jittered_lattices(&mut rng, grid);
    let b = spec.building();
    let (size, total) = relative_size(&b, None)?;
    let path = SunPath::uniform(spec.latitude_deg, Period::default(), delta_t_min)?;
    let records: Vec<Vec<ShadingRecord>> = lattices
        .iter()
        .map(|g| grid_shading_records(&b, &world_grid(g, total), &path))
        .collect();
    let mut out = Vec::new();
    for s in filter_valid(&lattices) {
        let (wx, wy) = (s.x * total, (s.y - LOCAL_CENTER_OFFSET) * total);
        let g = world_grid(&lattices[s.lattice], total);
        let (i, j) = (s.cell % g.nx, s.cell / g.nx);
        debug_assert!((g.x(i) - wx).abs() < 1e-6 && (g.y(j) - wy).abs() < 1e-6);
        if point_under_building(&b, g.x(i), g.y(j)) {
            continue;
        }
        out.push(Sample {
            features: FeatureVector {
                latitude_deg: spec.latitude_deg,
                r_l: size.r_l,
                r_w: size.r_w,
                r_h: size.r_h,
                orientation_deg: spec.orientation_deg,
                theta_deg: s.polar.theta_deg,
                r: s.polar.r,
            },
            label: records[s.lattice][s.cell].interval,
        });
    }
    Ok(out)
}

/// One round of generated data split into batches.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRound {
    pub scenarios: Vec<ScenarioSpec>,
    pub samples: Vec<Sample>,
    /// Half-open ranges into `samples`, which is already shuffled.
    pub batches: Vec<std::ops::Range<usize>>,
}

/// Draws `n_scenarios` scenarios, labels them (in parallel, merged in
/// scenario order), shuffles, and splits into `n_batches` near-equal batches.
pub fn generate_round<R: Rng>(
    rng: &mut R,
    n_scenarios: usize,
    n_batches: usize,
    grid: &GridSpec,
    delta_t_min: f64,
) -> Result<TrainingRound> {
    let scenarios: Vec<ScenarioSpec> = (0..n_scenarios).map(|_| sample_scenario(rng)).collect();
    let per = par::map_slice(&scenarios, |s| scenario_samples(s, grid, delta_t_min));
    let mut samples = Vec::new();
    for p in per {
        samples.extend(p?);
    }
    samples.shuffle(rng);
    let batches = partition(samples.len(), n_batches.max(1));
    Ok(TrainingRound {
        scenarios,
        samples,
        batches,
    })
}

/// Splits `0..n` into `k` contiguous ranges whose sizes differ by at most one.
pub fn partition(n: usize, k: usize) -> Vec<std::ops::Range<usize>> {
    let (base, extra) = (n / k, n % k);
    let mut start = 0;
    (0..k)
        .map(|b| {
            let len = base + usize::from(b < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// How the trailing loss window is averaged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Weighting {
    /// Exponential weights with the given half-life in updates; the newest
    /// update weighs most.
    Exponential { half_life: f64 },
    Mean,
}

/// When to stop training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopPolicy {
    pub weighting: Weighting,
    /// Updates in the trailing window.
    pub window: usize,
    /// Updates between evaluations of the trailing average.
    pub check_every: usize,
    pub max_updates: usize,
    /// Evaluations before this many updates never stop training.
    #[serde(default)]
    pub min_updates: usize,
    /// Consecutive increases of the trailing average needed to stop.
    #[serde(default = "one")]
    pub patience: usize,
}

fn one() -> usize {
    1
}

impl Default for StopPolicy {
    fn default() -> Self {
        Self {
            weighting: Weighting::Exponential { half_life: 20.0 },
            window: 40,
            check_every: 10,
            max_updates: 200_000,
            min_updates: 0,
            patience: 1,
        }
    }
}

/// Weighted average of the last `window` losses.
pub fn trailing_average(losses: &[f64], window: usize, weighting: Weighting) -> Option<f64> {
    if losses.len() < window || window == 0 {
        return None;
    }
    let tail = &losses[losses.len() - window..];
    match weighting {
        Weighting::Mean => Some(tail.iter().sum::<f64>() / window as f64),
        Weighting::Exponential { half_life } => {
            let decay = 0.5f64.powf(1.0 / half_life);
            let (mut num, mut den) = (0.0, 0.0);
            for (age, l) in tail.iter().rev().enumerate() {
                let w = decay.powi(age as i32);
                num += w * l;
                den += w;
            }
            Some(num / den)
        }
    }
}

/// What the monitor asks the training loop to do after an update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Continue,
    /// The trailing average improved; keep a snapshot of the parameters.
    Snapshot,
    Stop,
}

/// Applies a [`StopPolicy`] to a stream of update losses.
#[derive(Debug, Clone)]
pub struct StopMonitor {
    pub policy: StopPolicy,
    losses: Vec<f64>,
    last: Option<f64>,
    best: Option<f64>,
    increases: usize,
}

impl StopMonitor {
    pub fn new(policy: StopPolicy) -> Self {
        Self {
            policy,
            losses: Vec::new(),
            last: None,
            best: None,
            increases: 0,
        }
    }

    pub fn updates(&self) -> usize {
        self.losses.len()
    }

    /// Records one update's loss and returns the decision along with the
    /// trailing average when it was evaluated.
    pub fn record(&mut self, loss: f64) -> (Decision, Option<f64>) {
        self.losses.push(loss);
        let n = self.losses.len();
        if n >= self.policy.max_updates {
            return (Decision::Stop, None);
        }
        if self.policy.check_every == 0 || n % self.policy.check_every != 0 {
            return (Decision::Continue, None);
        }
        let Some(avg) = trailing_average(&self.losses, self.policy.window, self.policy.weighting) else {
            return (Decision::Continue, None);
        };
        let mut decision = Decision::Continue;
        if self.best.is_none_or(|b| avg < b) {
            self.best = Some(avg);
            decision = Decision::Snapshot;
        }
        if let Some(prev) = self.last {
            if avg > prev {
                self.increases += 1;
            } else {
                self.increases = 0;
            }
        }
        self.last = Some(avg);
        if n >= self.policy.min_updates && self.increases >= self.policy.patience.max(1) {
            decision = Decision::Stop;
        }
        (decision, Some(avg))
    }
}

/// Learning-rate schedule over updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Multiplies the base rate by `factor` every `every` updates, never
    /// going below `floor`.
    Step { every: usize, factor: f64, floor: f64 },
}

impl LrSchedule {
    pub fn rate(&self, base: f64, update: usize) -> f64 {
        match *self {
            LrSchedule::Constant => base,
            LrSchedule::Step { every, factor, floor } => {
                let k = if every == 0 { 0 } else { update / every };
                (base * factor.powi(k as i32)).max(floor)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub optimizer: AdamConfig,
    pub lr_schedule: LrSchedule,
    pub scenarios_per_round: usize,
    pub batches_per_round: usize,
    pub delta_t_min: f64,
    pub grid: GridSpec,
    pub stop: StopPolicy,
    /// Upper bound on rounds regardless of the stop policy.
    pub max_rounds: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            optimizer: AdamConfig::default(),
            lr_schedule: LrSchedule::Constant,
            scenarios_per_round: 256,
            batches_per_round: 64,
            delta_t_min: 1.0,
            grid: GridSpec::default(),
            stop: StopPolicy::default(),
            max_rounds: None,
        }
    }
}

impl TrainConfig {
    /// Hex SHA-256 of the configuration's JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// One row of the loss history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub update_index: usize,
    pub batch_loss: f64,
    pub trailing_avg: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    LossIncreased,
    MaxUpdates,
    MaxRounds,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The best snapshot, or the initial model when none was taken.
    pub model: SurrogateModel,
    pub history: Vec<LossRecord>,
    pub rounds: usize,
    pub updates: usize,
    pub stop_reason: StopReason,
}

/// Progress after each round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundSummary {
    pub round: usize,
    pub samples: usize,
    pub updates: usize,
    pub mean_batch_loss: f64,
    pub trailing_avg: Option<f64>,
}

/// Generates rounds and applies one optimiser update per batch until the
/// stop policy fires. Returns the parameters of the best snapshot.
pub fn train(
    model: SurrogateModel,
    config: &TrainConfig,
    mut on_round: impl FnMut(&RoundSummary),
) -> Result<TrainOutcome> {
    model.validate()?;
    let started = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = model;
    let mut adam = Adam::new(config.optimizer, &model);
    let mut monitor = StopMonitor::new(config.stop);
    let mut best = model.clone();
    let mut history = Vec::new();
    let mut rounds = 0;
    let stop_reason = if config.stop.max_updates == 0 {
        StopReason::MaxUpdates
    } else {
        'outer: loop {
            if config.max_rounds.is_some_and(|m| rounds >= m) {
                break StopReason::MaxRounds;
            }
            let round = generate_round(
                &mut rng,
                config.scenarios_per_round,
                config.batches_per_round,
                &config.grid,
                config.delta_t_min,
            )?;
            rounds += 1;
            let mut sum = 0.0;
            let mut last_avg = None;
            for (k, range) in round.batches.iter().enumerate() {
                let batch = &round.samples[range.clone()];
                let (loss, grads) = model.backward(batch);
                let lr = config.lr_schedule.rate(config.optimizer.learning_rate, monitor.updates());
                adam.update_with_rate(&mut model, &grads, lr)?;
                sum += loss;
                let (decision, avg) = monitor.record(loss);
                last_avg = avg.or(last_avg);
                history.push(LossRecord {
                    update_index: monitor.updates() - 1,
                    batch_loss: loss,
                    trailing_avg: avg,
                });
                match decision {
                    Decision::Continue => {}
                    Decision::Snapshot => best = model.clone(),
                    Decision::Stop => {
                        on_round(&RoundSummary {
                            round: rounds,
                            samples: round.samples.len(),
                            updates: monitor.updates(),
                            mean_batch_loss: sum / (k + 1) as f64,
                            trailing_avg: last_avg,
                        });
                        break 'outer if monitor.updates() >= config.stop.max_updates {
                            StopReason::MaxUpdates
                        } else {
                            StopReason::LossIncreased
                        };
                    }
                }
            }
            on_round(&RoundSummary {
                round: rounds,
                samples: round.samples.len(),
                updates: monitor.updates(),
                mean_batch_loss: sum / round.batches.len().max(1) as f64,
                trailing_avg: last_avg,
            });
        }
    };
    // Without any snapshot the latest parameters are the best we have.
    if monitor.best.is_none() {
        best = model;
    }
    best.metadata.seed = config.seed;
    best.metadata.optimizer = config.optimizer;
    best.metadata.training_rounds = rounds;
    best.metadata.updates = monitor.updates();
    best.metadata.config_digest = config.digest();
    best.metadata.created_at = chrono::Utc::now().to_rfc3339();
    best.metadata.training_seconds = started.elapsed().as_secs_f64();
    Ok(TrainOutcome {
        model: best,
        history,
        rounds,
        updates: monitor.updates(),
        stop_reason,
    })
}
