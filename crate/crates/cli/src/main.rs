//! `sunhours`: simulate, train, predict, optimise, validate and serve.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use sunhours::datagen::{self, TrainConfig};
use sunhours::formats::{self, HeatmapFormat, SceneDocument, Strictness};
use sunhours::heatmap::Heatmap;
use sunhours::mlp::SurrogateModel;
use sunhours::optimizer::{self, Evaluator, GaConfig, Lattice, LayoutProblem};
use sunhours::oracle::sunlight_hours_sc;
use sunhours::scene::SamplingGrid;
use sunhours::site::{check_compliance, predict_site, ComplianceReport};
use sunhours::validation::{self, SingleBuildingConfig};
use sunhours::{scenes, Error};

#[derive(Parser)]
#[command(name = "sunhours", version, about = "Sunlight-hours assessment for residential layouts")]
struct Cli {
    /// Accept unknown scene fields with a warning instead of failing.
    #[arg(long, global = true)]
    lenient: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Oracle heatmap and compliance for a scene.
    Simulate(AssessArgs),
    /// Surrogate heatmap and compliance for a scene.
    Predict(AssessArgs),
    /// Train a surrogate from freshly generated oracle data.
    Train(TrainArgs),
    /// Search a placement for one building.
    Optimize(OptimizeArgs),
    /// Run the surrogate-versus-oracle experiments.
    Validate(ValidateArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
    /// Write a built-in site as a scene document.
    Scene(SceneArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct AssessArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Required by `predict`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Heatmap output; the compliance report goes next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Oracle time step in minutes, 1 to 5.
    #[arg(long, default_value_t = 1.0)]
    delta_t_min: f64,
    /// Resample the scene grid at this spacing over the same extent.
    #[arg(long)]
    spacing: Option<f64>,
    /// Exit with status 2 when any building fails.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// Model output path.
    #[arg(long)]
    out: PathBuf,
    /// Training configuration JSON; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Loss history CSV; defaults to the model path with `.loss.csv`.
    #[arg(long)]
    loss_csv: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EvaluatorArg {
    Surrogate,
    Oracle,
}

#[derive(Args)]
struct OptimizeArgs {
    /// Base scene; context-flagged buildings form the second score and
    /// movable ones are dropped. Defaults to the built-in analog site.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "surrogate")]
    evaluator: EvaluatorArg,
    /// Result JSON.
    #[arg(long)]
    out: PathBuf,
    /// Run log (JSON lines); defaults to the result path with `.log.jsonl`.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 512)]
    generations: usize,
    #[arg(long, default_value_t = 64)]
    population: usize,
    #[arg(long, default_value_t = 1.0)]
    delta_t_min: f64,
    /// Lattice JSON; defaults to the full placement lattice.
    #[arg(long)]
    lattice: Option<PathBuf>,
    /// Exit with status 2 unless the chosen layout passes under the oracle.
    #[arg(long)]
    check: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    All,
    Single,
    Multi,
    Slope,
    Optimization,
    C1,
    C3,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Directory for the JSON reports.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    suite: Suite,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Scenarios for the random suites.
    #[arg(long)]
    scenarios: Option<usize>,
    /// Relative grid spacing of the single-building suite.
    #[arg(long, default_value_t = 0.02)]
    spacing: f64,
    #[arg(long, default_value_t = 1.0)]
    delta_t_min: f64,
    #[arg(long, default_value_t = 512)]
    generations: usize,
    #[arg(long, default_value_t = 64)]
    population: usize,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    scene: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Builtin {
    Multi,
    Slope,
    Optimization,
    Canyon,
}

#[derive(Args)]
struct SceneArgs {
    #[arg(value_enum)]
    site: Builtin,
    #[arg(long)]
    out: PathBuf,
}

/// Failure modes mapped onto exit codes.
enum Failure {
    /// I/O, schema or argument problems: exit 1.
    Error(String),
    /// `--check` found a failing building: exit 2.
    NonCompliant,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Error(e.to_string())
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let mode = if cli.lenient { Strictness::Lenient } else { Strictness::Strict };
    let result = match cli.command {
        Command::Simulate(a) => assess(a, mode, false),
        Command::Predict(a) => assess(a, mode, true),
        Command::Train(a) => train(a),
        Command::Optimize(a) => optimize(a, mode),
        Command::Validate(a) => validate(a),
        Command::Serve(a) => serve(a, mode),
        Command::Scene(a) => export_scene(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Error(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::NonCompliant) => {
            eprintln!("non-compliant: at least one building fails the sunlight requirement");
            ExitCode::from(2)
        }
    }
}

fn read_scene(path: &Path, mode: Strictness) -> Result<SceneDocument, Failure> {
    let f = File::open(path).map_err(|e| Failure::Error(format!("{}: {e}", path.display())))?;
    SceneDocument::load(f, mode).map_err(|e| Failure::Error(format!("{}: {e}", path.display())))
}

fn read_model(path: &Path) -> Result<SurrogateModel, Failure> {
    let f = File::open(path).map_err(|e| Failure::Error(format!("{}: {e}", path.display())))?;
    formats::load_model(f).map_err(|e| Failure::Error(format!("{}: {e}", path.display())))
}

fn check_step(delta_t_min: f64) -> CliResult {
    if (1.0..=5.0).contains(&delta_t_min) {
        Ok(())
    } else {
        Err(Error::InvalidTimeStep(delta_t_min).into())
    }
}

/// The same extent sampled at a new spacing.
fn resample(grid: &SamplingGrid, spacing: f64) -> Result<SamplingGrid, Failure> {
    if !(spacing > 0.0) {
        return Err(Failure::Error("--spacing must be positive".into()));
    }
    let span = |n: usize| (n - 1) as f64 * grid.spacing_m;
    let count = |n: usize| (span(n) / spacing + 1e-9).floor() as usize + 1;
    Ok(SamplingGrid {
        spacing_m: spacing,
        nx: count(grid.nx),
        ny: count(grid.ny),
        ..*grid
    })
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(Error::from)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn report_compliance(c: &ComplianceReport) {
    for b in &c.buildings {
        let min = b.check_points.iter().map(|p| p.sunlight_hours).fold(f64::INFINITY, f64::min);
        if min.is_finite() {
            println!("{:<16} {:?} (min {:.2} h over {} check points)", b.id, b.verdict, min, b.check_points.len());
        } else {
            println!("{:<16} {:?}", b.id, b.verdict);
        }
    }
    println!("overall: {}", if c.pass { "pass" } else { "fail" });
}

fn assess(a: AssessArgs, mode: Strictness, surrogate: bool) -> CliResult {
    check_step(a.delta_t_min)?;
    let doc = read_scene(&a.scene, mode)?;
    let grid = match a.spacing {
        Some(s) => resample(&doc.grid, s)?,
        None => doc.grid,
    };
    let scene = doc.scene();
    let t = Instant::now();
    let heatmap: Heatmap = if surrogate {
        let path = a.model.as_deref().ok_or_else(|| Failure::Error("predict needs --model".into()))?;
        let model = read_model(path)?;
        predict_site(&model, &scene, &grid)?
    } else {
        sunlight_hours_sc(&scene, &grid, a.delta_t_min)?
    };
    log::info!("{} cells in {:.3} s", grid.len(), t.elapsed().as_secs_f64());
    let compliance = check_compliance(&heatmap, &scene);
    if let Some(out) = &a.out {
        let format = match a.format {
            Format::Csv => HeatmapFormat::Csv,
            Format::Json => HeatmapFormat::Json,
        };
        fs::write(out, formats::export_heatmap(&heatmap, format)?)?;
        write_json(&with_suffix(out, ".compliance.json"), &compliance)?;
    }
    report_compliance(&compliance);
    if a.check && !compliance.pass {
        return Err(Failure::NonCompliant);
    }
    Ok(())
}

fn train(a: TrainArgs) -> CliResult {
    let mut config: TrainConfig = match &a.config {
        Some(p) => serde_json::from_reader(File::open(p)?).map_err(Error::from)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(r) = a.rounds {
        config.max_rounds = Some(r);
    }
    if let Some(lr) = a.learning_rate {
        config.optimizer.learning_rate = lr;
    }
    let t = Instant::now();
    let outcome = datagen::train(SurrogateModel::init(config.seed), &config, |r| {
        log::info!(
            "round {} updates {} samples {} loss {:.5} trailing {} ({:.0} s)",
            r.round,
            r.updates,
            r.samples,
            r.mean_batch_loss,
            r.trailing_avg.map_or("-".into(), |v| format!("{v:.5}")),
            t.elapsed().as_secs_f64()
        );
    })?;
    let mut w = BufWriter::new(File::create(&a.out)?);
    formats::save_model(&outcome.model, &mut w)?;
    w.flush()?;
    let loss_path = a.loss_csv.unwrap_or_else(|| with_suffix(&a.out, ".loss.csv"));
    formats::write_loss_csv(BufWriter::new(File::create(&loss_path)?), &outcome.history)?;
    write_json(&with_suffix(&a.out, ".config.json"), &config)?;
    println!(
        "{} rounds, {} updates, stopped: {:?}; model {}",
        outcome.rounds,
        outcome.updates,
        outcome.stop_reason,
        a.out.display()
    );
    Ok(())
}

fn optimize(a: OptimizeArgs, mode: Strictness) -> CliResult {
    check_step(a.delta_t_min)?;
    let (scene, grid, northern) = match &a.scene {
        Some(p) => {
            let doc = read_scene(p, mode)?;
            let (scene, northern) = doc.layout_base();
            (scene, doc.grid, northern)
        }
        None => {
            let site = scenes::optimization_site();
            (site.scene, site.grid, site.northern)
        }
    };
    let model = match (&a.model, a.evaluator) {
        (Some(p), _) => Some(read_model(p)?),
        (None, EvaluatorArg::Surrogate) => return Err(Failure::Error("the surrogate evaluator needs --model".into())),
        (None, EvaluatorArg::Oracle) => None,
    };
    let evaluator = match (a.evaluator, &model) {
        (EvaluatorArg::Surrogate, Some(m)) => Evaluator::Surrogate(m),
        _ => Evaluator::Oracle { delta_t_min: a.delta_t_min },
    };
    let lattice: Lattice = match &a.lattice {
        Some(p) => serde_json::from_reader(File::open(p)?).map_err(Error::from)?,
        None => Lattice::default(),
    };
    let ga = GaConfig {
        generations: a.generations,
        population: a.population,
        seed: a.seed,
        ..GaConfig::default()
    };
    let problem = LayoutProblem {
        scene,
        grid,
        northern,
        evaluator,
    };
    let t = Instant::now();
    let outcome = optimizer::ga_optimize_with(
        &lattice,
        &ga,
        |d| problem.objective(d).map(|o| o.objective),
        |g| {
            if (g.generation + 1) % 32 == 0 {
                log::info!("generation {} best {:.4} mean {:.4}", g.generation + 1, g.best_score, g.mean_score);
            }
        },
    )?;
    let elapsed = t.elapsed().as_secs_f64();
    let log_path = a.log.clone().unwrap_or_else(|| with_suffix(&a.out, ".log.jsonl"));
    optimizer::write_run_log(BufWriter::new(File::create(&log_path)?), &outcome.history)?;

    let oracle_problem = LayoutProblem {
        evaluator: Evaluator::Oracle { delta_t_min: a.delta_t_min },
        ..problem.clone()
    };
    let breakdown = oracle_problem.objective(&outcome.best)?;
    let placed = oracle_problem.scene_with(&outcome.best)?;
    let heatmap = sunlight_hours_sc(&placed, &grid, a.delta_t_min)?;
    let compliance = check_compliance(&heatmap, &placed);
    write_json(
        &a.out,
        &json!({
            "evaluator": evaluator.name(),
            "ga": ga,
            "best": outcome.best,
            "search_score": outcome.best_score,
            "oracle_objective": breakdown,
            "oracle_compliance": compliance,
            "evaluations": outcome.evaluations,
        }),
    )?;
    let b = outcome.best;
    println!(
        "best [x {} m, y {} m, L {} m, W {} m, H {} m, {} deg] score {:.4} (oracle {:.4}) in {:.1} s",
        b.x_m,
        b.y_m,
        b.length_m,
        b.width_m,
        b.height_m,
        b.orientation_deg,
        outcome.best_score,
        breakdown.objective,
        elapsed
    );
    report_compliance(&compliance);
    if a.check && !compliance.pass {
        return Err(Failure::NonCompliant);
    }
    Ok(())
}

fn validate(a: ValidateArgs) -> CliResult {
    check_step(a.delta_t_min)?;
    fs::create_dir_all(&a.out)?;
    let model_text = fs::read_to_string(&a.model)?;
    let model = formats::model_from_json(&model_text)?;
    let run = |s: Suite| a.suite == Suite::All || a.suite == s;
    let scenarios = |default: usize| a.scenarios.unwrap_or(default);
    let write = |name: &str, report: serde_json::Value| -> CliResult {
        println!("{name}: {report}");
        write_json(&a.out.join(format!("{name}.json")), &report)
    };
    if run(Suite::Single) {
        let config = SingleBuildingConfig {
            n_scenarios: scenarios(64),
            spacing: a.spacing,
            seed: a.seed,
            delta_t_min: a.delta_t_min,
        };
        let r = validation::experiment_single_building(&model, &config)?;
        write("single_building", json!({ "config": config, "report": r }))?;
    }
    if run(Suite::Multi) {
        let (scene, grid) = scenes::multi_building_site();
        let (r, _, _) = validation::experiment_multi_building(&model_text, &scene, &grid, a.delta_t_min)?;
        let speedup = r.timing.map(|t| t.speedup());
        write(
            "multi_building",
            json!({ "site": "built-in reconstructed analog", "report": r, "speedup": speedup }),
        )?;
    }
    if run(Suite::Slope) {
        let (scene, grid) = scenes::slope_site();
        let r = validation::experiment_slope(&model, &scene, &grid, a.delta_t_min)?;
        write("slope", json!({ "site": "built-in reconstructed analog", "report": r }))?;
    }
    if run(Suite::Optimization) {
        let ga = GaConfig {
            generations: a.generations,
            population: a.population,
            seed: a.seed,
            ..GaConfig::default()
        };
        let site = scenes::optimization_site();
        let r = validation::experiment_optimization(&model, &site, &Lattice::default(), &ga, a.delta_t_min)?;
        write("optimization", serde_json::to_value(&r).map_err(Error::from)?)?;
    }
    if run(Suite::C1) {
        let r = validation::proof_c1(scenarios(500), a.seed, a.delta_t_min)?;
        write("multi_run_incidence", serde_json::to_value(r).map_err(Error::from)?)?;
    }
    if run(Suite::C3) {
        let r = validation::proof_c3(scenarios(500), a.seed, a.delta_t_min)?;
        write("valid_area_coverage", serde_json::to_value(r).map_err(Error::from)?)?;
    }
    Ok(())
}

fn serve(a: ServeArgs, mode: Strictness) -> CliResult {
    let model = a.model.as_deref().map(read_model).transpose()?;
    if model.is_none() {
        log::warn!("no model given; /api/predict will answer 503");
    }
    let scene = a.scene.as_deref().map(|p| read_scene(p, mode)).transpose()?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let state = sunhours_server::AppState::new(model, scene);
        sunhours_server::serve((a.host, a.port).into(), state).await
    })?;
    Ok(())
}

fn export_scene(a: SceneArgs) -> CliResult {
    let doc = match a.site {
        Builtin::Multi => {
            let (s, g) = scenes::multi_building_site();
            SceneDocument::new(&s, g)
        }
        Builtin::Slope => {
            let (s, g) = scenes::slope_site();
            SceneDocument::new(&s, g)
        }
        Builtin::Canyon => {
            let (s, g) = scenes::canyon_site();
            SceneDocument::new(&s, g)
        }
        Builtin::Optimization => {
            let site = scenes::optimization_site();
            let mut doc = SceneDocument::new(&site.scene, site.grid);
            for &k in &site.northern {
                doc.buildings[k].context_flag = true;
            }
            doc
        }
    };
    let mut w = BufWriter::new(File::create(&a.out)?);
    doc.save(&mut w)?;
    w.flush()?;
    Ok(())
}
