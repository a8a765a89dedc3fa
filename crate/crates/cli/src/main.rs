//! Command-line front end: simulate runs, tune fleets, compare the two
//! per-period solvers, and validate feeders against the exact power flow.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gridstor::data;
use gridstor::formats::scenario::ScenarioSpec;
use gridstor::formats::{
    parse_feeder, parse_fleet, parse_scenario, parse_trace, write_dual_trace, write_metrics,
    write_trajectory, FleetSpec,
};
use gridstor_core::controller::{assemble_step, solve_centralized, Mode, SolverChoice};
use gridstor_core::dualnet::{solve_distributed, DualConfig, DualNetError, StepSchedule};
use gridstor_core::grid::{ac_sweep, ldf_voltages, voltage_margins, Feeder};
use gridstor_core::market::Scenario;
use gridstor_core::sim::{audit, run, suboptimality_report, RunConfig, World};
use gridstor_core::storage::{EnvelopeConvention, FleetState};

#[derive(Parser)]
#[command(
    name = "gridstor",
    about = "Real-time coordination of networked energy storage on radial feeders",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a horizon and write the trajectory and metrics files
    Run(RunArgs),
    /// Print tuned per-unit parameters and the suboptimality gaps
    Tune(TuneArgs),
    /// Solve a single period with both solvers and compare them
    SolveStep(SolveStepArgs),
    /// Compare linearized against exact voltages on a feeder
    ValidateFeeder(ValidateArgs),
}

#[derive(Args, Clone)]
struct WorldArgs {
    /// Feeder file path, or `feeder12` / `feeder33` for the shipped ones
    #[arg(long)]
    feeder: Option<String>,
    /// Fleet file path, or `fleet12` / `fleet33`
    #[arg(long)]
    fleet: Option<String>,
    /// `scenario1`, `random33`, `synthetic`, `random`, or `trace`
    #[arg(long)]
    scenario: Option<String>,
    /// Scenario config file for `synthetic` / `random`
    #[arg(long)]
    scenario_cfg: Option<PathBuf>,
    /// Trace file for `--scenario trace`
    #[arg(long)]
    trace_file: Option<PathBuf>,
    /// Seed for randomized scenarios (required there, refused elsewhere)
    #[arg(long)]
    seed: Option<u64>,
    /// Price-envelope convention: `total-load` or `mean-load`
    #[arg(long)]
    convention: Option<String>,
    /// key=value file supplying defaults for any omitted flag
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    world: WorldArgs,
    /// weighted | nonweighted | greedy | relaxed-sign
    #[arg(long)]
    mode: Option<String>,
    /// centralized | distributed
    #[arg(long)]
    solver: Option<String>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Dual solver tolerance
    #[arg(long)]
    tol: Option<f64>,
    /// Dual solver iteration cap
    #[arg(long)]
    max_iters: Option<u32>,
    /// Dual step schedule: `auto`, `default`, or `<nu>,<lambda>` constants
    #[arg(long)]
    steps: Option<String>,
    #[arg(long)]
    trajectory_out: Option<PathBuf>,
    #[arg(long)]
    metrics_out: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    world: WorldArgs,
}

#[derive(Args)]
struct SolveStepArgs {
    #[command(flatten)]
    world: WorldArgs,
    #[arg(long)]
    mode: Option<String>,
    /// Period index to solve
    #[arg(long, default_value_t = 0)]
    t: usize,
    /// Print the per-user comparison table
    #[arg(long)]
    compare: bool,
    /// Write the per-iteration solver trace here
    #[arg(long)]
    trace_out: Option<PathBuf>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<u32>,
    #[arg(long)]
    steps: Option<String>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    feeder: Option<String>,
    /// Uniform per-bus active demand, pu
    #[arg(long, default_value_t = 0.004)]
    load: f64,
    /// Uniform per-bus reactive demand, pu
    #[arg(long, default_value_t = 0.002)]
    reactive: f64,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Format(String),
    #[error("{0}")]
    Run(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 3,
            CliError::Format(_) => 4,
            CliError::Run(_) => 5,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Tune(args) => cmd_tune(args),
        Command::SolveStep(args) => cmd_solve_step(args),
        Command::ValidateFeeder(args) => cmd_validate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

// ---- config-file defaults -------------------------------------------------

struct Defaults(BTreeMap<String, String>);

impl Defaults {
    fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let mut map = BTreeMap::new();
        if let Some(path) = path {
            let text = read(path)?;
            for raw in text.lines() {
                let line = match raw.find('#') {
                    Some(pos) => raw[..pos].trim(),
                    None => raw.trim(),
                };
                if line.is_empty() {
                    continue;
                }
                if let Some((k, v)) = line.split_once('=') {
                    map.insert(k.trim().to_string(), v.trim().to_string());
                }
            }
        }
        Ok(Self(map))
    }

    fn fill(&self, slot: &mut Option<String>, key: &str) {
        if slot.is_none() {
            *slot = self.0.get(key).cloned();
        }
    }

    fn fill_parsed<T: std::str::FromStr>(&self, slot: &mut Option<T>, key: &str) {
        if slot.is_none() {
            *slot = self.0.get(key).and_then(|v| v.parse().ok());
        }
    }

    fn fill_path(&self, slot: &mut Option<PathBuf>, key: &str) {
        if slot.is_none() {
            *slot = self.0.get(key).map(PathBuf::from);
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)
                .map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        }
    }
    std::fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

// ---- world assembly --------------------------------------------------------

fn apply_world_defaults(args: &mut WorldArgs) -> Result<(), CliError> {
    let defaults = Defaults::load(args.config.as_deref())?;
    defaults.fill(&mut args.feeder, "feeder");
    defaults.fill(&mut args.fleet, "fleet");
    defaults.fill(&mut args.scenario, "scenario");
    defaults.fill_path(&mut args.scenario_cfg, "scenario_cfg");
    defaults.fill_path(&mut args.trace_file, "trace_file");
    defaults.fill_parsed(&mut args.seed, "seed");
    defaults.fill(&mut args.convention, "convention");
    Ok(())
}

fn load_feeder(name: Option<&str>) -> Result<Feeder, CliError> {
    let name = name.ok_or_else(|| CliError::Format("missing --feeder".into()))?;
    let text = match name {
        "feeder12" => data::FEEDER12.to_string(),
        "feeder33" => data::FEEDER33.to_string(),
        path => read(Path::new(path))?,
    };
    parse_feeder(&text).map_err(|e| CliError::Format(format!("feeder {name}: {e}")))
}

fn load_fleet(name: Option<&str>, bus_count: usize) -> Result<FleetSpec, CliError> {
    let name = name.ok_or_else(|| CliError::Format("missing --fleet".into()))?;
    let text = match name {
        "fleet12" => data::FLEET12.to_string(),
        "fleet33" => data::FLEET33.to_string(),
        path => read(Path::new(path))?,
    };
    parse_fleet(&text, bus_count).map_err(|e| CliError::Format(format!("fleet {name}: {e}")))
}

fn load_scenario(args: &WorldArgs, bus_count: usize) -> Result<Scenario, CliError> {
    let kind = args
        .scenario
        .as_deref()
        .ok_or_else(|| CliError::Format("missing --scenario".into()))?;
    let need_seed = || {
        args.seed
            .ok_or_else(|| CliError::Format("randomized scenarios require --seed".into()))
    };
    match kind {
        "scenario1" => Ok(data::scenario1(bus_count)),
        "random33" => Ok(data::random_scenario(bus_count, need_seed()?)),
        "synthetic" | "random" => {
            let path = args
                .scenario_cfg
                .as_deref()
                .ok_or_else(|| CliError::Format("--scenario-cfg required".into()))?;
            let text = read(path)?;
            let spec = parse_scenario(&text, bus_count)
                .map_err(|e| CliError::Format(format!("{}: {e}", path.display())))?;
            match (kind, spec) {
                ("synthetic", ScenarioSpec::Synthetic(cfg)) => Ok(Scenario::Synthetic(cfg)),
                ("random", ScenarioSpec::Random(cfg)) => Ok(Scenario::Random {
                    cfg,
                    seed: need_seed()?,
                }),
                (_, _) => Err(CliError::Format(format!(
                    "scenario config kind does not match --scenario {kind}"
                ))),
            }
        }
        "trace" => {
            let path = args
                .trace_file
                .as_deref()
                .ok_or_else(|| CliError::Format("--trace-file required".into()))?;
            let text = read(path)?;
            let trace = parse_trace(&text)
                .map_err(|e| CliError::Format(format!("{}: {e}", path.display())))?;
            Ok(Scenario::Trace(trace))
        }
        other => Err(CliError::Format(format!("unknown scenario `{other}`"))),
    }
}

fn parse_convention(args: &WorldArgs) -> Result<EnvelopeConvention, CliError> {
    match args.convention.as_deref() {
        None | Some("total-load") => Ok(EnvelopeConvention::TotalLoad),
        Some("mean-load") => Ok(EnvelopeConvention::MeanLoad),
        Some(other) => Err(CliError::Format(format!("unknown convention `{other}`"))),
    }
}

fn build_world(args: &WorldArgs) -> Result<World, CliError> {
    let feeder = load_feeder(args.feeder.as_deref())?;
    let n = feeder.bus_count();
    let fleet = load_fleet(args.fleet.as_deref(), n)?;
    let scenario = load_scenario(args, n)?;
    let convention = parse_convention(args)?;
    World::new(feeder, fleet.units, scenario, convention, fleet.initial_soc)
        .map_err(|e| CliError::Format(e.to_string()))
}

fn parse_mode(mode: Option<&str>) -> Result<Mode, CliError> {
    match mode.unwrap_or("weighted") {
        "weighted" => Ok(Mode::Weighted),
        "nonweighted" => Ok(Mode::NonWeighted),
        "greedy" => Ok(Mode::Greedy),
        "relaxed-sign" => Ok(Mode::RelaxedSign),
        other => Err(CliError::Format(format!("unknown mode `{other}`"))),
    }
}

fn parse_schedule(steps: Option<&str>) -> Result<StepSchedule, CliError> {
    match steps.unwrap_or("auto") {
        "auto" => Ok(StepSchedule::Auto),
        "default" => Ok(StepSchedule::default()),
        pair => {
            let (nu, lambda) = pair.split_once(',').ok_or_else(|| {
                CliError::Format("--steps wants auto, default, or nu,lambda".into())
            })?;
            let nu: f64 = nu
                .trim()
                .parse()
                .map_err(|_| CliError::Format(format!("invalid step `{nu}`")))?;
            let lambda: f64 = lambda
                .trim()
                .parse()
                .map_err(|_| CliError::Format(format!("invalid step `{lambda}`")))?;
            Ok(StepSchedule::Constant { nu, lambda })
        }
    }
}

fn dual_config(
    tol: Option<f64>,
    max_iters: Option<u32>,
    steps: Option<&str>,
) -> Result<DualConfig, CliError> {
    Ok(DualConfig {
        max_iters: max_iters.unwrap_or(2000),
        tol: tol.unwrap_or(1e-8),
        schedule: parse_schedule(steps)?,
        comm_seed: None,
    })
}

// ---- subcommands -----------------------------------------------------------

fn cmd_run(mut args: RunArgs) -> Result<(), CliError> {
    apply_world_defaults(&mut args.world)?;
    let defaults = Defaults::load(args.world.config.as_deref())?;
    defaults.fill(&mut args.mode, "mode");
    defaults.fill(&mut args.solver, "solver");
    defaults.fill_parsed(&mut args.horizon, "horizon");
    defaults.fill_parsed(&mut args.tol, "tol");
    defaults.fill_parsed(&mut args.max_iters, "max_iters");
    defaults.fill(&mut args.steps, "steps");
    defaults.fill_path(&mut args.trajectory_out, "trajectory_out");
    defaults.fill_path(&mut args.metrics_out, "metrics_out");

    let world = build_world(&args.world)?;
    let mode = parse_mode(args.mode.as_deref())?;
    let solver = match args.solver.as_deref().unwrap_or("centralized") {
        "centralized" => SolverChoice::Centralized,
        "distributed" => SolverChoice::Distributed(dual_config(
            args.tol,
            args.max_iters,
            args.steps.as_deref(),
        )?),
        other => return Err(CliError::Format(format!("unknown solver `{other}`"))),
    };
    let horizon = args
        .horizon
        .ok_or_else(|| CliError::Format("missing --horizon".into()))?;

    let out = run(
        &world,
        &RunConfig {
            mode,
            solver,
            horizon,
        },
    )
    .map_err(|e| CliError::Run(e.to_string()))?;
    let report = audit(
        &out.records,
        &world.units,
        world.params_for(mode),
        &world.initial_soc,
        mode,
    );

    let metrics_text = write_metrics(&out.metrics, Some(&report));
    print!("{metrics_text}");
    if let Some(path) = &args.trajectory_out {
        write_file(path, &write_trajectory(&out.records))?;
        eprintln!("trajectory written to {}", path.display());
    }
    if let Some(path) = &args.metrics_out {
        write_file(path, &metrics_text)?;
        eprintln!("metrics written to {}", path.display());
    }
    Ok(())
}

fn cmd_tune(mut args: TuneArgs) -> Result<(), CliError> {
    apply_world_defaults(&mut args.world)?;
    let world = build_world(&args.world)?;
    println!("unit  floor       ceil        weight      shift        gap");
    for (i, p) in world.weighted.iter().enumerate() {
        println!(
            "{:<5} {:<11.5} {:<11.5} {:<11.5} {:<12.6} {:.6}",
            i + 1,
            p.envelope.floor,
            p.envelope.ceil,
            p.weight,
            p.soc_shift,
            p.gap_contribution
        );
    }
    let report = suboptimality_report(&world.weighted, &world.nonweighted, world.bounds.cp.lo);
    println!("common_weight={}", world.nonweighted[0].weight);
    println!("weighted_gap={}", report.weighted_gap);
    println!("common_weight_gap={}", report.common_weight_gap);
    println!("distance_bound={}", report.distance_bound);
    Ok(())
}

fn cmd_solve_step(mut args: SolveStepArgs) -> Result<(), CliError> {
    apply_world_defaults(&mut args.world)?;
    let defaults = Defaults::load(args.world.config.as_deref())?;
    defaults.fill(&mut args.mode, "mode");
    defaults.fill_parsed(&mut args.tol, "tol");
    defaults.fill_parsed(&mut args.max_iters, "max_iters");
    defaults.fill(&mut args.steps, "steps");

    let world = build_world(&args.world)?;
    let mode = parse_mode(args.mode.as_deref())?;
    let params = world.params_for(mode);
    let shifts: Vec<f64> = params.iter().map(|p| p.soc_shift).collect();
    let state = FleetState::new(world.initial_soc.clone(), &shifts)
        .map_err(|e| CliError::Run(e.to_string()))?;
    let tick = world
        .scenario
        .tick(args.t)
        .map_err(|e| CliError::Run(e.to_string()))?;
    let problem = assemble_step(
        mode,
        &tick,
        &state,
        &world.units,
        params,
        &world.sens,
        world.feeder.alpha(),
        world.feeder.beta(),
    )
    .map_err(|e| CliError::Run(e.to_string()))?;

    let central = solve_centralized(&problem).map_err(|e| CliError::Run(e.to_string()))?;
    let cfg = dual_config(args.tol, args.max_iters, args.steps.as_deref())?;
    let prev = vec![0.0; world.units.len()];
    let dist = match solve_distributed(&problem, &prev, &cfg) {
        Ok(run) => run,
        Err(DualNetError::NonConvergence {
            iterations,
            residual,
            run,
        }) => {
            eprintln!(
                "warning: no convergence after {iterations} iterations (residual {residual:.3e})"
            );
            *run
        }
        Err(e) => return Err(CliError::Run(e.to_string())),
    };

    let gap = central
        .charge
        .iter()
        .zip(&dist.decision.charge)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    println!("period={}", args.t);
    println!("dual_iterations={}", dist.iterations);
    println!("dual_residual={:.3e}", dist.residual);
    println!("central_kkt_residual={:.3e}", central.kkt_residual);
    println!("max_abs_gap={gap:.3e}");
    if args.compare {
        println!("unit  b_central      b_distributed");
        for (i, (a, b)) in central.charge.iter().zip(&dist.decision.charge).enumerate() {
            println!("{:<5} {:<14.9} {:<14.9}", i + 1, a, b);
        }
    }
    if let Some(path) = &args.trace_out {
        write_file(path, &write_dual_trace(&dist))?;
        eprintln!("iteration trace written to {}", path.display());
    }
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<(), CliError> {
    let mut feeder_name = args.feeder;
    let defaults = Defaults::load(args.config.as_deref())?;
    defaults.fill(&mut feeder_name, "feeder");
    let feeder = load_feeder(feeder_name.as_deref())?;
    let n = feeder.bus_count();
    let sens = gridstor_core::grid::build_sensitivities(&feeder);
    let p = vec![args.load; n];
    let q = vec![args.reactive; n];

    let linear =
        ldf_voltages(&sens, &p, &q, feeder.v0()).map_err(|e| CliError::Run(e.to_string()))?;
    let exact = ac_sweep(&feeder, &p, &q).map_err(|e| CliError::Run(e.to_string()))?;
    let mut worst = 0.0f64;
    for (vl, va) in linear.iter().zip(&exact.voltages) {
        worst = worst.max((vl.sqrt() - va.sqrt()).abs());
    }
    let margins = voltage_margins(&sens, &p, &q, feeder.alpha(), feeder.beta())
        .map_err(|e| CliError::Run(e.to_string()))?;

    println!("buses={n}");
    println!("sweep_iterations={}", exact.iterations);
    println!(
        "min_voltage={:.6}",
        exact
            .voltages
            .iter()
            .fold(f64::INFINITY, |a, v| a.min(v.sqrt()))
    );
    println!("max_linearization_error={worst:.3e}");
    println!("linearization_ok={}", worst < 0.005);
    println!("band_feasible={}", margins.feasible(0.0));
    println!("worst_band_slack={:.6}", margins.worst());
    Ok(())
}
