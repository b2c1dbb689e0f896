//! Command-line interface: `simulate`, `solve`, `capture` and `profile`
//! subcommands over the scenario runner and the dataset toolkit.

use clap::{Args, Parser, Subcommand};
use dualfd::bench::{self, metric_set, MetricsRecord, MetricField};
use dualfd::dual::{SofteningParams, StabilizationParams};
use dualfd::solvers::{solve, SolveStatus, SolverConfig, SolverId};
use dualfd_cli::capture::BucketSpec;
use dualfd_cli::error::CliError;
use dualfd_cli::metrics_io;
use dualfd_cli::runner::{run_simulation, write_run_outputs, RunConfig};
use dualfd_cli::scenario::{build_scenario, Overrides, Scenario, ScenarioId};
use dualfd_cli::scene::SceneFile;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

#[derive(Parser)]
#[command(
    name = "dualfd",
    about = "Maximal-coordinate rigid-body simulation and dual-solver benchmarking",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario with one solver and write time series + manifest.
    Simulate(SimulateArgs),
    /// Solve every problem of a captured dataset with one solver.
    Solve(SolveArgs),
    /// Capture a dual-problem dataset from a scenario run.
    Capture(CaptureArgs),
    /// Render performance profiles from metric CSVs.
    Profile(ProfileArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario id: box_on_plane | boxes_fixed | nunchaku | fourbar_fixed |
    /// fourbar_free.
    #[arg(long, conflicts_with = "scene")]
    scenario: Option<String>,
    /// Scene description file (JSON) instead of a named scenario.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Time step (s).
    #[arg(long)]
    dt: Option<f64>,
    /// Run duration (s).
    #[arg(long)]
    duration: Option<f64>,
    /// Contact activation margin (m).
    #[arg(long)]
    margin: Option<f64>,
    /// Duplicate-contact culling distance (m).
    #[arg(long)]
    min_separation: Option<f64>,
    /// Friction coefficient override.
    #[arg(long)]
    friction: Option<f64>,
    /// Restitution coefficient override.
    #[arg(long)]
    restitution: Option<f64>,
}

impl ScenarioArgs {
    fn build(&self) -> Result<Scenario, CliError> {
        let overrides = Overrides {
            dt: self.dt,
            duration: self.duration,
            friction: self.friction,
            restitution: self.restitution,
            margin: self.margin,
            min_separation: self.min_separation,
            ..Default::default()
        };
        if let Some(path) = &self.scene {
            let file = SceneFile::load(path)?;
            let mut scenario = file.to_scenario(
                path.file_stem().and_then(|s| s.to_str()).unwrap_or("scene"),
            )?;
            if let Some(dt) = self.dt {
                scenario.dt = dt;
            }
            if let Some(duration) = self.duration {
                scenario.duration = duration;
            }
            if let Some(m) = self.margin {
                scenario.collision.margin = m;
            }
            if let Some(ms) = self.min_separation {
                scenario.collision.min_separation = ms;
            }
            return Ok(scenario);
        }
        let name = self
            .scenario
            .as_deref()
            .ok_or_else(|| CliError::UnknownScenario("(none given)".into()))?;
        let id = ScenarioId::from_str(name)?;
        Ok(build_scenario(id, &overrides))
    }
}

#[derive(Args)]
struct SolverArgs {
    /// Solver id: PGS-CCP | PGS-NCP | NBGS | RAISIM | RAISIM-DS |
    /// RAISIM-DS-ES | ADMM-CCP | ADMM-NCP-FP | ADMM-NCP-LA | ADMM-NCP-SA.
    #[arg(long)]
    solver: String,
    /// Iteration budget.
    #[arg(long)]
    nmax: Option<usize>,
    /// Uniform absolute tolerance for all three residuals.
    #[arg(long)]
    eps: Option<f64>,
}

impl SolverArgs {
    fn id(&self) -> Result<SolverId, CliError> {
        SolverId::from_str(&self.solver).map_err(|_| CliError::UnknownSolver(self.solver.clone()))
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Enable Baumgarte-like constraint stabilization.
    #[arg(long)]
    stabilize: bool,
    /// Enable constraint softening.
    #[arg(long)]
    soften: bool,
    /// Joint error-reduction factor (with --stabilize).
    #[arg(long, default_value_t = 0.1)]
    erp_joint: f64,
    /// Limit error-reduction factor (with --stabilize).
    #[arg(long, default_value_t = 0.1)]
    erp_limit: f64,
    /// Contact error-reduction factor (with --stabilize).
    #[arg(long, default_value_t = 0.1)]
    erp_contact: f64,
    /// Disable warmstarting from the previous step.
    #[arg(long)]
    cold_start: bool,
    /// Output directory (run.csv, metrics.csv, manifest.json).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    /// Dataset file written by `capture`.
    #[arg(long)]
    dataset: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    /// Output metrics CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CaptureArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Reference solver generating the trajectory.
    #[arg(long, default_value = "ADMM-NCP-LA")]
    solver: String,
    /// Bucket spec, e.g. "all=20" or "dense_contacts=5,single_contact=10".
    #[arg(long)]
    buckets: String,
    /// Output dataset file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ProfileArgs {
    /// One or more metric CSVs (merged into one grid).
    #[arg(long, num_args = 1.., required = true)]
    metrics: Vec<PathBuf>,
    /// Metric column: r_pen | r_dual | r_ncp | r_nat | i_stop | t_solve |
    /// t_iter.
    #[arg(long)]
    metric: String,
    /// Failure-ratio sentinel.
    #[arg(long, default_value_t = 1e6)]
    rm: f64,
    /// Grid resolution.
    #[arg(long, default_value_t = 257)]
    grid: usize,
    /// Output CSV (tau column + one rho column per solver).
    #[arg(long)]
    out: PathBuf,
}

fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let scenario = args.scenario.build()?;
    let mut config = RunConfig::new(args.solver.id()?);
    config.n_max = args.solver.nmax;
    config.eps_abs = args.solver.eps;
    config.warmstart = !args.cold_start;
    if args.stabilize {
        config.stabilization = Some(StabilizationParams {
            alpha_joint: args.erp_joint,
            beta_limit: args.erp_limit,
            gamma_contact: args.erp_contact,
            penetration_margin: args.scenario.margin.unwrap_or(0.0),
        });
    }
    if args.soften {
        config.softening = Some(SofteningParams::default());
    }
    config.halt_on_divergence = false; // keep partial outputs
    let artifacts = run_simulation(&scenario, &config)?;
    write_run_outputs(&scenario, &config, &artifacts, &args.out)?;
    eprintln!(
        "simulated {} steps of '{}' with {} -> {}",
        artifacts.steps.len(),
        scenario.id,
        config.solver.name(),
        args.out.display()
    );
    Ok(())
}

fn solve_dataset(args: &SolveArgs) -> Result<(), CliError> {
    let samples = bench::read_samples(&args.dataset)?;
    let id = args.solver.id()?;
    let mut config = SolverConfig::for_id(id);
    if let Some(n) = args.solver.nmax {
        config = config.with_n_max(n);
    }
    if let Some(eps) = args.solver.eps {
        config = config.with_eps_abs(eps);
    }
    let stem = args
        .dataset
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string();
    let mut records = Vec::with_capacity(samples.len());
    for (i, sample) in samples.iter().enumerate() {
        let problem = sample.to_dual_problem();
        let report = solve(&problem, &config, None);
        let (r_dual, r_ncp, r_nat) = metric_set(&report.lambda, &report.v_plus, &problem);
        records.push(MetricsRecord {
            problem: format!("{stem}:{i:05}"),
            solver: id.name().to_string(),
            solved: report.status == SolveStatus::Converged,
            r_pen: f64::NAN, // no configuration data offline
            r_dual,
            r_ncp,
            r_nat,
            i_stop: report.iterations,
            t_solve: report.solve_time,
            t_iter: report.mean_iter_time,
        });
    }
    metrics_io::write_metrics(&args.out, &records)?;
    eprintln!("solved {} samples with {} -> {}", samples.len(), id.name(), args.out.display());
    Ok(())
}

fn capture(args: &CaptureArgs) -> Result<(), CliError> {
    let scenario = args.scenario.build()?;
    let solver =
        SolverId::from_str(&args.solver).map_err(|_| CliError::UnknownSolver(args.solver.clone()))?;
    let mut config = RunConfig::new(solver);
    config.capture = Some(BucketSpec::parse(&args.buckets)?);
    config.halt_on_divergence = false;
    let artifacts = run_simulation(&scenario, &config)?;
    bench::write_samples(&args.out, &artifacts.samples)?;
    eprintln!(
        "captured {} samples from '{}' -> {}",
        artifacts.samples.len(),
        scenario.id,
        args.out.display()
    );
    Ok(())
}

fn profile(args: &ProfileArgs) -> Result<(), CliError> {
    let metric =
        MetricField::from_str(&args.metric).map_err(|_| CliError::UnknownMetric(args.metric.clone()))?;
    let mut records = Vec::new();
    for path in &args.metrics {
        records.extend(metrics_io::read_metrics(path)?);
    }
    let curves = bench::performance_profiles(&records, metric, args.rm, args.grid)?;
    metrics_io::write_profiles(&args.out, &curves)?;
    eprintln!("{} profile curves ({}) -> {}", curves.len(), metric.name(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Solve(args) => solve_dataset(args),
        Command::Capture(args) => capture(args),
        Command::Profile(args) => profile(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", err.to_json());
            ExitCode::FAILURE
        }
    }
}
