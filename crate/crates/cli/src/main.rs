use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use softclf::controllers::ControllerKind;
use softclf::experiments::{
    episode_file_name, format_table, grid, run_benchmark, write_gnuplot_script, write_summary, BenchmarkCell,
    CsvOptions, EpisodeSpec, Experiment, OutputOptions, SummaryFile,
};
use softclf::robots::{builtin, builtin_registry, resolve_robot, GainSet, Robot};
use softclf::sim::SimConfig;
use softclf::Error;

/// Environment variable holding the worker thread count.
const THREADS_ENV: &str = "SOFTCLF_THREADS";

const EXIT_FAILED_CONVERGENCE: u8 = 2;
const EXIT_INTERNAL: u8 = 1;
const EXIT_USAGE: u8 = 64;
const EXIT_VALIDATION: u8 = 65;

#[derive(Parser)]
#[command(name = "softclf", version, about = "Task-space CLF-QP benchmarks for underactuated tendon-driven robots")]
#[command(after_help = "Environment:\n  SOFTCLF_THREADS  number of worker threads (default: all cores)")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run benchmark episodes, writing one CSV per episode plus summary.json and plot.gp.
    Run(RunArgs),
    /// List robots, controllers, or a robot's default gains.
    List {
        #[arg(value_enum)]
        what: ListWhat,
        /// Robot whose gains to list (all robots when omitted).
        #[arg(long)]
        robot: Option<String>,
    },
    /// Print a built-in robot spec file, or write it with --out.
    ExportSpec {
        /// Built-in robot name.
        robot: String,
        /// Destination file.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ListWhat {
    Robots,
    Controllers,
    Gains,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum ExperimentArg {
    Setpoint,
    Tracking,
    /// One episode selected by --theta or --omega.
    Single,
    /// Set point and tracking grids.
    All,
}

#[derive(Args)]
struct RunArgs {
    /// Built-in robot name, path to a spec file, or `all`.
    #[arg(long)]
    robot: String,
    /// Controller name or `all`.
    #[arg(long, default_value = "all")]
    controller: String,
    #[arg(long, value_enum, default_value = "all")]
    experiment: ExperimentArg,
    /// Set-point angle in units of pi (with --experiment single).
    #[arg(long, conflicts_with = "omega")]
    theta: Option<f64>,
    /// Tracking frequency in units of pi rad/s (with --experiment single).
    #[arg(long)]
    omega: Option<f64>,
    /// Override a gain (kp, eps, w1..w4, rho, d_null) or a simulation
    /// setting (sim.dt, sim.control_decimation, sim.integrator); repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Write zeros in the solve_time_ms column so reruns are byte-identical.
    #[arg(long)]
    no_timing: bool,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::NonPositiveWeight { .. }
        | Error::RankDeficientB { .. }
        | Error::Parse { .. }
        | Error::Validation(_)
        | Error::Unknown { .. }
        | Error::Dimension(_) => EXIT_VALIDATION,
        _ => EXIT_INTERNAL,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(code) = configure_threads() {
        return ExitCode::from(code);
    }
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::List { what, robot } => list(what, robot.as_deref()).map(|_| 0),
        Command::ExportSpec { robot, out } => export_spec(&robot, out.as_deref()).map(|_| 0),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn configure_threads() -> Result<(), u8> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = match value.trim().parse() {
        Ok(t) if t > 0 => t,
        _ => {
            eprintln!("error: {THREADS_ENV} must be a positive integer, got '{value}'");
            return Err(EXIT_USAGE);
        }
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| {
            eprintln!("error: could not start thread pool: {e}");
            EXIT_INTERNAL
        })
}

fn apply_overrides(overrides: &[String], gains: &mut GainSet, sim: &mut SimConfig) -> softclf::Result<()> {
    for item in overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| Error::Validation(format!("override '{item}' is not KEY=VALUE")))?;
        let key = key.trim();
        let value = value.trim();
        let number = || {
            value
                .parse::<f64>()
                .map_err(|_| Error::Validation(format!("override {key}: '{value}' is not a number")))
        };
        match key {
            "sim.dt" => sim.dt = number()?,
            "sim.control_decimation" => {
                sim.control_decimation = value
                    .parse()
                    .map_err(|_| Error::Validation(format!("override {key}: '{value}' is not a positive integer")))?
            }
            "sim.integrator" => sim.integrator = value.parse()?,
            _ => gains.set(key.strip_prefix("gains.").unwrap_or(key), number()?)?,
        }
    }
    sim.validate()
}

fn run(args: RunArgs) -> softclf::Result<u8> {
    let robots: Vec<Robot> = if args.robot == "all" {
        builtin_registry().keys().map(|name| builtin(name)).collect::<Result<_, _>>()?
    } else {
        vec![resolve_robot(&args.robot)?]
    };
    let controllers: Vec<ControllerKind> = if args.controller == "all" {
        ControllerKind::ALL.to_vec()
    } else {
        vec![args.controller.parse()?]
    };
    let experiments: Vec<EpisodeSpec> = match args.experiment {
        ExperimentArg::Setpoint => grid(Experiment::Setpoint),
        ExperimentArg::Tracking => grid(Experiment::Tracking),
        ExperimentArg::All => [grid(Experiment::Setpoint), grid(Experiment::Tracking)].concat(),
        ExperimentArg::Single => match (args.theta, args.omega) {
            (Some(t), None) => vec![EpisodeSpec::setpoint(t)],
            (None, Some(w)) if w > 0.0 => vec![EpisodeSpec::tracking(w)],
            (None, Some(w)) => return Err(Error::Validation(format!("omega = {w} must be > 0"))),
            _ => return Err(Error::Validation("--experiment single needs --theta or --omega".into())),
        },
    };

    let mut sim = SimConfig::default();
    let mut cells = Vec::new();
    for robot in &robots {
        for &kind in &controllers {
            let mut gains = robot.gains(kind).clone();
            apply_overrides(&args.overrides, &mut gains, &mut sim)?;
            gains.validate(kind)?;
            cells.push(BenchmarkCell {
                robot,
                controller: kind,
                gains,
            });
        }
    }

    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let output = OutputOptions {
        dir: &args.out,
        csv: CsvOptions { timing: !args.no_timing },
    };
    let summaries = run_benchmark(&cells, &experiments, &sim, Some(&output))?;

    let mut files = Vec::new();
    for c in &cells {
        for &spec in &experiments {
            files.push(episode_file_name(c.robot.name(), c.controller, spec));
        }
    }
    write_gnuplot_script(&args.out, &files)?;
    let summary_path = write_summary(&args.out, &SummaryFile::new(&sim, args.overrides.clone(), summaries.clone()))?;

    print!("{}", format_table(&summaries));
    println!("wrote {} CSV files and {}", files.len(), summary_path.display());
    let failed: Vec<String> = summaries
        .iter()
        .flat_map(|s| {
            s.episodes
                .iter()
                .filter(|e| e.failed())
                .map(move |e| format!("{} {} {}: {}", s.robot, s.controller, e.spec.param_label(), e.failure.as_deref().unwrap_or("")))
        })
        .collect();
    if failed.is_empty() {
        Ok(0)
    } else {
        for f in &failed {
            eprintln!("failed convergence: {f}");
        }
        Ok(EXIT_FAILED_CONVERGENCE)
    }
}

fn list(what: ListWhat, robot: Option<&str>) -> softclf::Result<()> {
    match what {
        ListWhat::Robots => {
            for name in builtin_registry().keys() {
                let r = builtin(name)?;
                println!(
                    "{name}\tn={} m={} L={} m\t{}",
                    r.model.n(),
                    r.model.m(),
                    r.model.total_length(),
                    r.spec.description
                );
            }
        }
        ListWhat::Controllers => {
            for k in ControllerKind::ALL {
                println!("{}\t{}", k.name(), k.label());
            }
        }
        ListWhat::Gains => {
            let robots: Vec<Robot> = match robot {
                Some(name) => vec![resolve_robot(name)?],
                None => builtin_registry().keys().map(|n| builtin(n)).collect::<Result<_, _>>()?,
            };
            for r in &robots {
                println!("{}", r.name());
                for (kind, g) in &r.gains {
                    let cells: Vec<String> = g.entries().iter().map(|(k, v)| format!("{k}={v}")).collect();
                    println!("  {:<16} {}", kind.name(), cells.join(" "));
                }
            }
        }
    }
    Ok(())
}

fn export_spec(robot: &str, out: Option<&Path>) -> softclf::Result<()> {
    let text = builtin_registry().get(robot).copied().ok_or_else(|| Error::Unknown {
        kind: "robot",
        name: robot.to_string(),
    })?;
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::io(path, e))?,
        None => print!("{text}"),
    }
    Ok(())
}
