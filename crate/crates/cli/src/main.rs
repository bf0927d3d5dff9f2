use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ehnet::analysis::{
    grid_min_gap, minimize_gap, sweep, AlgorithmKind, SweepParam, SweepSettings, SweepValue,
};
use ehnet::config::AlgorithmName;
use ehnet::export::{line_chart_svg, write_summary, write_sweep_csv, write_trace, Series};
use ehnet::model::param_window;
use ehnet::sim::{run_ensemble, EnsembleOptions};
use ehnet::{Algorithm, Config, Error};
use log::info;

const THREADS_ENV: &str = "EHNETCTL_THREADS";

#[derive(Parser)]
#[command(
    name = "ehnetctl",
    version,
    about = "Simulate energy-harvesting multi-hop wireless networks"
)]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check battery sizing and declared constants, print the (V, Gamma) window.
    Validate(ConfigArgs),
    /// Run an ensemble and write per-run traces plus a summary.
    Simulate(SimulateArgs),
    /// Run one ensemble per parameter value and write a combined table.
    Sweep(SweepArgs),
    /// Choose (V, Gamma) minimizing the optimality-gap bound.
    TuneGap(TuneGapArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Scenario file (TOML).
    config: PathBuf,

    /// Override a config value, e.g. `--set system.eta=0.97`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long = "v", visible_alias = "V")]
    v: Option<f64>,

    /// Energy-queue offset; defaults to its smallest admissible value.
    #[arg(long)]
    gamma: Option<f64>,

    #[arg(long)]
    horizon: Option<u64>,

    #[arg(long)]
    runs: Option<usize>,

    /// Base seed; run `i` uses `seed + i`.
    #[arg(long)]
    seed: Option<u64>,

    #[arg(long, default_value = "out")]
    out_dir: PathBuf,

    /// Also write SVG charts.
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    config: ConfigArgs,

    #[arg(long, value_enum)]
    algorithm: Option<Alg>,

    #[command(flatten)]
    run: RunArgs,

    /// Skip the per-run trace files.
    #[arg(long)]
    no_traces: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,

    #[arg(long, value_enum)]
    param: Param,

    /// Comma-separated values; `min` stands for the smallest admissible Gamma.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,

    /// Algorithms to run at each point.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "proposed")]
    algorithms: Vec<Alg>,

    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct TuneGapArgs {
    #[command(flatten)]
    config: ConfigArgs,

    /// Largest V considered; defaults to V_max.
    #[arg(long = "v-cap", visible_alias = "V-cap")]
    v_cap: Option<f64>,

    /// Points per axis of the grid cross-check.
    #[arg(long, default_value_t = 400)]
    grid: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Alg {
    Proposed,
    Esa,
    Greedy,
}

impl From<Alg> for AlgorithmKind {
    fn from(a: Alg) -> Self {
        match a {
            Alg::Proposed => AlgorithmKind::Proposed,
            Alg::Esa => AlgorithmKind::Esa,
            Alg::Greedy => AlgorithmKind::Greedy,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Param {
    Gamma,
    #[value(name = "v", alias = "V")]
    V,
    #[value(name = "e_max", alias = "e-max")]
    EMax,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Validate(a) => validate(&a),
        Command::Simulate(a) => simulate(&a),
        Command::Sweep(a) => run_sweep(&a),
        Command::TuneGap(a) => tune_gap(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 for bad input, 3 for a violated invariant, 4 for a solver failure,
/// 1 otherwise.
fn exit_code(e: &anyhow::Error) -> u8 {
    let Some(err) = e.chain().find_map(|c| c.downcast_ref::<Error>()) else {
        return 1;
    };
    match err.root() {
        Error::Invariant { .. } => 3,
        Error::Solver { .. } => 4,
        Error::NonFinite(_)
        | Error::Network(_)
        | Error::Param(_)
        | Error::Window { .. }
        | Error::NonConcaveUtility { .. }
        | Error::TooLarge(_)
        | Error::Config(_) => 2,
        _ => 1,
    }
}

fn load(args: &ConfigArgs) -> anyhow::Result<Config> {
    Ok(Config::load(&args.config, &args.overrides)?)
}

/// Prints failed checks and refuses to go on.
fn require_valid(cfg: &Config) -> anyhow::Result<()> {
    let report = cfg.scenario.validate()?;
    for w in &report.warnings {
        info!("{w}");
    }
    if !report.passed() {
        eprint!("{report}");
        return Err(Error::Config("scenario fails validation".into()).into());
    }
    Ok(())
}

fn threads() -> anyhow::Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!(
                "{THREADS_ENV} must be a positive integer, got `{s}`"
            ))
            .into()),
        },
        Err(_) => Ok(None),
    }
}

fn validate(args: &ConfigArgs) -> anyhow::Result<ExitCode> {
    let cfg = load(args)?;
    let report = cfg.scenario.validate()?;
    print!("{report}");
    let window = param_window(&cfg.scenario.sys)?;
    println!("V_max = {}", window.v_max);
    let v = cfg.simulation.v;
    if v > 0.0 && v <= window.v_max {
        println!(
            "at V = {v}: Gamma_min = {}, Gamma_max = {}",
            window.gamma_min(v),
            window.gamma_max(v)
        );
    } else {
        println!("configured V = {v} is outside (0, V_max]");
    }
    Ok(if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn settings(cfg: &Config, run: &RunArgs, record: bool) -> anyhow::Result<SweepSettings> {
    let sim = &cfg.simulation;
    Ok(SweepSettings {
        v: run.v.unwrap_or(sim.v),
        gamma: run.gamma.or(sim.gamma),
        horizon: run.horizon.unwrap_or(sim.horizon),
        runs: run.runs.unwrap_or(sim.runs),
        base_seed: run.seed.unwrap_or(sim.seed),
        ensemble: EnsembleOptions {
            threads: threads()?,
            record,
        },
    })
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn simulate(args: &SimulateArgs) -> anyhow::Result<ExitCode> {
    let cfg = load(&args.config)?;
    require_valid(&cfg)?;
    let s = settings(&cfg, &args.run, !args.no_traces || args.run.svg)?;
    let kind = match args.algorithm {
        Some(a) => a.into(),
        None => match cfg.simulation.algorithm {
            AlgorithmName::Proposed => AlgorithmKind::Proposed,
            AlgorithmName::Esa => AlgorithmKind::Esa,
            AlgorithmName::Greedy => AlgorithmKind::Greedy,
        },
    };
    let algorithm = kind.with(s.v, s.gamma);
    if let Algorithm::Proposed { v, gamma } = algorithm {
        let w = param_window(&cfg.scenario.sys)?;
        info!(
            "V = {v}, Gamma = {}",
            gamma.map_or(format!("Gamma_min = {}", w.gamma_min(v)), |g| g.to_string())
        );
    }
    let (summary, traces) = run_ensemble(
        &cfg.scenario,
        &algorithm,
        s.horizon,
        s.runs,
        s.base_seed,
        s.ensemble,
    )?;

    fs::create_dir_all(&args.run.out_dir)?;
    if !args.no_traces {
        for (i, t) in traces.iter().enumerate() {
            let path = args.run.out_dir.join(format!("trace_run{i:02}.csv"));
            write_trace(&cfg.scenario, t, create(&path)?)?;
        }
    }
    write_summary(&summary, create(&args.run.out_dir.join("summary.json"))?)?;
    if args.run.svg {
        let t = &traces[0];
        let backlog = t
            .records
            .iter()
            .map(|r| (r.state.slot as f64, r.state.total_backlog()))
            .collect();
        let battery = t
            .records
            .iter()
            .map(|r| {
                (
                    r.state.slot as f64,
                    r.state.energy.iter().sum::<f64>() / r.state.energy.len() as f64,
                )
            })
            .collect();
        let series = [
            Series {
                name: "total backlog".into(),
                points: backlog,
            },
            Series {
                name: "mean battery".into(),
                points: battery,
            },
        ];
        let svg = line_chart_svg(
            &format!("{} run 0", algorithm.name()),
            "slot",
            "level",
            &series,
        );
        fs::write(args.run.out_dir.join("run00.svg"), svg)?;
    }
    println!(
        "{}: utility {:.4} ± {:.4}, energy utilization {:.4}, delivered {:.1} over {} runs of {} slots",
        algorithm.name(),
        summary.utility.mean,
        summary.utility.std,
        summary.energy_utilization.mean,
        summary.delivered.mean,
        summary.runs,
        summary.horizon
    );
    println!("wrote {}", args.run.out_dir.display());
    Ok(ExitCode::SUCCESS)
}

fn parse_values(param: Param, raw: &[String]) -> anyhow::Result<Vec<SweepValue>> {
    raw.iter()
        .map(|s| {
            let s = s.trim();
            if s.eq_ignore_ascii_case("min") {
                if param != Param::Gamma {
                    bail!(Error::Config(
                        "`min` is only accepted when sweeping gamma".into()
                    ));
                }
                Ok(SweepValue::GammaMin)
            } else {
                s.parse::<f64>()
                    .map(SweepValue::Value)
                    .map_err(|_| Error::Config(format!("sweep value `{s}` is not a number")).into())
            }
        })
        .collect()
}

fn run_sweep(args: &SweepArgs) -> anyhow::Result<ExitCode> {
    let cfg = load(&args.config)?;
    let param = match args.param {
        Param::Gamma => SweepParam::Gamma,
        Param::V => SweepParam::V,
        Param::EMax => SweepParam::EMax,
    };
    if param != SweepParam::EMax {
        require_valid(&cfg)?;
    }
    let values = parse_values(args.param, &args.values)?;
    let algorithms: Vec<AlgorithmKind> = args.algorithms.iter().map(|&a| a.into()).collect();
    let s = settings(&cfg, &args.run, false)?;
    let points = sweep(&cfg.scenario, param, &values, &algorithms, &s)?;

    fs::create_dir_all(&args.run.out_dir)?;
    for p in &points {
        match (&p.summary, &p.error) {
            (Some(summary), _) => {
                let name = format!(
                    "summary_{}_{}_{}.json",
                    param.name(),
                    p.param_value,
                    p.algorithm.name()
                );
                write_summary(summary, create(&args.run.out_dir.join(name))?)?;
                println!(
                    "{} = {:<10} {:<9} utility {:.4} ± {:.4}  energy utilization {:.4}",
                    param.name(),
                    p.param_value,
                    p.algorithm.name(),
                    summary.utility.mean,
                    summary.utility.std,
                    summary.energy_utilization.mean
                );
            }
            (None, err) => {
                let why = err.as_deref().unwrap_or("skipped");
                println!(
                    "{} = {:<10} {:<9} skipped: {why}",
                    param.name(),
                    p.param_value,
                    p.algorithm.name()
                );
            }
        }
    }
    let table = args.run.out_dir.join("sweep.csv");
    write_sweep_csv(&points, create(&table)?)?;
    if args.run.svg {
        let series: Vec<Series> = algorithms
            .iter()
            .map(|&a| Series {
                name: a.name().into(),
                points: points
                    .iter()
                    .filter(|p| p.algorithm == a)
                    .filter_map(|p| p.summary.as_ref().map(|s| (p.param_value, s.utility.mean)))
                    .collect(),
            })
            .collect();
        let svg = line_chart_svg(
            &format!("utility vs {}", param.name()),
            param.name(),
            "utility",
            &series,
        );
        fs::write(args.run.out_dir.join("sweep.svg"), svg)?;
    }
    println!("wrote {}", table.display());
    Ok(ExitCode::SUCCESS)
}

fn tune_gap(args: &TuneGapArgs) -> anyhow::Result<ExitCode> {
    let cfg = load(&args.config)?;
    require_valid(&cfg)?;
    let sc = &cfg.scenario;
    let w = param_window(&sc.sys)?;
    let cap = args.v_cap.unwrap_or(w.v_max);
    let (d, n) = (sc.net.d_max(), sc.net.num_nodes());
    let opt = minimize_gap(&sc.sys, d, n, cap)?;
    let grid = grid_min_gap(&sc.sys, d, n, cap, args.grid)?;
    println!("V* = {}", opt.v);
    println!("Gamma* = {}", opt.gamma);
    println!("G_min = {}", opt.gap);
    println!(
        "grid {0}x{0}: {1} at V = {2}, Gamma = {3}; relative delta {4:.3e}",
        args.grid,
        grid.gap,
        grid.v,
        grid.gamma,
        (grid.gap - opt.gap) / opt.gap
    );
    Ok(ExitCode::SUCCESS)
}
