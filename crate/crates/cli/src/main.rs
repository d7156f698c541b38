//! `sa-ldp`: config-driven runner for stochastic approximation and its large
//! deviation quantities.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure or
//! failed diagnostics, 64 usage error, 74 output I/O error.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sa_ldp::config::ExperimentConfig;

use crate::output::Sink;

#[derive(Parser, Debug)]
#[command(name = "sa-ldp", version, about = "Large deviations for stochastic approximation with Markov noise")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Output directory (default: the config's `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Omit timestamps from output headers.
    #[arg(long, global = true)]
    no_timestamp: bool,
    /// Config override `key=value` with a dotted key, e.g. `run.samples=500`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args, Debug)]
struct StartIndex {
    /// Start index `n` (overrides `run.n` and `run.n_sweep`).
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one interpolated trajectory segment.
    Simulate(StartIndex),
    /// Integrate the limit ODE from x0.
    Ode,
    /// Hamiltonian and its gradient on the x grid.
    Hamiltonian {
        /// Direction α, comma separated; a single value is broadcast.
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<String>,
    },
    /// Local rate L(x, β) on the x and β grids.
    RateSurface,
    /// Action of a path file, or of the ODE path.
    Action,
    /// Minimum-action piecewise-linear path.
    Minpath,
    /// Monte Carlo Laplace functional, swept over n.
    Laplace(StartIndex),
    /// Tube probability around a reference path.
    Tube(StartIndex),
    /// Audit the kernel and Hamiltonian assumptions.
    CheckAssumptions,
    /// Logistic-regression SGD: closed-form vs Perron Hamiltonian.
    DemoSgd,
    /// RBM: Gibbs-law and gradient oracles against the block-Gibbs chain.
    DemoRbm,
    /// Wang-Landau run against enumerated stratum masses.
    DemoWl,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Ode => "ode",
            Command::Hamiltonian { .. } => "hamiltonian",
            Command::RateSurface => "rate-surface",
            Command::Action => "action",
            Command::Minpath => "minpath",
            Command::Laplace(_) => "laplace",
            Command::Tube(_) => "tube",
            Command::CheckAssumptions => "check-assumptions",
            Command::DemoSgd => "demo-sgd",
            Command::DemoRbm => "demo-rbm",
            Command::DemoWl => "demo-wl",
        }
    }
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Config(String),
    Numerical(String),
    Io(String),
}

impl Failure {
    pub fn config(e: sa_ldp::Error) -> Self {
        Failure::Config(e.to_string())
    }

    /// Bad inputs discovered while running are configuration errors; the
    /// rest are numerical failures.
    pub fn from_core(e: sa_ldp::Error) -> Self {
        match e {
            sa_ldp::Error::InvalidInput(_) | sa_ldp::Error::Schedule(_) | sa_ldp::Error::NoFiniteKernel => {
                Failure::Config(e.to_string())
            }
            _ => Failure::Numerical(e.to_string()),
        }
    }

    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 64,
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Io(_) => 74,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
            Failure::Io(m) => write!(f, "output error: {m}"),
        }
    }
}

fn overrides(cli: &Cli) -> Vec<String> {
    let mut o = cli.common.overrides.clone();
    if let Some(seed) = cli.common.seed {
        o.push(format!("seed={seed}"));
    }
    match &cli.command {
        Command::Simulate(s) | Command::Laplace(s) | Command::Tube(s) => {
            if let Some(n) = s.n {
                o.push(format!("run.n={n}"));
                o.push(format!("run.n_sweep=[{n}]"));
            }
        }
        Command::Hamiltonian { alpha: Some(a) } => o.push(format!("run.alpha=[{a}]")),
        _ => {}
    }
    o
}

/// Broadcast a single-entry `run.alpha` to the model dimension.
fn broadcast_alpha(text: &str, overrides: &mut [String]) -> Result<(), Failure> {
    let Some(pos) = overrides.iter().position(|o| o.starts_with("run.alpha=")) else {
        return Ok(());
    };
    let value = overrides[pos]["run.alpha=".len()..].to_string();
    let probe = ExperimentConfig::parse_with_overrides(text, &[]).map_err(|e| Failure::Config(e.to_string()))?;
    let dim = probe.build_model().map_err(Failure::config)?.dim;
    let inner = value.trim_start_matches('[').trim_end_matches(']');
    if !inner.contains(',') && dim > 1 {
        overrides[pos] = format!("run.alpha=[{}]", vec![inner.trim(); dim].join(","));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let path = cli.common.config.clone().ok_or_else(|| Failure::Usage("--config is required".into()))?;
    let text = std::fs::read_to_string(&path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut o = overrides(&cli);
    broadcast_alpha(&text, &mut o)?;
    let cfg = ExperimentConfig::parse_with_overrides(&text, &o).map_err(|e| Failure::Config(e.to_string()))?;
    if cli.common.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.common.threads)
            .build_global()
            .map_err(|e| Failure::Usage(format!("thread pool: {e}")))?;
    }
    let threads = rayon::current_num_threads();
    let dir = cli.common.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.out));
    let sink = Sink::new(dir, cli.command.name(), cfg, cli.common.no_timestamp, threads);
    match &cli.command {
        Command::Simulate(_) => commands::simulate(&sink),
        Command::Ode => commands::ode_cmd(&sink),
        Command::Hamiltonian { .. } => commands::hamiltonian(&sink),
        Command::RateSurface => commands::rate_surface(&sink),
        Command::Action => commands::action_cmd(&sink),
        Command::Minpath => commands::minpath(&sink),
        Command::Laplace(_) => commands::laplace(&sink),
        Command::Tube(_) => commands::tube(&sink),
        Command::CheckAssumptions => commands::check_assumptions(&sink),
        Command::DemoSgd => commands::demo_sgd(&sink),
        Command::DemoRbm => commands::demo_rbm(&sink),
        Command::DemoWl => commands::demo_wl(&sink),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 64,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("sa-ldp: {f}");
            ExitCode::from(f.code())
        }
    }
}
