//! `hetraffic` command-line tool.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hetraffic::measures::Measure;
use hetraffic::traffic::{Bias, Initial, Method};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] hetraffic::Error),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(hetraffic::Error::InvalidParameter(_)) => 2,
            CliError::Core(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hetraffic", version, about = "Spatial traffic generation and HetNet evaluation")]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo drops (per grid node or target).
    #[arg(long, global = true)]
    drops: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitialChoice {
    Ppp,
    Lattice,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MeasureChoice {
    G,
    V,
    E,
    All,
}

impl MeasureChoice {
    pub fn measures(self) -> Vec<Measure> {
        match self {
            MeasureChoice::G => vec![Measure::NearestNeighbor],
            MeasureChoice::V => vec![Measure::VoronoiArea],
            MeasureChoice::E => vec![Measure::DelaunayEdge],
            MeasureChoice::All => Measure::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepMode {
    Fig7,
    #[value(name = "fig9_10")]
    Fig9_10,
    Fig11,
    #[value(name = "fig12_13")]
    Fig12_13,
    #[value(name = "fig14_15")]
    Fig14_15,
}

/// How the generator parameters are chosen: directly, from a TGIP file, or
/// by inverting calibration tables at a target `(C, rho)`.
#[derive(Debug, Clone, Args)]
pub struct TrafficArgs {
    /// TGIP JSON {alpha, mu_beta, method, bias, initial, mean_ues, seed}.
    #[arg(long)]
    pub tgip: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Mean UE-to-attractor pull factor.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, value_parser = parse_method)]
    pub method: Option<Method>,
    #[arg(long, value_parser = parse_bias)]
    pub bias: Option<Bias>,
    #[arg(long, value_parser = parse_initial)]
    pub initial: Option<Initial>,
    #[arg(long)]
    pub mean_ues: Option<f64>,
    #[arg(long)]
    pub target_c: Option<f64>,
    #[arg(long)]
    pub target_rho: Option<f64>,
    /// Calibration table files (PPP and/or lattice start).
    #[arg(long, num_args = 1..)]
    pub tables: Vec<PathBuf>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: hetraffic::Error| e.to_string())
}

fn parse_bias(s: &str) -> Result<Bias, String> {
    s.parse().map_err(|e: hetraffic::Error| e.to_string())
}

fn parse_initial(s: &str) -> Result<Initial, String> {
    s.parse().map_err(|e: hetraffic::Error| e.to_string())
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build calibration tables over the (alpha, mu_beta) grid.
    Calibrate {
        /// Grid nodes per axis (at least 5).
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long, value_enum, default_value = "both")]
        initial: InitialChoice,
        #[arg(long, value_parser = parse_method)]
        method: Option<Method>,
    },
    /// Generate one UE pattern and report its statistics.
    Generate {
        /// Fixed layout JSON (stations and attractors); drawn at random if
        /// omitted.
        #[arg(long)]
        layout: Option<PathBuf>,
        #[command(flatten)]
        traffic: TrafficArgs,
    },
    /// Measure a pattern file.
    Measure {
        pattern: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        measure: MeasureChoice,
        /// Window JSON; defaults to the pattern's sidecar.
        #[arg(long)]
        window: Option<PathBuf>,
        /// Keep cells that touch the window.
        #[arg(long)]
        include_boundary: bool,
        /// Layout JSON; adds the correlation coefficient with its stations.
        #[arg(long)]
        layout: Option<PathBuf>,
    },
    /// Run network drops for one traffic setting.
    Simulate {
        #[command(flatten)]
        traffic: TrafficArgs,
        /// Coverage SINR threshold in dB.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Produce plot data for one figure mode.
    Sweep {
        #[arg(long, value_enum)]
        mode: SweepMode,
        /// Calibration table files; built on the fly if omitted.
        #[arg(long, num_args = 1..)]
        tables: Vec<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = config::ExperimentConfig::load(cli.config.as_deref())?;
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if let Some(d) = cli.drops {
        cfg.drops = d;
    }
    if cli.out.is_some() {
        cfg.out = cli.out;
    }
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::Calibrate { resolution, initial, method } => commands::calibrate(cfg, resolution, initial, method),
        Command::Generate { layout, traffic } => commands::generate(cfg, layout.as_deref(), &traffic),
        Command::Measure { pattern, measure, window, include_boundary, layout } => {
            commands::measure(cfg, &pattern, measure, window.as_deref(), include_boundary, layout.as_deref())
        }
        Command::Simulate { traffic, threshold } => commands::simulate(cfg, &traffic, threshold),
        Command::Sweep { mode, tables, threshold } => commands::sweep(cfg, mode, &tables, threshold),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
