//! `dyad`: stability queries, sweeps, frequency plots, identification and
//! the simulated tracking experiment for delay-coupled robot pairs.

mod commands;
mod config;
mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "dyad", version, about, long_about = None)]
struct Cli {
    /// JSON configuration; the bundled two-robot default when omitted
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory (overrides DYAD_OUTPUT_DIR and the config)
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Analytic stability verdict per axis (exit 0 stable, 2 unstable)
    Classify(ClassifyArgs),
    /// Stability map over a stiffness by delay grid
    Sweep(SweepArgs),
    /// Nyquist contour of the open loop, with encirclement count
    Nyquist(FreqArgs),
    /// Bode magnitude and phase of the open loop
    Bode(FreqArgs),
    /// Estimate mass and damping from a force/motion record
    Identify(IdentifyArgs),
    /// Run the simulated tracking experiment
    Experiment(ExperimentArgs),
    /// Print the effective, bundled or schema configuration
    Config {
        #[arg(value_enum, default_value_t = ConfigView::Effective)]
        view: ConfigView,
    },
}

#[derive(Args, Debug, Clone, Copy)]
struct CouplingArgs {
    /// Coupling stiffness, N/m
    #[arg(long, allow_negative_numbers = true)]
    k: Option<f64>,
    /// Round-trip delay, ms
    #[arg(long = "delay-ms", allow_negative_numbers = true)]
    delay_ms: Option<f64>,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    #[command(flatten)]
    coupling: CouplingArgs,
    /// Print JSON instead of a table
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Linear stiffness range LO:HI, N/m
    #[arg(long, value_name = "LO:HI", value_parser = parse_range, conflicts_with = "k_values")]
    k_range: Option<(f64, f64)>,
    /// Linear delay range LO:HI, ms
    #[arg(long, value_name = "LO:HI", value_parser = parse_range, conflicts_with = "delay_values")]
    delay_range: Option<(f64, f64)>,
    /// Points per range
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(2..))]
    cells: u32,
    /// Explicit stiffness values, N/m
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    k_values: Vec<f64>,
    /// Explicit delay values, ms
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    delay_values: Vec<f64>,
    /// Also classify simulated step responses
    #[arg(long)]
    simulate: bool,
    /// Write an SVG heat map
    #[arg(long)]
    svg: bool,
    /// Relative band around the stability boundary excluded from the
    /// mismatch count
    #[arg(long, default_value_t = 0.05)]
    band: f64,
}

#[derive(Args, Debug)]
struct FreqArgs {
    /// Axis label from the config
    #[arg(long, default_value = "x")]
    axis: String,
    #[command(flatten)]
    coupling: CouplingArgs,
    /// Lowest frequency, rad/s
    #[arg(long, default_value_t = 1e-2)]
    omega_min: f64,
    /// Highest frequency, rad/s
    #[arg(long, default_value_t = 1e3)]
    omega_max: f64,
    /// Log-spaced frequency points
    #[arg(long, default_value_t = 4096)]
    points: usize,
    /// Nine panels at {0.5, 1, 2} K by {0.5, 1, 2} D, where K is the
    /// critical stiffness and D the tolerable delay at 2K
    #[arg(long, conflicts_with_all = ["k", "delay_ms"])]
    batch: bool,
    /// Print JSON instead of text
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct IdentifyArgs {
    /// CSV with columns t,x,v,a,f
    #[arg(required_unless_present = "synthetic", conflicts_with = "synthetic")]
    input: Option<PathBuf>,
    /// Simulated record: mass (kg), damping (N s/m), force noise std (N), seed
    #[arg(long, num_args = 4, value_names = ["MASS", "DAMPING", "NOISE", "SEED"], allow_negative_numbers = true)]
    synthetic: Option<Vec<String>>,
    #[arg(long, value_enum, default_value_t = Estimator::Wls)]
    estimator: Estimator,
    /// Synthetic record length, s
    #[arg(long, default_value_t = 20.0)]
    duration_s: f64,
    /// Synthetic sample spacing, ms
    #[arg(long, default_value_t = 2.0)]
    dt_ms: f64,
    /// Also write the synthetic record as CSV
    #[arg(long)]
    save_record: bool,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[arg(long, value_enum, default_value_t = GridChoice::Standard)]
    grid: GridChoice,
    /// Trials per condition (default from the config)
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    trials: Option<u32>,
    /// Base seed (default from the config)
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Estimator {
    Ols,
    Wls,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum GridChoice {
    /// 18/36/71/142 N/m by 0/84/167/334 ms
    #[value(name = "paper")]
    Standard,
    /// {0.5, 1, 2, 4} K by {0, 0.5, 1, 2} D for the configured robots
    Reference,
    /// `experiment.grid` from the config
    Custom,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum ConfigView {
    Effective,
    Default,
    Schema,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("expected LO:HI, got `{s}`"))?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    let (lo, hi) = (parse(lo)?, parse(hi)?);
    if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi > lo) {
        return Err(format!("need 0 <= LO < HI, got {lo}:{hi}"));
    }
    Ok((lo, hi))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match commands::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
