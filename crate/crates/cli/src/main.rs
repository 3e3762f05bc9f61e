//! Command-line front end: `passnet <command> --case <path> [--config
//! <path>] [--out <dir>]` plus per-command overrides.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use passnet::io::{parse_case, parse_config, RunConfig};
use passnet::pipeline::{self, Artifacts, PipelineError};

#[derive(Parser)]
#[command(
    name = "passnet",
    about = "Passivity-based stability certification for lossy AC power networks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Case file (TOML; see docs/case-format.md).
    #[arg(long)]
    case: PathBuf,
    /// Run configuration (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the sweep grid as lo:hi:points (rad/s).
    #[arg(long, value_parser = parse_grid)]
    grid: Option<(f64, f64, usize)>,
}

fn parse_grid(s: &str) -> Result<(f64, f64, usize), String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err("expected lo:hi:points".into());
    }
    let lo: f64 = parts[0].parse().map_err(|e| format!("lo: {e}"))?;
    let hi: f64 = parts[1].parse().map_err(|e| format!("hi: {e}"))?;
    let points: usize = parts[2].parse().map_err(|e| format!("points: {e}"))?;
    if !(lo > 0.0 && hi > lo && points >= 2) {
        return Err("need 0 < lo < hi and points >= 2".into());
    }
    Ok((lo, hi, points))
}

#[derive(Subcommand)]
enum Command {
    /// Solve the power flow and write the bus solution table.
    Powerflow {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Sweep every machine bus for input-strict passivity.
    Passivity {
        #[command(flatten)]
        common: CommonArgs,
        /// Restrict the sweep to one bus id.
        #[arg(long)]
        bus: Option<u32>,
    },
    /// Tune exciter lag constants until every machine bus passes the sweep;
    /// writes the updated case file.
    Tune {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Closed-loop eigenvalues and damping ratios of the linearized system.
    Eigen {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Nonlinear time-domain simulation of the configured scenario.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Override the integration step, seconds.
        #[arg(long)]
        dt: Option<f64>,
        /// Override the horizon, seconds.
        #[arg(long)]
        horizon: Option<f64>,
    },
}

fn load_config(common: &CommonArgs) -> Result<RunConfig, PipelineError> {
    let mut cfg = match &common.config {
        Some(path) => parse_config(path)?,
        None => RunConfig::default(),
    };
    if let Some((lo, hi, points)) = common.grid {
        cfg.grid.lo = lo;
        cfg.grid.hi = hi;
        cfg.grid.points = points;
    }
    Ok(cfg)
}

fn dispatch(command: &Command) -> Result<Artifacts, PipelineError> {
    match command {
        Command::Powerflow { common } => {
            let case = parse_case(&common.case)?;
            let cfg = load_config(common)?;
            pipeline::run_powerflow(&case, &cfg, &common.out)
        }
        Command::Passivity { common, bus } => {
            let case = parse_case(&common.case)?;
            let cfg = load_config(common)?;
            pipeline::run_passivity(&case, &cfg, &common.out, *bus)
        }
        Command::Tune { common } => {
            let case = parse_case(&common.case)?;
            let cfg = load_config(common)?;
            pipeline::run_tune(&case, &cfg, &common.out)
        }
        Command::Eigen { common } => {
            let case = parse_case(&common.case)?;
            let cfg = load_config(common)?;
            pipeline::run_eigen(&case, &cfg, &common.out)
        }
        Command::Simulate {
            common,
            dt,
            horizon,
        } => {
            let case = parse_case(&common.case)?;
            let mut cfg = load_config(common)?;
            if let Some(dt) = dt {
                cfg.scenario.dt = *dt;
            }
            if let Some(horizon) = horizon {
                cfg.scenario.horizon = *horizon;
            }
            pipeline::run_simulate(&case, &cfg, &common.out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(artifacts) => {
            println!("{}", artifacts.summary);
            for file in &artifacts.files {
                println!("wrote {}", file.display());
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
