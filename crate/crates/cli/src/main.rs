use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use iabsim::engine::{EngineError, SweepAxis};
use iabsim::terrain3d::TerrainError;
use iabsim_cli::output::{emit_results, Format, OutputError};
use iabsim_cli::scenario::{parse_override, parse_scenario_file, ScenarioError};
use iabsim_cli::{execute, Command};
use serde_json::Value;

const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_ESTIMATION: u8 = 4;

/// Monte Carlo coverage of two-hop IAB mmWave networks.
#[derive(Parser)]
#[command(name = "iabsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Estimate coverage for one scenario.
    Run(Common),
    /// Estimate coverage along one parameter axis.
    Sweep {
        /// Axis name (lambda_s, lambda_b, l_b, rain_rate, l_t, lambda_t, mu,
        /// fiber_fraction, sbs_height, r_th) or its scenario key.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values, in the key's units.
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        values: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate the scenario's mu grid and report the best split.
    OptimizeMu(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file (flat JSON with dotted keys).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Master seed; overrides IABSIM_SEED and the scenario file.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
    /// Override one scenario key, e.g. `--set density.sbs=65`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_override)]
    overrides: Vec<(String, Value)>,
    /// Use fresh seeds for every sweep value instead of common random numbers.
    #[arg(long)]
    independent: bool,
}

fn resolve_seed(flag: Option<u64>) -> Result<Option<u64>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("IABSIM_SEED") {
        Ok(v) => Ok(Some(v.trim().parse().map_err(|_| ScenarioError::Type {
            key: "IABSIM_SEED".into(),
            line: 0,
            expected: "a non-negative integer",
        })?)),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<()> {
    let (command, common) = match cli.command {
        Cmd::Run(c) => (Command::Run, c),
        Cmd::OptimizeMu(c) => (Command::OptimizeMu, c),
        Cmd::Sweep { axis, values, common } => {
            let axis: SweepAxis = axis.parse()?;
            (Command::Sweep { axis, values }, common)
        }
    };
    if let Some(n) = common.workers {
        if n == 0 {
            bail!(ScenarioError::Range {
                key: "--workers".into(),
                line: 0,
                reason: "must be at least 1".into(),
            });
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot start worker pool")?;
    }
    let mut config = parse_scenario_file(&common.scenario, &common.overrides)?;
    if let Some(seed) = resolve_seed(common.seed)? {
        config.seed = seed;
    }
    let (rows, provenance) = execute(&command, &config, !common.independent)?;
    for row in &rows {
        let r = &row.result;
        let label = row.axis_value.map(|v| format!("{v}: ")).unwrap_or_default();
        println!(
            "{label}coverage {:.4} ± {:.4} (mu {:.2}, {} discarded)",
            r.coverage, r.ci_half_width, r.mu, r.discarded
        );
    }
    if let Some(mu) = provenance.best_mu {
        println!("best mu {mu}");
    }
    for path in emit_results(&rows, &provenance, &common.out, common.format)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<EngineError>() {
        return match e {
            EngineError::Config { .. } | EngineError::UnknownAxis(_) => EXIT_CONFIG,
            EngineError::Terrain(TerrainError::Io { .. }) => EXIT_IO,
            EngineError::Terrain(_) => EXIT_CONFIG,
            EngineError::AllDiscarded | EngineError::Network(_) => EXIT_ESTIMATION,
        };
    }
    match err.downcast_ref::<ScenarioError>() {
        Some(ScenarioError::Io { .. }) => EXIT_IO,
        Some(_) => EXIT_CONFIG,
        None if err.downcast_ref::<OutputError>().is_some() => EXIT_IO,
        None => EXIT_ESTIMATION,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
