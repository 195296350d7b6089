//! Batch front end for the `iabsim` simulator: scenario files in, result
//! tables out.

pub mod output;
pub mod scenario;

use iabsim::engine::{run_monte_carlo, sweep, EngineError, ScenarioConfig, SweepAxis};

use crate::output::{Provenance, Row};

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Run,
    Sweep {
        axis: SweepAxis,
        values: Vec<f64>,
    },
    /// Evaluates the scenario's `mu_grid` and reports the best point.
    OptimizeMu,
}

/// Runs one command and returns its table with provenance.
pub fn execute(
    command: &Command,
    config: &ScenarioConfig,
    common_random_numbers: bool,
) -> Result<(Vec<Row>, Provenance), EngineError> {
    let mut provenance = Provenance {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: String::new(),
        axis: None,
        common_random_numbers,
        best_mu: None,
        scenario: scenario::scenario_map(config),
    };
    let rows = match command {
        Command::Run => {
            provenance.command = "run".into();
            vec![Row {
                axis_value: None,
                result: run_monte_carlo(config)?,
            }]
        }
        Command::Sweep { axis, values } => {
            provenance.command = "sweep".into();
            provenance.axis = Some(axis.name().to_string());
            sweep(config, *axis, values, common_random_numbers)?
                .into_iter()
                .map(|(v, result)| Row {
                    axis_value: Some(v),
                    result,
                })
                .collect()
        }
        Command::OptimizeMu => {
            provenance.command = "optimize-mu".into();
            provenance.axis = Some(SweepAxis::Mu.name().to_string());
            let table = sweep(config, SweepAxis::Mu, &config.mu_grid, true)?;
            // first strict maximum: ties go to the smaller mu, as in the engine
            let mut best: Option<(f64, f64)> = None;
            for (mu, r) in &table {
                if best.is_none_or(|(_, c)| r.coverage > c) {
                    best = Some((*mu, r.coverage));
                }
            }
            provenance.best_mu = best.map(|(mu, _)| mu);
            table
                .into_iter()
                .map(|(v, result)| Row {
                    axis_value: Some(v),
                    result,
                })
                .collect()
        }
    };
    Ok((rows, provenance))
}
