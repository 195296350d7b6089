//! Result tables: a CSV with a fixed header plus a JSON provenance sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use iabsim::engine::CoverageResult;
use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

pub const CSV_HEADER: [&str; 7] = [
    "axis_value",
    "coverage",
    "ci_halfwidth",
    "mean_rate_bps",
    "mean_hop_m",
    "discarded",
    "n_realizations",
];

pub const CSV_FILE: &str = "results.csv";
pub const SIDECAR_FILE: &str = "results.meta.json";
pub const JSON_FILE: &str = "results.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("no results to write")]
    Empty,
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One table row; `axis_value` is empty for a single run.
#[derive(Debug, Clone)]
pub struct Row {
    pub axis_value: Option<f64>,
    pub result: CoverageResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub axis: Option<String>,
    pub common_random_numbers: bool,
    /// Grid optimum, for `optimize-mu`.
    pub best_mu: Option<f64>,
    pub scenario: Map<String, Value>,
}

#[derive(Serialize)]
struct JsonRow {
    axis_value: Option<f64>,
    coverage: f64,
    ci_halfwidth: f64,
    mean_rate_bps: f64,
    mean_hop_m: Option<f64>,
    discarded: usize,
    n_realizations: usize,
    mu: f64,
}

impl From<&Row> for JsonRow {
    fn from(row: &Row) -> Self {
        let r = &row.result;
        Self {
            axis_value: row.axis_value,
            coverage: r.coverage,
            ci_halfwidth: r.ci_half_width,
            mean_rate_bps: r.mean_rate_bps,
            mean_hop_m: r.mean_hop_m,
            discarded: r.discarded,
            n_realizations: r.realizations,
            mu: r.mu,
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Renders the CSV table. Floats use the shortest exact representation.
pub fn csv_text(rows: &[Row]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = "writing to memory";
    w.write_record(CSV_HEADER).expect(io);
    for row in rows {
        let r = &row.result;
        w.write_record([
            opt(row.axis_value),
            r.coverage.to_string(),
            r.ci_half_width.to_string(),
            r.mean_rate_bps.to_string(),
            opt(r.mean_hop_m),
            r.discarded.to_string(),
            r.realizations.to_string(),
        ])
        .expect(io);
    }
    String::from_utf8(w.into_inner().expect(io)).expect("ASCII output")
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf, OutputError> {
    fs::write(&path, text).map_err(|source| OutputError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

fn pretty(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("plain JSON values");
    s.push('\n');
    s
}

/// Writes the table into `dir` and returns the files written.
pub fn emit_results(
    rows: &[Row],
    provenance: &Provenance,
    dir: &Path,
    format: Format,
) -> Result<Vec<PathBuf>, OutputError> {
    if rows.is_empty() {
        return Err(OutputError::Empty);
    }
    fs::create_dir_all(dir).map_err(|source| OutputError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    match format {
        Format::Csv => Ok(vec![
            write(dir.join(CSV_FILE), &csv_text(rows))?,
            write(dir.join(SIDECAR_FILE), &pretty(provenance))?,
        ]),
        Format::Json => {
            let rows: Vec<JsonRow> = rows.iter().map(JsonRow::from).collect();
            let doc = serde_json::json!({ "provenance": provenance, "rows": rows });
            Ok(vec![write(dir.join(JSON_FILE), &pretty(&doc))?])
        }
    }
}
