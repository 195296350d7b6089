//! Flat, dotted-key scenario files.
//!
//! A scenario is a single JSON object whose keys name one parameter each
//! (`"density.sbs": 65`). Missing keys keep their defaults. Units are fixed
//! per key: densities per km², powers in dBm, lengths in meters, bandwidth in
//! Hz and rates in bit/s.

use std::fmt;
use std::path::{Path, PathBuf};

use iabsim::engine::{EngineError, MuSetting, ScenarioConfig};
use iabsim::network::Mode;
use iabsim::propagation::{AntennaPattern, Polarization};
use serde::de::{Deserializer, MapAccess, Visitor};
use serde::Deserialize;
use serde_json::{Map, Value};
use thiserror::Error;

/// Every accepted key, in canonical order.
pub const KEYS: &[&str] = &[
    "region.radius_m",
    "density.mbs",
    "density.mbs_count",
    "density.sbs",
    "density.ue",
    "density.walls",
    "walls.length_m",
    "density.trees",
    "trees.length_m",
    "power.mbs_dbm",
    "power.sbs_dbm",
    "power.ue_dbm",
    "channel.carrier_ghz",
    "channel.alpha_los",
    "channel.alpha_nlos",
    "antenna.mbs.main_dbi",
    "antenna.mbs.side_dbi",
    "antenna.mbs.hpbw_deg",
    "antenna.sbs.main_dbi",
    "antenna.sbs.side_dbi",
    "antenna.sbs.hpbw_deg",
    "antenna.ue.main_dbi",
    "antenna.ue.side_dbi",
    "antenna.ue.hpbw_deg",
    "antenna.hpbw_elevation_deg",
    "noise.figure_db",
    "rain.rate_mm_h",
    "rain.polarization",
    "foliage.depth_m",
    "foliage.in_leaf_probability",
    "mu",
    "mu_grid",
    "bandwidth_hz",
    "rate_threshold_bps",
    "fiber_fraction",
    "backhaul_interference",
    "mode",
    "height.mbs_m",
    "height.sbs_m",
    "height.ue_m",
    "city.density",
    "city.size_min_m",
    "city.size_max_m",
    "city.height_min_m",
    "city.height_max_m",
    "city.footprint_file",
    "realizations",
    "seed",
];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario is not valid JSON: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("{}: unknown key `{key}`", at(*line))]
    UnknownKey { key: String, line: usize },
    #[error("{}: key `{key}` appears more than once", at(*line))]
    Duplicate { key: String, line: usize },
    #[error("{}: `{key}` must be {expected}", at(*line))]
    Type {
        key: String,
        line: usize,
        expected: &'static str,
    },
    #[error("{}: `{key}` {reason}", at(*line))]
    Range { key: String, line: usize, reason: String },
}

/// Line 0 stands for a command-line override.
fn at(line: usize) -> String {
    if line == 0 {
        "command line".into()
    } else {
        format!("line {line}")
    }
}

/// Top-level object with key order and duplicates preserved.
struct Entries(Vec<(String, Value)>);

impl<'de> Deserialize<'de> for Entries {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Entries;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a flat JSON object of dotted keys")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Entries, A::Error> {
                let mut out = Vec::new();
                while let Some(entry) = map.next_entry::<String, Value>()? {
                    out.push(entry);
                }
                Ok(Entries(out))
            }
        }
        d.deserialize_map(V)
    }
}

/// Line of `"key"`, else of the first key under the `key.` prefix; 0 if absent.
fn line_of(text: &str, key: &str) -> usize {
    let find = |needle: String| text.lines().position(|l| l.contains(&needle));
    find(format!("\"{key}\""))
        .or_else(|| find(format!("\"{key}.")))
        .map_or(0, |i| i + 1)
}

fn num(v: &Value) -> Result<f64, &'static str> {
    v.as_f64().ok_or("a number")
}

fn count(v: &Value) -> Result<u64, &'static str> {
    v.as_u64().ok_or("a non-negative integer")
}

fn set_antenna(a: &mut AntennaPattern, field: &str, v: &Value) -> Result<(), &'static str> {
    match field {
        "main_dbi" => a.main_gain_dbi = num(v)?,
        "side_dbi" => a.side_gain_dbi = num(v)?,
        _ => a.hpbw_deg = num(v)?,
    }
    Ok(())
}

fn apply(c: &mut ScenarioConfig, key: &str, v: &Value) -> Result<(), &'static str> {
    match key {
        "region.radius_m" => c.radius_m = num(v)?,
        "density.mbs" => c.mbs_density = num(v)?,
        "density.mbs_count" => {
            c.mbs_count = match v {
                Value::Null => None,
                _ => Some(count(v).map_err(|_| "null or a non-negative integer")? as usize),
            }
        }
        "density.sbs" => c.sbs_density = num(v)?,
        "density.ue" => c.ue_density = num(v)?,
        "density.walls" => c.wall_density = num(v)?,
        "walls.length_m" => c.wall_length_m = num(v)?,
        "density.trees" => c.tree_density = num(v)?,
        "trees.length_m" => c.tree_length_m = num(v)?,
        "power.mbs_dbm" => c.mbs_power_dbm = num(v)?,
        "power.sbs_dbm" => c.sbs_power_dbm = num(v)?,
        "power.ue_dbm" => c.ue_power_dbm = num(v)?,
        "channel.carrier_ghz" => c.channel.carrier_ghz = num(v)?,
        "channel.alpha_los" => c.channel.alpha_los = num(v)?,
        "channel.alpha_nlos" => c.channel.alpha_nlos = num(v)?,
        "antenna.hpbw_elevation_deg" => c.elevation_hpbw_deg = num(v)?,
        k if k.starts_with("antenna.mbs.") => set_antenna(&mut c.mbs_antenna, &k[12..], v)?,
        k if k.starts_with("antenna.sbs.") => set_antenna(&mut c.sbs_antenna, &k[12..], v)?,
        k if k.starts_with("antenna.ue.") => set_antenna(&mut c.ue_antenna, &k[11..], v)?,
        "noise.figure_db" => c.noise_figure_db = num(v)?,
        "rain.rate_mm_h" => c.rain_rate_mm_h = num(v)?,
        "rain.polarization" => {
            c.rain_polarization = match v.as_str() {
                Some("horizontal") => Polarization::Horizontal,
                Some("vertical") => Polarization::Vertical,
                _ => return Err("\"horizontal\" or \"vertical\""),
            }
        }
        "foliage.depth_m" => c.foliage_depth_m = num(v)?,
        "foliage.in_leaf_probability" => c.in_leaf_probability = num(v)?,
        "mu" => {
            c.mu = match v {
                Value::String(s) if s == "optimize" => MuSetting::Optimize,
                _ => MuSetting::Fixed(num(v).map_err(|_| "a number or \"optimize\"")?),
            }
        }
        "mu_grid" => {
            let items = v.as_array().ok_or("an array of numbers")?;
            c.mu_grid = items
                .iter()
                .map(num)
                .collect::<Result<_, _>>()
                .map_err(|_| "an array of numbers")?;
        }
        "bandwidth_hz" => c.bandwidth_hz = num(v)?,
        "rate_threshold_bps" => c.rate_threshold_bps = num(v)?,
        "fiber_fraction" => c.fiber_fraction = num(v)?,
        "backhaul_interference" => c.backhaul_interference = v.as_bool().ok_or("true or false")?,
        "mode" => {
            c.mode = match v.as_str() {
                Some("2d") => Mode::Planar,
                Some("3d") => Mode::Elevated,
                _ => return Err("\"2d\" or \"3d\""),
            }
        }
        "height.mbs_m" => c.heights.mbs = num(v)?,
        "height.sbs_m" => c.heights.sbs = num(v)?,
        "height.ue_m" => c.heights.ue = num(v)?,
        "city.density" => c.city.density = num(v)?,
        "city.size_min_m" => c.city.size_min = num(v)?,
        "city.size_max_m" => c.city.size_max = num(v)?,
        "city.height_min_m" => c.city.height_min = num(v)?,
        "city.height_max_m" => c.city.height_max = num(v)?,
        "city.footprint_file" => {
            c.footprint_file = match v {
                Value::Null => None,
                Value::String(s) => Some(PathBuf::from(s)),
                _ => return Err("null or a path string"),
            }
        }
        "realizations" => c.realizations = count(v)? as usize,
        "seed" => c.seed = count(v)?,
        _ => unreachable!("key list and setters out of sync: {key}"),
    }
    Ok(())
}

/// Parses scenario text. Relative footprint paths resolve against `base`.
pub fn parse_scenario_str(text: &str, base: Option<&Path>) -> Result<ScenarioConfig, ScenarioError> {
    parse_with_overrides(text, base, &[])
}

/// Parses `key=value` as given on the command line. The value is read as
/// JSON when possible and as a plain string otherwise.
pub fn parse_override(arg: &str) -> Result<(String, Value), String> {
    let (key, raw) = arg
        .split_once('=')
        .ok_or_else(|| format!("expected key=value, got `{arg}`"))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.trim().to_string(), value))
}

/// Like [`parse_scenario_str`], then applies `overrides` in order.
pub fn parse_with_overrides(
    text: &str,
    base: Option<&Path>,
    overrides: &[(String, Value)],
) -> Result<ScenarioConfig, ScenarioError> {
    let mut config = ScenarioConfig::default();
    let mut seen: Vec<&str> = Vec::new();
    let entries: Entries = if text.trim().is_empty() {
        Entries(Vec::new())
    } else {
        serde_json::from_str(text)?
    };
    let from_file = entries.0.iter().map(|(k, v)| (k, v, line_of(text, k)));
    let from_flags = overrides.iter().map(|(k, v)| (k, v, 0));
    for (key, value, line) in from_file.chain(from_flags) {
        let Some(&known) = KEYS.iter().find(|k| **k == key) else {
            return Err(ScenarioError::UnknownKey { key: key.clone(), line });
        };
        if line > 0 {
            if seen.contains(&known) {
                return Err(ScenarioError::Duplicate { key: key.clone(), line });
            }
            seen.push(known);
        }
        apply(&mut config, known, value).map_err(|expected| ScenarioError::Type {
            key: key.clone(),
            line,
            expected,
        })?;
    }
    if let (Some(base), Some(file)) = (base, config.footprint_file.as_mut()) {
        if file.is_relative() {
            *file = base.join(&*file);
        }
    }
    config.validate().map_err(|e| match e {
        EngineError::Config { key, reason } => ScenarioError::Range {
            key: key.to_string(),
            line: if overrides
                .iter()
                .any(|(k, _)| k == key || k.starts_with(&format!("{key}.")))
            {
                0
            } else {
                line_of(text, key)
            },
            reason,
        },
        other => ScenarioError::Range {
            key: String::new(),
            line: 0,
            reason: other.to_string(),
        },
    })?;
    Ok(config)
}

pub fn parse_scenario(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    parse_scenario_file(path, &[])
}

/// Reads a scenario file and applies command-line overrides on top.
pub fn parse_scenario_file(path: &Path, overrides: &[(String, Value)]) -> Result<ScenarioConfig, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_with_overrides(&text, path.parent(), overrides)
}

fn antenna(map: &mut Map<String, Value>, class: &str, a: &AntennaPattern) {
    map.insert(format!("antenna.{class}.main_dbi"), a.main_gain_dbi.into());
    map.insert(format!("antenna.{class}.side_dbi"), a.side_gain_dbi.into());
    map.insert(format!("antenna.{class}.hpbw_deg"), a.hpbw_deg.into());
}

/// Every key with its resolved value.
pub fn scenario_map(c: &ScenarioConfig) -> Map<String, Value> {
    let mut m = Map::new();
    let mut put = |k: &str, v: Value| {
        m.insert(k.to_string(), v);
    };
    put("region.radius_m", c.radius_m.into());
    put("density.mbs", c.mbs_density.into());
    put("density.mbs_count", c.mbs_count.map_or(Value::Null, |n| n.into()));
    put("density.sbs", c.sbs_density.into());
    put("density.ue", c.ue_density.into());
    put("density.walls", c.wall_density.into());
    put("walls.length_m", c.wall_length_m.into());
    put("density.trees", c.tree_density.into());
    put("trees.length_m", c.tree_length_m.into());
    put("power.mbs_dbm", c.mbs_power_dbm.into());
    put("power.sbs_dbm", c.sbs_power_dbm.into());
    put("power.ue_dbm", c.ue_power_dbm.into());
    put("channel.carrier_ghz", c.channel.carrier_ghz.into());
    put("channel.alpha_los", c.channel.alpha_los.into());
    put("channel.alpha_nlos", c.channel.alpha_nlos.into());
    put("antenna.hpbw_elevation_deg", c.elevation_hpbw_deg.into());
    put("noise.figure_db", c.noise_figure_db.into());
    put("rain.rate_mm_h", c.rain_rate_mm_h.into());
    put(
        "rain.polarization",
        match c.rain_polarization {
            Polarization::Horizontal => "horizontal",
            Polarization::Vertical => "vertical",
        }
        .into(),
    );
    put("foliage.depth_m", c.foliage_depth_m.into());
    put("foliage.in_leaf_probability", c.in_leaf_probability.into());
    put(
        "mu",
        match c.mu {
            MuSetting::Fixed(mu) => mu.into(),
            MuSetting::Optimize => "optimize".into(),
        },
    );
    put("mu_grid", c.mu_grid.clone().into());
    put("bandwidth_hz", c.bandwidth_hz.into());
    put("rate_threshold_bps", c.rate_threshold_bps.into());
    put("fiber_fraction", c.fiber_fraction.into());
    put("backhaul_interference", c.backhaul_interference.into());
    put(
        "mode",
        match c.mode {
            Mode::Planar => "2d",
            Mode::Elevated => "3d",
        }
        .into(),
    );
    put("height.mbs_m", c.heights.mbs.into());
    put("height.sbs_m", c.heights.sbs.into());
    put("height.ue_m", c.heights.ue.into());
    put("city.density", c.city.density.into());
    put("city.size_min_m", c.city.size_min.into());
    put("city.size_max_m", c.city.size_max.into());
    put("city.height_min_m", c.city.height_min.into());
    put("city.height_max_m", c.city.height_max.into());
    put(
        "city.footprint_file",
        c.footprint_file
            .as_ref()
            .map_or(Value::Null, |p| p.to_string_lossy().into_owned().into()),
    );
    put("realizations", c.realizations.into());
    put("seed", c.seed.into());
    antenna(&mut m, "mbs", &c.mbs_antenna);
    antenna(&mut m, "sbs", &c.sbs_antenna);
    antenna(&mut m, "ue", &c.ue_antenna);
    m
}

/// Canonical text form: every key, sorted, one per line.
pub fn canonical_scenario(c: &ScenarioConfig) -> String {
    let mut text = serde_json::to_string_pretty(&Value::Object(scenario_map(c))).expect("plain JSON values");
    text.push('\n');
    text
}
