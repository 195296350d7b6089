//! Monte Carlo driver.
//!
//! A realization is split into a bandwidth-independent part
//! ([`PreparedRealization`]: layout, association, signal and interference
//! levels) and a cheap per-`mu` evaluation, so `mu` grids and sweeps reuse
//! one geometry per seed. Realization `i` uses seed `master_seed + i`;
//! every random component draws from its own ChaCha stream of that seed, so
//! changing one density leaves the other layers untouched.

use std::path::PathBuf;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    sample_fhppp, sample_tree_lines, sample_uniform, sample_walls, NodeKind, NodeSet, Region, TreeLineSet, WallSet,
};
use crate::network::{
    access_levels, allocate_bandwidth, associate_backhaul, associate_ues, backhaul_levels, compute_rates,
    coverage_fraction, draw_backhaul_boresights, draw_boresights, AccessTable, AssociationMap, FadingTable, LoadTable,
    Mode, NetworkError, RadioConfig, RateReport, Scene, SignalLevels,
};
use crate::propagation::{rain_coefficients, AntennaPattern, ChannelParams, Polarization};
use crate::terrain3d::{generate_synthetic_city, load_buildings, BuildingPrism, CityParams, NodeHeights, TerrainError};

/// z-score of a two-sided 95% normal interval.
const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid value for `{key}`: {reason}")]
    Config { key: &'static str, reason: String },
    #[error("unknown sweep axis `{0}`")]
    UnknownAxis(String),
    #[error("every realization was discarded (no UEs); nothing to estimate")]
    AllDiscarded,
    #[error(transparent)]
    Terrain(#[from] TerrainError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

fn config_error(key: &'static str, reason: impl Into<String>) -> EngineError {
    EngineError::Config {
        key,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MuSetting {
    Fixed(f64),
    #[serde(with = "optimize_tag")]
    Optimize,
}

mod optimize_tag {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("optimize")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "optimize" {
            Ok(())
        } else {
            Err(D::Error::custom(format!("expected \"optimize\", got {s:?}")))
        }
    }
}

/// Everything that defines one experiment. Densities are per km², lengths
/// and heights in meters, powers in dBm, bandwidth in Hz, rates in bit/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub radius_m: f64,
    pub mbs_density: f64,
    /// Fixed number of uniformly placed donors; overrides `mbs_density`.
    pub mbs_count: Option<usize>,
    pub sbs_density: f64,
    pub ue_density: f64,
    pub wall_density: f64,
    pub wall_length_m: f64,
    pub tree_density: f64,
    pub tree_length_m: f64,
    pub mbs_power_dbm: f64,
    pub sbs_power_dbm: f64,
    pub ue_power_dbm: f64,
    pub channel: ChannelParams,
    pub mbs_antenna: AntennaPattern,
    pub sbs_antenna: AntennaPattern,
    pub ue_antenna: AntennaPattern,
    pub elevation_hpbw_deg: f64,
    pub noise_figure_db: f64,
    pub rain_rate_mm_h: f64,
    pub rain_polarization: Polarization,
    pub foliage_depth_m: f64,
    pub in_leaf_probability: f64,
    pub mu: MuSetting,
    pub mu_grid: Vec<f64>,
    pub bandwidth_hz: f64,
    pub rate_threshold_bps: f64,
    pub fiber_fraction: f64,
    pub backhaul_interference: bool,
    pub mode: Mode,
    pub heights: NodeHeights,
    pub city: CityParams,
    pub footprint_file: Option<PathBuf>,
    pub realizations: usize,
    pub seed: u64,
}

/// `0, 0.05, …, 1`.
pub fn default_mu_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            radius_m: 1000.0,
            mbs_density: 8.0,
            mbs_count: None,
            sbs_density: 100.0,
            ue_density: 500.0,
            wall_density: 500.0,
            wall_length_m: 5.0,
            tree_density: 0.0,
            tree_length_m: 15.0,
            mbs_power_dbm: 40.0,
            sbs_power_dbm: 24.0,
            ue_power_dbm: 0.0,
            channel: ChannelParams::default(),
            mbs_antenna: AntennaPattern::BASE_STATION,
            sbs_antenna: AntennaPattern::BASE_STATION,
            ue_antenna: AntennaPattern::OMNI,
            elevation_hpbw_deg: 25.0,
            noise_figure_db: 5.0,
            rain_rate_mm_h: 0.0,
            rain_polarization: Polarization::Horizontal,
            foliage_depth_m: 5.0,
            in_leaf_probability: 0.2,
            mu: MuSetting::Optimize,
            mu_grid: default_mu_grid(),
            bandwidth_hz: 1e9,
            rate_threshold_bps: 100e6,
            fiber_fraction: 0.0,
            backhaul_interference: false,
            mode: Mode::Planar,
            heights: NodeHeights::default(),
            city: CityParams::default(),
            footprint_file: None,
            realizations: 1000,
            seed: 1,
        }
    }
}

fn check(key: &'static str, value: f64, ok: bool, expected: &str) -> Result<(), EngineError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(config_error(key, format!("{value} (expected {expected})")))
    }
}

impl ScenarioConfig {
    /// Checks every field; errors name the scenario-file key.
    pub fn validate(&self) -> Result<(), EngineError> {
        check("region.radius_m", self.radius_m, self.radius_m > 0.0, "> 0")?;
        for (key, v) in [
            ("density.mbs", self.mbs_density),
            ("density.sbs", self.sbs_density),
            ("density.ue", self.ue_density),
            ("density.walls", self.wall_density),
            ("density.trees", self.tree_density),
            ("walls.length_m", self.wall_length_m),
            ("trees.length_m", self.tree_length_m),
            ("foliage.depth_m", self.foliage_depth_m),
            ("rain.rate_mm_h", self.rain_rate_mm_h),
            ("rate_threshold_bps", self.rate_threshold_bps),
        ] {
            check(key, v, v >= 0.0, ">= 0")?;
        }
        for (key, v) in [
            ("fiber_fraction", self.fiber_fraction),
            ("foliage.in_leaf_probability", self.in_leaf_probability),
        ] {
            check(key, v, (0.0..=1.0).contains(&v), "in [0, 1]")?;
        }
        if let MuSetting::Fixed(mu) = self.mu {
            check("mu", mu, (0.0..=1.0).contains(&mu), "in [0, 1] or \"optimize\"")?;
        }
        if self.mu_grid.is_empty() {
            return Err(config_error("mu_grid", "must not be empty"));
        }
        for &mu in &self.mu_grid {
            check("mu_grid", mu, (0.0..=1.0).contains(&mu), "values in [0, 1]")?;
        }
        check("bandwidth_hz", self.bandwidth_hz, self.bandwidth_hz > 0.0, "> 0")?;
        for (key, v) in [
            ("power.mbs_dbm", self.mbs_power_dbm),
            ("power.sbs_dbm", self.sbs_power_dbm),
            ("power.ue_dbm", self.ue_power_dbm),
            ("noise.figure_db", self.noise_figure_db),
        ] {
            check(key, v, true, "a finite number")?;
        }
        self.channel
            .validate()
            .map_err(|e| config_error("channel", e.to_string()))?;
        for (key, pattern) in [
            ("antenna.mbs", &self.mbs_antenna),
            ("antenna.sbs", &self.sbs_antenna),
            ("antenna.ue", &self.ue_antenna),
        ] {
            pattern.validate().map_err(|e| config_error(key, e.to_string()))?;
        }
        check(
            "antenna.hpbw_elevation_deg",
            self.elevation_hpbw_deg,
            self.elevation_hpbw_deg > 0.0 && self.elevation_hpbw_deg <= 180.0,
            "in (0, 180]",
        )?;
        check("height.mbs_m", self.heights.mbs, self.heights.mbs > 0.0, "> 0")?;
        check("height.sbs_m", self.heights.sbs, self.heights.sbs > 0.0, "> 0")?;
        check("height.ue_m", self.heights.ue, self.heights.ue >= 0.0, ">= 0")?;
        self.city.validate().map_err(|e| config_error("city", e.to_string()))?;
        if self.realizations == 0 {
            return Err(config_error("realizations", "must be at least 1"));
        }
        if rain_coefficients(self.channel.carrier_ghz, self.rain_polarization).is_none() {
            return Err(config_error(
                "channel.carrier_ghz",
                format!("no rain coefficients for {} GHz", self.channel.carrier_ghz),
            ));
        }
        Ok(())
    }

    pub fn region(&self) -> Region {
        Region::disk(self.radius_m).expect("validated radius")
    }

    pub fn radio(&self) -> RadioConfig {
        RadioConfig {
            channel: self.channel,
            mbs_antenna: self.mbs_antenna,
            sbs_antenna: self.sbs_antenna,
            ue_antenna: self.ue_antenna,
            elevation_hpbw_deg: self.elevation_hpbw_deg,
            mbs_power_dbm: self.mbs_power_dbm,
            sbs_power_dbm: self.sbs_power_dbm,
            rain_rate: self.rain_rate_mm_h,
            rain: rain_coefficients(self.channel.carrier_ghz, self.rain_polarization).expect("validated carrier"),
            foliage_depth: self.foliage_depth_m,
            noise_figure_db: self.noise_figure_db,
        }
    }
}

/// Scalar parameters a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    SbsDensity,
    WallDensity,
    WallLength,
    RainRate,
    TreeLength,
    TreeDensity,
    Mu,
    FiberFraction,
    SbsHeight,
    RateThreshold,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 10] = [
        SweepAxis::SbsDensity,
        SweepAxis::WallDensity,
        SweepAxis::WallLength,
        SweepAxis::RainRate,
        SweepAxis::TreeLength,
        SweepAxis::TreeDensity,
        SweepAxis::Mu,
        SweepAxis::FiberFraction,
        SweepAxis::SbsHeight,
        SweepAxis::RateThreshold,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::SbsDensity => "lambda_s",
            SweepAxis::WallDensity => "lambda_b",
            SweepAxis::WallLength => "l_b",
            SweepAxis::RainRate => "rain_rate",
            SweepAxis::TreeLength => "l_t",
            SweepAxis::TreeDensity => "lambda_t",
            SweepAxis::Mu => "mu",
            SweepAxis::FiberFraction => "fiber_fraction",
            SweepAxis::SbsHeight => "sbs_height",
            SweepAxis::RateThreshold => "r_th",
        }
    }

    /// Scenario-file key the axis overrides.
    pub fn key(self) -> &'static str {
        match self {
            SweepAxis::SbsDensity => "density.sbs",
            SweepAxis::WallDensity => "density.walls",
            SweepAxis::WallLength => "walls.length_m",
            SweepAxis::RainRate => "rain.rate_mm_h",
            SweepAxis::TreeLength => "trees.length_m",
            SweepAxis::TreeDensity => "density.trees",
            SweepAxis::Mu => "mu",
            SweepAxis::FiberFraction => "fiber_fraction",
            SweepAxis::SbsHeight => "height.sbs_m",
            SweepAxis::RateThreshold => "rate_threshold_bps",
        }
    }

    pub fn apply(self, config: &mut ScenarioConfig, value: f64) {
        match self {
            SweepAxis::SbsDensity => config.sbs_density = value,
            SweepAxis::WallDensity => config.wall_density = value,
            SweepAxis::WallLength => config.wall_length_m = value,
            SweepAxis::RainRate => config.rain_rate_mm_h = value,
            SweepAxis::TreeLength => config.tree_length_m = value,
            SweepAxis::TreeDensity => config.tree_density = value,
            SweepAxis::Mu => config.mu = MuSetting::Fixed(value),
            SweepAxis::FiberFraction => config.fiber_fraction = value,
            SweepAxis::SbsHeight => config.heights.sbs = value,
            SweepAxis::RateThreshold => config.rate_threshold_bps = value,
        }
    }
}

impl FromStr for SweepAxis {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SweepAxis::ALL
            .into_iter()
            .find(|a| a.name() == s || a.key() == s)
            .ok_or_else(|| EngineError::UnknownAxis(s.to_string()))
    }
}

/// Outcome of one realization at one `mu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationRecord {
    pub seed: u64,
    pub mu: f64,
    /// `None` when the realization had no UEs and is discarded.
    pub coverage: Option<f64>,
    pub hop_lengths: Vec<f64>,
    pub ue_rate_bps: Vec<f64>,
}

impl RealizationRecord {
    pub fn mean_rate_bps(&self) -> Option<f64> {
        if self.ue_rate_bps.is_empty() {
            None
        } else {
            Some(self.ue_rate_bps.iter().sum::<f64>() / self.ue_rate_bps.len() as f64)
        }
    }
}

/// Pooled mean SBS→donor distance; `None` when no backhaul link exists.
pub fn mean_hop_length(records: &[RealizationRecord]) -> Option<f64> {
    pooled_mean(records.iter().map(|r| r.hop_lengths.as_slice()))
}

/// Mean over all values, summed per group first so every caller rounds alike.
fn pooled_mean<'a>(groups: impl Iterator<Item = &'a [f64]>) -> Option<f64> {
    let (sum, n) = groups.fold((0.0, 0usize), |(s, n), g| (s + g.iter().sum::<f64>(), n + g.len()));
    (n > 0).then(|| sum / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageResult {
    pub mu: f64,
    pub coverage: f64,
    pub ci_half_width: f64,
    pub fractions: Vec<f64>,
    pub mean_hop_m: Option<f64>,
    pub mean_rate_bps: f64,
    pub discarded: usize,
    pub realizations: usize,
}

/// Everything about a realization that does not depend on `mu`.
#[derive(Debug, Clone)]
pub struct PreparedRealization {
    pub seed: u64,
    pub scene: Scene,
    pub association: AssociationMap,
    pub loads: LoadTable,
    /// Beam target (UE index) per BS for this slot; `None` when silent.
    pub boresights: Vec<Option<usize>>,
    /// Backhaul beam target (SBS index) per donor.
    pub donor_boresights: Vec<Option<usize>>,
    /// UE × BS fading powers.
    pub access_fading: FadingTable,
    /// SBS × MBS fading powers.
    pub backhaul_fading: FadingTable,
    pub access: Vec<SignalLevels>,
    pub backhaul: Vec<Option<SignalLevels>>,
    pub hop_lengths: Vec<f64>,
}

#[derive(Clone, Copy)]
enum Stream {
    Mbs = 0,
    Sbs,
    Ue,
    Walls,
    Trees,
    Fiber,
    AccessFading,
    BackhaulFading,
    Boresights,
    DonorBoresights,
    City,
}

fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Validated configuration plus anything loaded once per experiment.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: ScenarioConfig,
    radio: RadioConfig,
    region: Region,
    footprints: Option<Vec<BuildingPrism>>,
}

impl Simulator {
    pub fn new(config: ScenarioConfig) -> Result<Self, EngineError> {
        config.validate()?;
        let footprints = match (&config.mode, &config.footprint_file) {
            (Mode::Elevated, Some(path)) => Some(load_buildings(path, None)?),
            _ => None,
        };
        Ok(Self {
            radio: config.radio(),
            region: config.region(),
            config,
            footprints,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn realization_seed(&self, index: usize) -> u64 {
        self.config.seed.wrapping_add(index as u64)
    }

    /// Samples the world for `seed`.
    pub fn sample_scene(&self, seed: u64) -> Result<Scene, EngineError> {
        let c = &self.config;
        let region = &self.region;
        let mbs_points = match c.mbs_count {
            Some(n) => sample_uniform(n, region, &mut stream_rng(seed, Stream::Mbs)),
            None => {
                sample_fhppp(c.mbs_density, region, &mut stream_rng(seed, Stream::Mbs)).map_err(NetworkError::from)?
            }
        };
        let sbs_points =
            sample_fhppp(c.sbs_density, region, &mut stream_rng(seed, Stream::Sbs)).map_err(NetworkError::from)?;
        let ue_points =
            sample_fhppp(c.ue_density, region, &mut stream_rng(seed, Stream::Ue)).map_err(NetworkError::from)?;
        let walls = match c.mode {
            Mode::Planar => sample_walls(
                c.wall_density,
                c.wall_length_m,
                region,
                &mut stream_rng(seed, Stream::Walls),
            )
            .map_err(NetworkError::from)?,
            Mode::Elevated => WallSet::default(),
        };
        let trees = if c.tree_density > 0.0 {
            sample_tree_lines(
                c.tree_density,
                c.tree_length_m,
                c.in_leaf_probability,
                region,
                &mut stream_rng(seed, Stream::Trees),
            )
            .map_err(NetworkError::from)?
        } else {
            TreeLineSet::default()
        };
        let buildings = match (c.mode, &self.footprints) {
            (Mode::Planar, _) => Vec::new(),
            (Mode::Elevated, Some(prisms)) => prisms.clone(),
            (Mode::Elevated, None) => generate_synthetic_city(&c.city, region, &mut stream_rng(seed, Stream::City))?,
        };
        Ok(Scene {
            region: *region,
            mbs: NodeSet::new(NodeKind::Mbs, mbs_points, c.heights.mbs),
            sbs: NodeSet::new(NodeKind::Sbs, sbs_points, c.heights.sbs),
            ues: NodeSet::new(NodeKind::Ue, ue_points, c.heights.ue),
            walls,
            trees,
            buildings,
            mode: c.mode,
        })
    }

    /// Uniformly random subset of `round(fraction · n)` fiber-connected SBSs.
    fn draw_fiber(&self, seed: u64, sbs_count: usize) -> Vec<bool> {
        let mut fiber = vec![false; sbs_count];
        let k = ((self.config.fiber_fraction * sbs_count as f64).round() as usize).min(sbs_count);
        if k > 0 {
            for i in index::sample(&mut stream_rng(seed, Stream::Fiber), sbs_count, k) {
                fiber[i] = true;
            }
        }
        fiber
    }

    /// SBS→donor distances for `seed` without evaluating any access link.
    pub fn hop_lengths(&self, seed: u64) -> Result<Vec<f64>, EngineError> {
        let scene = self.sample_scene(seed)?;
        if scene.mbs.is_empty() {
            return Ok(Vec::new());
        }
        let fiber = self.draw_fiber(seed, scene.sbs.len());
        let parents = associate_backhaul(&scene, &self.radio, &fiber)?;
        hop_distances(&scene, &parents)
    }

    /// Pooled mean hop length over the configured realizations.
    pub fn mean_hop_length(&self) -> Result<Option<f64>, EngineError> {
        let per_seed: Vec<Vec<f64>> = (0..self.config.realizations)
            .into_par_iter()
            .map(|i| self.hop_lengths(self.realization_seed(i)))
            .collect::<Result<_, _>>()?;
        Ok(pooled_mean(per_seed.iter().map(Vec::as_slice)))
    }

    /// Layout, association, loads and signal levels for `seed`.
    pub fn prepare(&self, seed: u64) -> Result<PreparedRealization, EngineError> {
        let scene = self.sample_scene(seed)?;
        let radio = &self.radio;
        let fiber_sbs = self.draw_fiber(seed, scene.sbs.len());
        let sbs_to_mbs = if scene.mbs.is_empty() {
            vec![None; scene.sbs.len()]
        } else {
            associate_backhaul(&scene, radio, &fiber_sbs)?
        };
        let hop_lengths = hop_distances(&scene, &sbs_to_mbs)?;

        let (ue_to_bs, boresights, access_fading, access) = if scene.bs_count() == 0 || scene.ues.is_empty() {
            // nobody can be served; every UE gets zero signal
            let silent = SignalLevels {
                signal_mw: 0.0,
                interference_mw: 0.0,
            };
            (
                Vec::new(),
                vec![None; scene.bs_count()],
                FadingTable::constant(0, 0, 1.0),
                vec![silent; scene.ues.len()],
            )
        } else {
            let table = AccessTable::build(&scene, radio)?;
            let ue_to_bs = associate_ues(&scene, radio, &table)?;
            let boresights = draw_boresights(scene.bs_count(), &ue_to_bs, &mut stream_rng(seed, Stream::Boresights));
            let fading = FadingTable::draw(
                scene.ues.len(),
                scene.bs_count(),
                &mut stream_rng(seed, Stream::AccessFading),
            );
            let access = access_levels(&scene, radio, &table, &ue_to_bs, &boresights, &fading);
            (ue_to_bs, boresights, fading, access)
        };
        let association = AssociationMap {
            ue_to_bs,
            sbs_to_mbs,
            fiber_sbs,
        };
        let loads = LoadTable::from_association(&scene, &association);
        let donor_boresights = draw_backhaul_boresights(
            &scene,
            &association,
            &loads,
            &mut stream_rng(seed, Stream::DonorBoresights),
        );
        let backhaul_fading = FadingTable::draw(
            scene.sbs.len(),
            scene.mbs.len(),
            &mut stream_rng(seed, Stream::BackhaulFading),
        );
        let backhaul = backhaul_levels(
            &scene,
            radio,
            &association,
            &donor_boresights,
            &backhaul_fading,
            self.config.backhaul_interference,
        )?;
        Ok(PreparedRealization {
            seed,
            scene,
            association,
            loads,
            boresights,
            donor_boresights,
            access_fading,
            backhaul_fading,
            access,
            backhaul,
            hop_lengths,
        })
    }

    /// Rates and coverage of a prepared realization for one `mu`.
    pub fn evaluate(&self, prepared: &PreparedRealization, mu: f64) -> RealizationRecord {
        let report = self.rates(prepared, mu);
        RealizationRecord {
            seed: prepared.seed,
            mu,
            coverage: coverage_fraction(&report, self.config.rate_threshold_bps).ok(),
            hop_lengths: prepared.hop_lengths.clone(),
            ue_rate_bps: report.ue_rate_bps,
        }
    }

    pub fn rates(&self, prepared: &PreparedRealization, mu: f64) -> RateReport {
        let n_ue = prepared.scene.ues.len();
        if prepared.association.ue_to_bs.len() != n_ue {
            return RateReport {
                ue_rate_bps: vec![0.0; n_ue],
                ue_sinr_db: vec![f64::NEG_INFINITY; n_ue],
                backhaul_rate_bps: vec![None; prepared.scene.sbs.len()],
            };
        }
        let mbs_count = prepared.scene.mbs.len();
        let plan = allocate_bandwidth(
            mu,
            self.config.bandwidth_hz,
            mbs_count,
            &prepared.loads,
            &prepared.association,
        );
        compute_rates(
            &plan,
            mbs_count,
            &prepared.association,
            &prepared.access,
            &prepared.backhaul,
            self.config.noise_figure_db,
        )
    }

    fn fixed_mu(&self) -> Result<f64, EngineError> {
        match self.config.mu {
            MuSetting::Fixed(mu) => Ok(mu),
            MuSetting::Optimize => Err(config_error(
                "mu",
                "a single realization needs a fixed value, not \"optimize\"",
            )),
        }
    }

    /// One realization at the configured fixed `mu`.
    pub fn run_realization(&self, seed: u64) -> Result<RealizationRecord, EngineError> {
        let mu = self.fixed_mu()?;
        Ok(self.evaluate(&self.prepare(seed)?, mu))
    }

    /// Coverage estimates for every `mu` in `mus`, sharing one geometry per
    /// seed. `seed_offset` shifts the realization seeds.
    pub fn evaluate_mus(&self, mus: &[f64], seed_offset: u64) -> Result<Vec<CoverageResult>, EngineError> {
        for &mu in mus {
            check("mu", mu, (0.0..=1.0).contains(&mu), "in [0, 1]")?;
        }
        let n = self.config.realizations;
        let per_seed: Vec<Vec<Summary>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let seed = self.realization_seed(i).wrapping_add(seed_offset);
                let prepared = self.prepare(seed)?;
                Ok(mus
                    .iter()
                    .map(|&mu| Summary::from(&self.evaluate(&prepared, mu)))
                    .collect())
            })
            .collect::<Result<_, EngineError>>()?;
        (0..mus.len())
            .map(|k| reduce(mus[k], per_seed.iter().map(|row| &row[k])))
            .collect()
    }

    /// Best `mu` on `grid` (ties go to the smaller value) and its estimate.
    pub fn optimize_mu(&self, grid: &[f64]) -> Result<(f64, CoverageResult), EngineError> {
        let results = self.optimize_mu_table(grid)?;
        Ok(best_of(results))
    }

    fn optimize_mu_table(&self, grid: &[f64]) -> Result<Vec<CoverageResult>, EngineError> {
        if grid.is_empty() {
            return Err(config_error("mu_grid", "must not be empty"));
        }
        self.evaluate_mus(grid, 0)
    }

    pub fn run_monte_carlo(&self) -> Result<CoverageResult, EngineError> {
        self.run_monte_carlo_offset(0)
    }

    fn run_monte_carlo_offset(&self, seed_offset: u64) -> Result<CoverageResult, EngineError> {
        match self.config.mu {
            MuSetting::Fixed(mu) => Ok(self.evaluate_mus(&[mu], seed_offset)?.remove(0)),
            MuSetting::Optimize => Ok(best_of(self.evaluate_mus(&self.config.mu_grid, seed_offset)?).1),
        }
    }
}

fn hop_distances(scene: &Scene, parents: &[Option<usize>]) -> Result<Vec<f64>, EngineError> {
    parents
        .iter()
        .enumerate()
        .filter_map(|(s, parent)| {
            parent.map(|m| {
                scene
                    .path(&scene.mbs.nodes[m], &scene.sbs.nodes[s])
                    .map(|p| p.distance)
                    .map_err(EngineError::from)
            })
        })
        .collect()
}

fn best_of(results: Vec<CoverageResult>) -> (f64, CoverageResult) {
    let mut best: Option<CoverageResult> = None;
    for r in results {
        let better = match &best {
            None => true,
            Some(b) => r.coverage > b.coverage || (r.coverage == b.coverage && r.mu < b.mu),
        };
        if better {
            best = Some(r);
        }
    }
    let best = best.expect("non-empty grid");
    (best.mu, best)
}

/// Per-realization numbers kept for the reduction.
#[derive(Debug, Clone)]
struct Summary {
    coverage: Option<f64>,
    mean_rate: Option<f64>,
    hop_sum: f64,
    hop_count: usize,
}

impl From<&RealizationRecord> for Summary {
    fn from(r: &RealizationRecord) -> Self {
        Self {
            coverage: r.coverage,
            mean_rate: r.mean_rate_bps(),
            hop_sum: r.hop_lengths.iter().sum(),
            hop_count: r.hop_lengths.len(),
        }
    }
}

/// Sequential reduction in realization order.
fn reduce<'a>(mu: f64, rows: impl Iterator<Item = &'a Summary>) -> Result<CoverageResult, EngineError> {
    let mut fractions = Vec::new();
    let mut rate_sum = 0.0;
    let mut discarded = 0;
    let mut realizations = 0;
    let (mut hop_sum, mut hop_count) = (0.0, 0usize);
    for s in rows {
        realizations += 1;
        hop_sum += s.hop_sum;
        hop_count += s.hop_count;
        match s.coverage {
            Some(c) => {
                fractions.push(c);
                rate_sum += s.mean_rate.unwrap_or(0.0);
            }
            None => discarded += 1,
        }
    }
    if fractions.is_empty() {
        return Err(EngineError::AllDiscarded);
    }
    let n = fractions.len() as f64;
    let coverage = fractions.iter().sum::<f64>() / n;
    let ci_half_width = if fractions.len() > 1 {
        let var = fractions.iter().map(|f| (f - coverage).powi(2)).sum::<f64>() / (n - 1.0);
        Z_95 * (var / n).sqrt()
    } else {
        0.0
    };
    Ok(CoverageResult {
        mu,
        coverage,
        ci_half_width,
        fractions,
        mean_hop_m: (hop_count > 0).then(|| hop_sum / hop_count as f64),
        mean_rate_bps: rate_sum / n,
        discarded,
        realizations,
    })
}

/// One realization of `config` (which must carry a fixed `mu`).
pub fn run_realization(config: &ScenarioConfig, seed: u64) -> Result<RealizationRecord, EngineError> {
    Simulator::new(config.clone())?.run_realization(seed)
}

pub fn run_monte_carlo(config: &ScenarioConfig) -> Result<CoverageResult, EngineError> {
    Simulator::new(config.clone())?.run_monte_carlo()
}

pub fn optimize_mu(config: &ScenarioConfig, grid: &[f64]) -> Result<(f64, CoverageResult), EngineError> {
    Simulator::new(config.clone())?.optimize_mu(grid)
}

/// One estimate per value. With `common_random_numbers` every value reuses
/// the same realization seeds; otherwise value `k` shifts the seeds by
/// `k · realizations`.
pub fn sweep(
    config: &ScenarioConfig,
    axis: SweepAxis,
    values: &[f64],
    common_random_numbers: bool,
) -> Result<Vec<(f64, CoverageResult)>, EngineError> {
    if values.is_empty() {
        return Ok(Vec::new());
    }
    if axis == SweepAxis::Mu && common_random_numbers {
        let sim = Simulator::new(config.clone())?;
        let results = sim.evaluate_mus(values, 0)?;
        return Ok(values.iter().copied().zip(results).collect());
    }
    values
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let mut c = config.clone();
            axis.apply(&mut c, v);
            let offset = if common_random_numbers {
                0
            } else {
                (k as u64).wrapping_mul(c.realizations as u64)
            };
            let result = Simulator::new(c)?.run_monte_carlo_offset(offset)?;
            Ok((v, result))
        })
        .collect()
}
