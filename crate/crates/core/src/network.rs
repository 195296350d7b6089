//! One network realization: UE and backhaul association, load-proportional
//! bandwidth split, access interference, SINR, rates and the coverage
//! fraction.
//!
//! Base stations share one index space: MBSs first, then SBSs. UE indices
//! follow the order of the UE node set.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{foliage_crossings, link_is_los, GeometryError, Node, NodeSet, Region, TreeLineSet, WallSet};
use crate::propagation::{
    dbm_to_mw, foliage_loss_db, noise_power_dbm, path_loss_db, rain_loss_db, sample_fading_power, AntennaPattern,
    ChannelParams, PropagationError, RainCoefficients,
};
use crate::terrain3d::{los_3d, BuildingPrism, Point3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("empty network: {0}")]
    EmptyNetwork(&'static str),
    #[error("coverage undefined: realization has no UEs")]
    NoUsers,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Propagation(#[from] PropagationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Planar positions, wall blockage.
    #[default]
    #[serde(rename = "2d")]
    Planar,
    /// Elevated antennas, building blockage.
    #[serde(rename = "3d")]
    Elevated,
}

/// One sampled world.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub region: Region,
    pub mbs: NodeSet,
    pub sbs: NodeSet,
    pub ues: NodeSet,
    pub walls: WallSet,
    pub trees: TreeLineSet,
    pub buildings: Vec<BuildingPrism>,
    pub mode: Mode,
}

/// Geometric part of a link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkPath {
    pub distance: f64,
    pub los: bool,
    pub crossings: Vec<bool>,
}

impl Scene {
    pub fn bs_count(&self) -> usize {
        self.mbs.len() + self.sbs.len()
    }

    pub fn bs(&self, index: usize) -> &Node {
        let m = self.mbs.len();
        if index < m {
            &self.mbs.nodes[index]
        } else {
            &self.sbs.nodes[index - m]
        }
    }

    pub fn is_mbs(&self, index: usize) -> bool {
        index < self.mbs.len()
    }

    pub fn sbs_index(&self, bs: usize) -> Option<usize> {
        bs.checked_sub(self.mbs.len())
    }

    fn point3(node: &Node) -> Point3 {
        Point3::from_2d(node.position, node.height)
    }

    /// Distance, blockage state and crossed tree lines between two nodes.
    pub fn path(&self, tx: &Node, rx: &Node) -> Result<LinkPath, NetworkError> {
        let (a, b) = (tx.position, rx.position);
        let (distance, los) = match self.mode {
            Mode::Planar => {
                if a == b {
                    (0.0, true)
                } else {
                    (a.distance(b), link_is_los(a, b, &self.walls)?)
                }
            }
            Mode::Elevated => {
                let (p, q) = (Self::point3(tx), Self::point3(rx));
                if p == q {
                    (0.0, true)
                } else {
                    (p.distance(q), los_3d(p, q, &self.buildings)?)
                }
            }
        };
        let crossings = if a == b || self.trees.is_empty() {
            Vec::new()
        } else {
            foliage_crossings(a, b, &self.trees)?
        };
        Ok(LinkPath {
            distance: distance.max(1.0),
            los,
            crossings,
        })
    }
}

/// Radio-level parameters shared by every link of a realization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioConfig {
    pub channel: ChannelParams,
    pub mbs_antenna: AntennaPattern,
    pub sbs_antenna: AntennaPattern,
    pub ue_antenna: AntennaPattern,
    pub elevation_hpbw_deg: f64,
    pub mbs_power_dbm: f64,
    pub sbs_power_dbm: f64,
    pub rain_rate: f64,
    pub rain: RainCoefficients,
    pub foliage_depth: f64,
    pub noise_figure_db: f64,
}

impl RadioConfig {
    /// Path loss plus weather, dB.
    pub fn propagation_loss_db(&self, path: &LinkPath) -> Result<f64, NetworkError> {
        let pl = path_loss_db(path.distance, path.los, &self.channel)?;
        let rain = rain_loss_db(self.rain_rate, path.distance, &self.rain)?;
        let foliage = foliage_loss_db(&path.crossings, self.foliage_depth, self.channel.carrier_mhz());
        Ok(pl + rain + foliage)
    }

    fn bs_antenna(&self, scene: &Scene, bs: usize) -> &AntennaPattern {
        if scene.is_mbs(bs) {
            &self.mbs_antenna
        } else {
            &self.sbs_antenna
        }
    }

    fn bs_power_dbm(&self, scene: &Scene, bs: usize) -> f64 {
        if scene.is_mbs(bs) {
            self.mbs_power_dbm
        } else {
            self.sbs_power_dbm
        }
    }

    /// Gain of `pattern` at a node at `from` steered toward `toward`, seen in direction `target`.
    fn steered_gain(&self, mode: Mode, pattern: &AntennaPattern, from: &Node, toward: &Node, target: &Node) -> f64 {
        if pattern.main_gain_dbi == pattern.side_gain_dbi {
            return pattern.main_gain_dbi;
        }
        let az = |to: &Node| from.position.bearing_to(to.position).to_degrees();
        let az_offset = az(target) - az(toward);
        match mode {
            Mode::Planar => pattern.gain_db(az_offset),
            Mode::Elevated => {
                let el = |to: &Node| {
                    (to.height - from.height)
                        .atan2(from.position.distance(to.position))
                        .to_degrees()
                };
                pattern.gain_3d_db(az_offset, el(target) - el(toward), self.elevation_hpbw_deg)
            }
        }
    }
}

/// Propagation loss (path loss + rain + foliage) for every UE–BS pair,
/// row-major by UE.
#[derive(Debug, Clone, PartialEq)]
pub struct AccessTable {
    bs_count: usize,
    loss_db: Vec<f64>,
}

impl AccessTable {
    pub fn build(scene: &Scene, radio: &RadioConfig) -> Result<Self, NetworkError> {
        let n_bs = scene.bs_count();
        let mut loss_db = Vec::with_capacity(scene.ues.len() * n_bs);
        for ue in &scene.ues.nodes {
            for b in 0..n_bs {
                let path = scene.path(scene.bs(b), ue)?;
                loss_db.push(radio.propagation_loss_db(&path)?);
            }
        }
        Ok(Self {
            bs_count: n_bs,
            loss_db,
        })
    }

    #[inline]
    pub fn loss_db(&self, ue: usize, bs: usize) -> f64 {
        self.loss_db[ue * self.bs_count + bs]
    }

    pub fn bs_count(&self) -> usize {
        self.bs_count
    }

    pub fn ue_count(&self) -> usize {
        self.loss_db.len().checked_div(self.bs_count).unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssociationMap {
    /// Serving BS per UE.
    pub ue_to_bs: Vec<usize>,
    /// Parent MBS per SBS; `None` for fiber SBSs or when no MBS exists.
    pub sbs_to_mbs: Vec<Option<usize>>,
    pub fiber_sbs: Vec<bool>,
}

/// Average (fading-free) received power a UE sees from a BS beamforming at it.
pub fn mean_access_power_dbm(scene: &Scene, radio: &RadioConfig, table: &AccessTable, ue: usize, bs: usize) -> f64 {
    radio.bs_power_dbm(scene, bs) + radio.bs_antenna(scene, bs).main_gain_dbi + radio.ue_antenna.main_gain_dbi
        - table.loss_db(ue, bs)
}

/// Maximum average received power association; ties go to the lower index.
pub fn associate_ues(scene: &Scene, radio: &RadioConfig, table: &AccessTable) -> Result<Vec<usize>, NetworkError> {
    let n_bs = scene.bs_count();
    if n_bs == 0 {
        return Err(NetworkError::EmptyNetwork("no base station"));
    }
    Ok((0..scene.ues.len())
        .map(|u| {
            let mut best = 0;
            let mut best_power = f64::NEG_INFINITY;
            for b in 0..n_bs {
                let p = mean_access_power_dbm(scene, radio, table, u, b);
                if p > best_power {
                    best = b;
                    best_power = p;
                }
            }
            best
        })
        .collect())
}

/// Minimum propagation-loss parent donor for each non-fiber SBS.
pub fn associate_backhaul(
    scene: &Scene,
    radio: &RadioConfig,
    fiber_sbs: &[bool],
) -> Result<Vec<Option<usize>>, NetworkError> {
    if scene.mbs.is_empty() {
        return Err(NetworkError::EmptyNetwork("no macro base station"));
    }
    scene
        .sbs
        .nodes
        .iter()
        .zip(fiber_sbs)
        .map(|(s, &fiber)| {
            if fiber {
                return Ok(None);
            }
            let mut best = 0;
            let mut best_loss = f64::INFINITY;
            for (m, mbs) in scene.mbs.nodes.iter().enumerate() {
                let loss = radio.propagation_loss_db(&scene.path(mbs, s)?)?;
                if loss < best_loss {
                    best = m;
                    best_loss = loss;
                }
            }
            Ok(Some(best))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadTable {
    /// UEs served per BS.
    pub per_bs: Vec<usize>,
    /// Summed load of the non-fiber child SBSs of each MBS.
    pub per_donor: Vec<usize>,
}

impl LoadTable {
    pub fn from_association(scene: &Scene, assoc: &AssociationMap) -> Self {
        let mut per_bs = vec![0; scene.bs_count()];
        for &b in &assoc.ue_to_bs {
            per_bs[b] += 1;
        }
        let mut per_donor = vec![0; scene.mbs.len()];
        for (s, parent) in assoc.sbs_to_mbs.iter().enumerate() {
            if let Some(m) = parent {
                per_donor[*m] += per_bs[scene.mbs.len() + s];
            }
        }
        Self { per_bs, per_donor }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthPlan {
    pub mu: f64,
    pub bandwidth_hz: f64,
    /// Backhaul share per SBS (0 for fiber or unparented SBSs).
    pub backhaul_hz: Vec<f64>,
    /// Access share per UE.
    pub access_hz: Vec<f64>,
}

/// Load-proportional backhaul split per donor and equal access split per BS.
pub fn allocate_bandwidth(
    mu: f64,
    bandwidth_hz: f64,
    mbs_count: usize,
    loads: &LoadTable,
    assoc: &AssociationMap,
) -> BandwidthPlan {
    let backhaul_hz = assoc
        .sbs_to_mbs
        .iter()
        .enumerate()
        .map(|(s, parent)| match parent {
            Some(m) if loads.per_donor[*m] > 0 => {
                mu * bandwidth_hz * loads.per_bs[mbs_count + s] as f64 / loads.per_donor[*m] as f64
            }
            _ => 0.0,
        })
        .collect();
    let access_hz = assoc
        .ue_to_bs
        .iter()
        .map(|&b| (1.0 - mu) * bandwidth_hz / loads.per_bs[b] as f64)
        .collect();
    BandwidthPlan {
        mu,
        bandwidth_hz,
        backhaul_hz,
        access_hz,
    }
}

/// Per-BS beam target for the slot: one of its own UEs, uniformly.
pub fn draw_boresights<R: Rng + ?Sized>(bs_count: usize, ue_to_bs: &[usize], rng: &mut R) -> Vec<Option<usize>> {
    let mut served: Vec<Vec<usize>> = vec![Vec::new(); bs_count];
    for (u, &b) in ue_to_bs.iter().enumerate() {
        served[b].push(u);
    }
    served.iter().map(|ues| ues.choose(rng).copied()).collect()
}

/// Per-donor backhaul beam target: one of its loaded IAB children, uniformly.
pub fn draw_backhaul_boresights<R: Rng + ?Sized>(
    scene: &Scene,
    assoc: &AssociationMap,
    loads: &LoadTable,
    rng: &mut R,
) -> Vec<Option<usize>> {
    let m = scene.mbs.len();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (s, parent) in assoc.sbs_to_mbs.iter().enumerate() {
        if let Some(d) = parent {
            if loads.per_bs[m + s] > 0 {
                children[*d].push(s);
            }
        }
    }
    children.iter().map(|c| c.choose(rng).copied()).collect()
}

/// Dense table of unit-mean exponential fading powers.
#[derive(Debug, Clone, PartialEq)]
pub struct FadingTable {
    cols: usize,
    values: Vec<f64>,
}

impl FadingTable {
    pub fn draw<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        Self {
            cols,
            values: (0..rows * cols).map(|_| sample_fading_power(rng)).collect(),
        }
    }

    pub fn constant(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            cols,
            values: vec![value; rows * cols],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }
}

/// Desired and interfering power at a receiver, mW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalLevels {
    pub signal_mw: f64,
    pub interference_mw: f64,
}

/// Access-band interference at `ue` from every active BS but its server.
pub fn aggregate_interference(
    ue: usize,
    scene: &Scene,
    radio: &RadioConfig,
    table: &AccessTable,
    ue_to_bs: &[usize],
    boresights: &[Option<usize>],
    fading: &FadingTable,
) -> f64 {
    let serving = ue_to_bs[ue];
    let rx = &scene.ues.nodes[ue];
    let server_node = scene.bs(serving);
    let mut total = 0.0;
    for (b, target) in boresights.iter().enumerate() {
        let Some(target) = *target else { continue };
        if b == serving {
            continue;
        }
        let tx = scene.bs(b);
        let tx_gain = radio.steered_gain(scene.mode, radio.bs_antenna(scene, b), tx, &scene.ues.nodes[target], rx);
        let rx_gain = radio.steered_gain(scene.mode, &radio.ue_antenna, rx, server_node, tx);
        let dbm = radio.bs_power_dbm(scene, b) + tx_gain + rx_gain - table.loss_db(ue, b);
        total += dbm_to_mw(dbm) * fading.get(ue, b);
    }
    total
}

/// Signal and interference for every UE on the access band.
pub fn access_levels(
    scene: &Scene,
    radio: &RadioConfig,
    table: &AccessTable,
    ue_to_bs: &[usize],
    boresights: &[Option<usize>],
    fading: &FadingTable,
) -> Vec<SignalLevels> {
    (0..scene.ues.len())
        .map(|u| {
            let b = ue_to_bs[u];
            SignalLevels {
                signal_mw: dbm_to_mw(mean_access_power_dbm(scene, radio, table, u, b)) * fading.get(u, b),
                interference_mw: aggregate_interference(u, scene, radio, table, ue_to_bs, boresights, fading),
            }
        })
        .collect()
}

/// Backhaul signal per SBS (`None` without a parent). With
/// `with_interference`, other donors beaming at their own children add
/// interference; otherwise the links are noise-limited.
pub fn backhaul_levels(
    scene: &Scene,
    radio: &RadioConfig,
    assoc: &AssociationMap,
    donor_boresights: &[Option<usize>],
    fading: &FadingTable,
    with_interference: bool,
) -> Result<Vec<Option<SignalLevels>>, NetworkError> {
    let m_count = scene.mbs.len();
    assoc
        .sbs_to_mbs
        .iter()
        .enumerate()
        .map(|(s, parent)| {
            let Some(parent) = *parent else { return Ok(None) };
            let rx = &scene.sbs.nodes[s];
            let donor = &scene.mbs.nodes[parent];
            let loss = radio.propagation_loss_db(&scene.path(donor, rx)?)?;
            let signal_dbm =
                radio.mbs_power_dbm + radio.mbs_antenna.main_gain_dbi + radio.sbs_antenna.main_gain_dbi - loss;
            let signal_mw = dbm_to_mw(signal_dbm) * fading.get(s, parent);
            let mut interference_mw = 0.0;
            if with_interference {
                for (m, target) in donor_boresights.iter().enumerate().take(m_count) {
                    let Some(target) = *target else { continue };
                    if m == parent {
                        continue;
                    }
                    let tx = &scene.mbs.nodes[m];
                    let tx_gain = radio.steered_gain(scene.mode, &radio.mbs_antenna, tx, &scene.sbs.nodes[target], rx);
                    let rx_gain = radio.steered_gain(scene.mode, &radio.sbs_antenna, rx, donor, tx);
                    let loss = radio.propagation_loss_db(&scene.path(tx, rx)?)?;
                    interference_mw += dbm_to_mw(radio.mbs_power_dbm + tx_gain + rx_gain - loss) * fading.get(s, m);
                }
            }
            Ok(Some(SignalLevels {
                signal_mw,
                interference_mw,
            }))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub ue_rate_bps: Vec<f64>,
    pub ue_sinr_db: Vec<f64>,
    /// Wireless backhaul rate per SBS; `None` for fiber SBSs.
    pub backhaul_rate_bps: Vec<Option<f64>>,
}

fn shannon_bps(bandwidth_hz: f64, levels: &SignalLevels, noise_figure_db: f64) -> (f64, f64) {
    let noise_mw = if bandwidth_hz > 0.0 {
        dbm_to_mw(noise_power_dbm(bandwidth_hz, noise_figure_db))
    } else {
        0.0
    };
    let sinr = levels.signal_mw / (levels.interference_mw + noise_mw);
    let rate = if bandwidth_hz > 0.0 {
        bandwidth_hz * (1.0 + sinr).log2()
    } else {
        0.0
    };
    (rate, sinr)
}

/// Shannon rates; UEs on IAB SBSs are capped by their SBS backhaul rate.
pub fn compute_rates(
    plan: &BandwidthPlan,
    mbs_count: usize,
    assoc: &AssociationMap,
    access: &[SignalLevels],
    backhaul: &[Option<SignalLevels>],
    noise_figure_db: f64,
) -> RateReport {
    let backhaul_rate_bps: Vec<Option<f64>> = assoc
        .fiber_sbs
        .iter()
        .enumerate()
        .map(|(s, &fiber)| {
            if fiber {
                None
            } else {
                Some(match &backhaul[s] {
                    Some(levels) => shannon_bps(plan.backhaul_hz[s], levels, noise_figure_db).0,
                    None => 0.0,
                })
            }
        })
        .collect();

    let mut ue_rate_bps = Vec::with_capacity(access.len());
    let mut ue_sinr_db = Vec::with_capacity(access.len());
    for (u, levels) in access.iter().enumerate() {
        let (access_rate, sinr) = shannon_bps(plan.access_hz[u], levels, noise_figure_db);
        let b = assoc.ue_to_bs[u];
        let rate = match b.checked_sub(mbs_count).and_then(|s| backhaul_rate_bps[s]) {
            Some(backhaul_rate) => access_rate.min(backhaul_rate),
            None => access_rate,
        };
        ue_rate_bps.push(rate);
        ue_sinr_db.push(10.0 * sinr.log10());
    }
    RateReport {
        ue_rate_bps,
        ue_sinr_db,
        backhaul_rate_bps,
    }
}

/// Fraction of UEs whose rate meets `threshold_bps`.
pub fn coverage_fraction(report: &RateReport, threshold_bps: f64) -> Result<f64, NetworkError> {
    if report.ue_rate_bps.is_empty() {
        return Err(NetworkError::NoUsers);
    }
    let covered = report.ue_rate_bps.iter().filter(|&&r| r >= threshold_bps).count();
    Ok(covered as f64 / report.ue_rate_bps.len() as f64)
}
