//! Link budget: close-in path loss, sectored antenna gain, rain and
//! foliage attenuation, Rayleigh fading and received power.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Free-space loss at the 1 m close-in reference, frequency term excluded.
pub const CLOSE_IN_REFERENCE_DB: f64 = 32.4;

/// Thermal noise density at 290 K.
pub const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropagationError {
    #[error("invalid distance {0} m")]
    InvalidDistance(f64),
    #[error("invalid parameter `{name}`: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub carrier_ghz: f64,
    pub alpha_los: f64,
    pub alpha_nlos: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            carrier_ghz: 28.0,
            alpha_los: 2.0,
            alpha_nlos: 3.0,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<(), PropagationError> {
        if !(self.carrier_ghz > 0.0) {
            return Err(PropagationError::InvalidParameter {
                name: "carrier_ghz",
                value: self.carrier_ghz,
            });
        }
        if !(self.alpha_los >= 1.0) {
            return Err(PropagationError::InvalidParameter {
                name: "alpha_los",
                value: self.alpha_los,
            });
        }
        if !(self.alpha_nlos >= self.alpha_los) {
            return Err(PropagationError::InvalidParameter {
                name: "alpha_nlos",
                value: self.alpha_nlos,
            });
        }
        Ok(())
    }

    pub fn carrier_mhz(&self) -> f64 {
        self.carrier_ghz * 1000.0
    }
}

/// Close-in path loss in dB. Distances under 1 m are clamped to 1 m.
pub fn path_loss_db(distance: f64, los: bool, params: &ChannelParams) -> Result<f64, PropagationError> {
    if !(distance > 0.0) || !distance.is_finite() {
        return Err(PropagationError::InvalidDistance(distance));
    }
    let alpha = if los { params.alpha_los } else { params.alpha_nlos };
    Ok(CLOSE_IN_REFERENCE_DB + 10.0 * alpha * distance.max(1.0).log10() + 20.0 * params.carrier_ghz.log10())
}

/// Sectored (flat-top) antenna pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AntennaPattern {
    pub main_gain_dbi: f64,
    pub side_gain_dbi: f64,
    pub hpbw_deg: f64,
}

impl AntennaPattern {
    pub const BASE_STATION: AntennaPattern = AntennaPattern {
        main_gain_dbi: 24.0,
        side_gain_dbi: -2.0,
        hpbw_deg: 60.0,
    };

    /// Omnidirectional 0 dBi user terminal.
    pub const OMNI: AntennaPattern = AntennaPattern {
        main_gain_dbi: 0.0,
        side_gain_dbi: 0.0,
        hpbw_deg: 360.0,
    };

    pub fn validate(&self) -> Result<(), PropagationError> {
        if !(self.main_gain_dbi >= self.side_gain_dbi) {
            return Err(PropagationError::InvalidParameter {
                name: "side_gain_dbi",
                value: self.side_gain_dbi,
            });
        }
        if !(self.hpbw_deg > 0.0 && self.hpbw_deg <= 360.0) {
            return Err(PropagationError::InvalidParameter {
                name: "hpbw_deg",
                value: self.hpbw_deg,
            });
        }
        Ok(())
    }

    /// Gain at an azimuth offset (degrees) from boresight.
    pub fn gain_db(&self, offset_deg: f64) -> f64 {
        if normalize_deg(offset_deg).abs() <= 0.5 * self.hpbw_deg {
            self.main_gain_dbi
        } else {
            self.side_gain_dbi
        }
    }

    /// 3D variant: main lobe only inside both the azimuth and the elevation
    /// half-power windows.
    pub fn gain_3d_db(&self, azimuth_offset_deg: f64, elevation_offset_deg: f64, elevation_hpbw_deg: f64) -> f64 {
        if normalize_deg(azimuth_offset_deg).abs() <= 0.5 * self.hpbw_deg
            && elevation_offset_deg.abs() <= 0.5 * elevation_hpbw_deg
        {
            self.main_gain_dbi
        } else {
            self.side_gain_dbi
        }
    }
}

/// Wraps an angle to `[-180, 180]`.
pub fn normalize_deg(angle: f64) -> f64 {
    let a = (angle + 180.0).rem_euclid(360.0) - 180.0;
    if a == -180.0 && angle > 0.0 {
        180.0
    } else {
        a
    }
}

/// Free-function form of [`AntennaPattern::gain_db`].
pub fn antenna_gain_db(offset_deg: f64, pattern: &AntennaPattern) -> f64 {
    pattern.gain_db(offset_deg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Polarization {
    #[default]
    Horizontal,
    Vertical,
}

/// Specific-attenuation coefficients `k`, `β` for one polarization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RainCoefficients {
    pub k: f64,
    pub beta: f64,
}

struct RainRow {
    frequency_ghz: f64,
    k_h: f64,
    beta_h: f64,
    k_v: f64,
    beta_v: f64,
}

// ITU-R P.838-3 rows shipped with the simulator.
const RAIN_TABLE: &[RainRow] = &[RainRow {
    frequency_ghz: 28.0,
    k_h: 0.2051,
    beta_h: 0.9679,
    k_v: 0.1964,
    beta_v: 0.9277,
}];

/// Looks up the built-in coefficients for an exact carrier frequency.
pub fn rain_coefficients(frequency_ghz: f64, polarization: Polarization) -> Option<RainCoefficients> {
    RAIN_TABLE
        .iter()
        .find(|row| (row.frequency_ghz - frequency_ghz).abs() < 1e-9)
        .map(|row| match polarization {
            Polarization::Horizontal => RainCoefficients {
                k: row.k_h,
                beta: row.beta_h,
            },
            Polarization::Vertical => RainCoefficients {
                k: row.k_v,
                beta: row.beta_v,
            },
        })
}

/// Rain attenuation over a path of `distance` meters at `rate` mm/h.
pub fn rain_loss_db(rate: f64, distance: f64, coeffs: &RainCoefficients) -> Result<f64, PropagationError> {
    if !(rate >= 0.0) {
        return Err(PropagationError::InvalidParameter {
            name: "rain_rate",
            value: rate,
        });
    }
    if rate == 0.0 {
        return Ok(0.0);
    }
    Ok(coeffs.k * rate.powf(coeffs.beta) * distance / 1000.0)
}

/// Fitted ITU-R vegetation loss for one tree line.
pub fn tree_line_loss_db(in_leaf: bool, depth: f64, carrier_mhz: f64) -> f64 {
    if in_leaf {
        0.39 * carrier_mhz.powf(0.39) * depth.powf(0.25)
    } else {
        0.37 * carrier_mhz.powf(0.18) * depth.powf(0.59)
    }
}

/// Total foliage loss summed over every crossed tree line.
pub fn foliage_loss_db(crossings: &[bool], depth: f64, carrier_mhz: f64) -> f64 {
    if crossings.is_empty() || depth == 0.0 {
        return 0.0;
    }
    let in_leaf = tree_line_loss_db(true, depth, carrier_mhz);
    let out_of_leaf = tree_line_loss_db(false, depth, carrier_mhz);
    crossings
        .iter()
        .map(|&leaf| if leaf { in_leaf } else { out_of_leaf })
        .sum()
}

/// Unit-mean exponential power gain (|h|² of Rayleigh fading).
pub fn sample_fading_power<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}

pub fn noise_power_dbm(bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    THERMAL_NOISE_DBM_PER_HZ + 10.0 * bandwidth_hz.log10() + noise_figure_db
}

#[inline]
pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

#[inline]
pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// Inputs for one link's budget other than the transmit power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkInputs {
    pub distance: f64,
    pub los: bool,
    pub tx_gain_dbi: f64,
    pub rx_gain_dbi: f64,
    pub rain_loss_db: f64,
    pub foliage_loss_db: f64,
    pub fading_power: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub distance: f64,
    pub los: bool,
    pub tx_power_dbm: f64,
    pub pathloss_db: f64,
    pub tx_gain_dbi: f64,
    pub rx_gain_dbi: f64,
    pub rain_loss_db: f64,
    pub foliage_loss_db: f64,
    pub fading_power: f64,
    pub received_power_dbm: f64,
}

impl LinkBudget {
    /// Received power recomputed from the stored components.
    pub fn recompose_dbm(&self) -> f64 {
        self.tx_power_dbm + self.tx_gain_dbi + self.rx_gain_dbi
            - self.pathloss_db
            - self.rain_loss_db
            - self.foliage_loss_db
            + 10.0 * self.fading_power.log10()
    }
}

pub fn received_power_dbm(
    tx_power_dbm: f64,
    inputs: &LinkInputs,
    params: &ChannelParams,
) -> Result<LinkBudget, PropagationError> {
    let pathloss_db = path_loss_db(inputs.distance, inputs.los, params)?;
    let mut budget = LinkBudget {
        distance: inputs.distance,
        los: inputs.los,
        tx_power_dbm,
        pathloss_db,
        tx_gain_dbi: inputs.tx_gain_dbi,
        rx_gain_dbi: inputs.rx_gain_dbi,
        rain_loss_db: inputs.rain_loss_db,
        foliage_loss_db: inputs.foliage_loss_db,
        fading_power: inputs.fading_power,
        received_power_dbm: 0.0,
    };
    budget.received_power_dbm = budget.recompose_dbm();
    Ok(budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const CH: ChannelParams = ChannelParams {
        carrier_ghz: 28.0,
        alpha_los: 2.0,
        alpha_nlos: 3.0,
    };

    // direct arithmetic: 32.4 + 10 a log10 r + 20 log10 28
    fn oracle_pl(r: f64, a: f64) -> f64 {
        32.4 + 10.0 * a * r.log10() + 20.0 * 28f64.log10()
    }

    #[test]
    fn path_loss_examples() {
        assert_abs_diff_eq!(path_loss_db(1.0, true, &CH).unwrap(), 61.34, epsilon = 0.005);
        assert_abs_diff_eq!(
            path_loss_db(1.0, false, &CH).unwrap(),
            oracle_pl(1.0, 3.0),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(path_loss_db(100.0, true, &CH).unwrap(), 101.34, epsilon = 0.005);
        assert_abs_diff_eq!(path_loss_db(100.0, false, &CH).unwrap(), 121.34, epsilon = 0.005);
        assert_abs_diff_eq!(
            path_loss_db(100.0, false, &CH).unwrap(),
            oracle_pl(100.0, 3.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn path_loss_distance_domain() {
        assert_eq!(
            path_loss_db(0.0, true, &CH),
            Err(PropagationError::InvalidDistance(0.0))
        );
        assert!(path_loss_db(-3.0, true, &CH).is_err());
        assert_eq!(
            path_loss_db(0.2, false, &CH).unwrap(),
            path_loss_db(1.0, false, &CH).unwrap()
        );
    }

    #[test]
    fn antenna_examples() {
        let bs = AntennaPattern::BASE_STATION;
        assert_eq!(bs.gain_db(0.0), 24.0);
        assert_eq!(bs.gain_db(29.0), 24.0);
        assert_eq!(bs.gain_db(-30.0), 24.0);
        assert_eq!(bs.gain_db(31.0), -2.0);
        assert_eq!(bs.gain_db(359.0), 24.0);
        assert_eq!(antenna_gain_db(180.0, &bs), -2.0);
        assert_eq!(AntennaPattern::OMNI.gain_db(123.0), 0.0);
        assert_eq!(bs.gain_3d_db(10.0, 12.0, 25.0), 24.0);
        assert_eq!(bs.gain_3d_db(10.0, 13.0, 25.0), -2.0);
        assert_eq!(bs.gain_3d_db(31.0, 0.0, 25.0), -2.0);
    }

    #[test]
    fn rain_examples() {
        let h = rain_coefficients(28.0, Polarization::Horizontal).unwrap();
        let v = rain_coefficients(28.0, Polarization::Vertical).unwrap();
        assert_eq!(rain_loss_db(0.0, 1000.0, &h).unwrap(), 0.0);
        let oracle_h = 0.2051 * 25f64.powf(0.9679);
        let oracle_v = 0.1964 * 50f64.powf(0.9277);
        assert_abs_diff_eq!(rain_loss_db(25.0, 1000.0, &h).unwrap(), oracle_h, epsilon = 1e-12);
        assert_abs_diff_eq!(rain_loss_db(25.0, 1000.0, &h).unwrap(), 4.62, epsilon = 0.01);
        assert_abs_diff_eq!(rain_loss_db(50.0, 1000.0, &v).unwrap(), oracle_v, epsilon = 1e-12);
        assert_abs_diff_eq!(rain_loss_db(50.0, 1000.0, &v).unwrap(), 7.40, epsilon = 0.01);
        assert!(rain_loss_db(-1.0, 10.0, &h).is_err());
        assert!(rain_coefficients(73.0, Polarization::Horizontal).is_none());
    }

    #[test]
    fn foliage_examples() {
        assert_eq!(foliage_loss_db(&[], 5.0, 28_000.0), 0.0);
        let in_leaf = 0.39 * 28_000f64.powf(0.39) * 5f64.powf(0.25);
        let out_leaf = 0.37 * 28_000f64.powf(0.18) * 5f64.powf(0.59);
        assert_abs_diff_eq!(foliage_loss_db(&[true], 5.0, 28_000.0), in_leaf, epsilon = 1e-12);
        assert_abs_diff_eq!(foliage_loss_db(&[true], 5.0, 28_000.0), 31.6, epsilon = 0.05);
        assert_abs_diff_eq!(foliage_loss_db(&[false], 5.0, 28_000.0), 6.04, epsilon = 0.01);
        assert_abs_diff_eq!(
            foliage_loss_db(&[true, false, true], 5.0, 28_000.0),
            2.0 * in_leaf + out_leaf,
            epsilon = 1e-12
        );
    }

    #[test]
    fn fading_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut above = 0usize;
        for _ in 0..n {
            let h = sample_fading_power(&mut rng);
            assert!(h >= 0.0);
            sum += h;
            if h > 1.0 {
                above += 1;
            }
        }
        assert_abs_diff_eq!(sum / n as f64, 1.0, epsilon = 0.01);
        assert_abs_diff_eq!(above as f64 / n as f64, (-1f64).exp(), epsilon = 0.005);
    }

    fn inputs(distance: f64, tx_gain: f64, fading: f64) -> LinkInputs {
        LinkInputs {
            distance,
            los: true,
            tx_gain_dbi: tx_gain,
            rx_gain_dbi: 0.0,
            rain_loss_db: 0.0,
            foliage_loss_db: 0.0,
            fading_power: fading,
        }
    }

    #[test]
    fn received_power_examples() {
        let sbs = received_power_dbm(24.0, &inputs(10.0, 24.0, 1.0), &CH).unwrap();
        assert_abs_diff_eq!(
            sbs.received_power_dbm,
            24.0 + 24.0 - oracle_pl(10.0, 2.0),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(sbs.received_power_dbm, -33.34, epsilon = 0.005);
        let mbs = received_power_dbm(40.0, &inputs(100.0, 24.0, 1.0), &CH).unwrap();
        assert_abs_diff_eq!(mbs.received_power_dbm, -37.34, epsilon = 0.005);
        let bare = received_power_dbm(30.0, &inputs(57.0, 0.0, 1.0), &CH).unwrap();
        assert_eq!(bare.received_power_dbm, 30.0 - path_loss_db(57.0, true, &CH).unwrap());
        assert!(received_power_dbm(30.0, &inputs(0.0, 0.0, 1.0), &CH).is_err());
    }

    #[test]
    fn fading_average_matches_unit_fading() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let base = received_power_dbm(40.0, &inputs(120.0, 24.0, 1.0), &CH).unwrap();
        let n = 100_000;
        let mean_mw: f64 = (0..n)
            .map(|_| {
                let h = sample_fading_power(&mut rng);
                dbm_to_mw(
                    received_power_dbm(40.0, &inputs(120.0, 24.0, h), &CH)
                        .unwrap()
                        .received_power_dbm,
                )
            })
            .sum::<f64>()
            / n as f64;
        assert_abs_diff_eq!(mw_to_dbm(mean_mw), base.received_power_dbm, epsilon = 0.1);
    }

    #[test]
    fn noise_floor() {
        // 1 GHz, 5 dB figure: -174 + 90 + 5
        assert_abs_diff_eq!(noise_power_dbm(1e9, 5.0), -79.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn path_loss_monotone(r in 1.0f64..5000.0, dr in 0.01f64..100.0, f in 1.0f64..100.0, df in 0.01f64..10.0) {
            let p = ChannelParams { carrier_ghz: f, ..CH };
            let q = ChannelParams { carrier_ghz: f + df, ..CH };
            for los in [true, false] {
                prop_assert!(path_loss_db(r + dr, los, &p).unwrap() > path_loss_db(r, los, &p).unwrap());
                prop_assert!(path_loss_db(r, los, &q).unwrap() > path_loss_db(r, los, &p).unwrap());
            }
            prop_assert!(path_loss_db(r, false, &p).unwrap() >= path_loss_db(r, true, &p).unwrap());
        }

        #[test]
        fn rain_monotone(rate in 0.1f64..150.0, dr in 0.01f64..10.0, d in 1.0f64..3000.0, dd in 0.1f64..100.0) {
            let h = rain_coefficients(28.0, Polarization::Horizontal).unwrap();
            prop_assert!(rain_loss_db(rate + dr, d, &h).unwrap() > rain_loss_db(rate, d, &h).unwrap());
            prop_assert!(rain_loss_db(rate, d + dd, &h).unwrap() > rain_loss_db(rate, d, &h).unwrap());
        }

        #[test]
        fn budget_recomposes(
            pt in -10.0f64..50.0, d in 0.5f64..3000.0, los: bool,
            gt in -5.0f64..30.0, gr in -5.0f64..30.0,
            rain in 0.0f64..20.0, fol in 0.0f64..60.0, h in 1e-6f64..20.0,
        ) {
            let b = received_power_dbm(pt, &LinkInputs {
                distance: d, los, tx_gain_dbi: gt, rx_gain_dbi: gr,
                rain_loss_db: rain, foliage_loss_db: fol, fading_power: h,
            }, &CH).unwrap();
            prop_assert!((b.recompose_dbm() - b.received_power_dbm).abs() < 1e-9);
        }

        #[test]
        fn normalized_angle_in_range(a in -2000.0f64..2000.0) {
            let n = normalize_deg(a);
            prop_assert!((-180.0..=180.0).contains(&n));
            let k = ((a - n) / 360.0).round();
            prop_assert!((a - n - 360.0 * k).abs() < 1e-9);
        }
    }
}
