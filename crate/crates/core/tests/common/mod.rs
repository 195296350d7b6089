//! Independent straight-line re-derivation of association, bandwidth, SINR,
//! rates and coverage from a sampled layout and its recorded random draws.
//! Shares no code with the library beyond reading its outputs.

#![allow(dead_code)]

use iabsim::engine::{MuSetting, PreparedRealization, ScenarioConfig, Simulator};
use iabsim::geometry::{Point2, Segment};

const FC_GHZ: f64 = 28.0;
const G_MAIN: f64 = 24.0;
const G_SIDE: f64 = -2.0;
const HPBW: f64 = 60.0;
const RAIN_K: f64 = 0.2051;
const RAIN_BETA: f64 = 0.9679;

pub fn tiny(seed: u64, backhaul_interference: bool) -> ScenarioConfig {
    ScenarioConfig {
        radius_m: 150.0,
        mbs_density: 15.0,
        sbs_density: 45.0,
        ue_density: 110.0,
        wall_density: 400.0,
        wall_length_m: 20.0,
        tree_density: 300.0,
        tree_length_m: 15.0,
        rain_rate_mm_h: 20.0,
        fiber_fraction: 0.34,
        backhaul_interference,
        mu: MuSetting::Fixed(0.35),
        rate_threshold_bps: 150e6,
        realizations: 1,
        seed,
        ..ScenarioConfig::default()
    }
}

fn crosses(p: (Point2, Point2), q: &Segment) -> bool {
    let r = (p.1.x - p.0.x, p.1.y - p.0.y);
    let s = (q.b.x - q.a.x, q.b.y - q.a.y);
    let denom = r.0 * s.1 - r.1 * s.0;
    let qp = (q.a.x - p.0.x, q.a.y - p.0.y);
    if denom == 0.0 {
        return false;
    }
    let t = (qp.0 * s.1 - qp.1 * s.0) / denom;
    let u = (qp.0 * r.1 - qp.1 * r.0) / denom;
    (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)
}

struct World<'a> {
    c: &'a ScenarioConfig,
    p: &'a PreparedRealization,
    m: usize,
}

impl World<'_> {
    fn bs_pos(&self, b: usize) -> Point2 {
        if b < self.m {
            self.p.scene.mbs.nodes[b].position
        } else {
            self.p.scene.sbs.nodes[b - self.m].position
        }
    }

    fn bs_power(&self, b: usize) -> f64 {
        if b < self.m {
            self.c.mbs_power_dbm
        } else {
            self.c.sbs_power_dbm
        }
    }

    fn loss(&self, a: Point2, b: Point2) -> f64 {
        let d = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt().max(1.0);
        let blocked = self.p.scene.walls.segments().iter().any(|w| crosses((a, b), w));
        let alpha = if blocked { 3.0 } else { 2.0 };
        let mut total = 32.4 + 10.0 * alpha * d.log10() + 20.0 * FC_GHZ.log10();
        total += RAIN_K * self.c.rain_rate_mm_h.powf(RAIN_BETA) * d / 1000.0;
        let f_mhz = FC_GHZ * 1000.0;
        for line in self.p.scene.trees.lines() {
            if crosses((a, b), &line.grain.segment()) {
                total += if line.in_leaf {
                    0.39 * f_mhz.powf(0.39) * 5f64.powf(0.25)
                } else {
                    0.37 * f_mhz.powf(0.18) * 5f64.powf(0.59)
                };
            }
        }
        total
    }
}

fn gain(from: Point2, toward: Point2, target: Point2) -> f64 {
    let a = (toward.y - from.y).atan2(toward.x - from.x);
    let b = (target.y - from.y).atan2(target.x - from.x);
    let mut off = (b - a).to_degrees() % 360.0;
    if off > 180.0 {
        off -= 360.0;
    }
    if off < -180.0 {
        off += 360.0;
    }
    if off.abs() <= HPBW / 2.0 {
        G_MAIN
    } else {
        G_SIDE
    }
}

fn mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

fn noise_mw(bw: f64) -> f64 {
    mw(-174.0 + 10.0 * bw.log10() + 5.0)
}

pub struct Expected {
    pub ue_to_bs: Vec<usize>,
    pub sbs_to_mbs: Vec<Option<usize>>,
    pub rates: Vec<f64>,
    pub coverage: f64,
}

pub fn oracle(c: &ScenarioConfig, p: &PreparedRealization, mu: f64) -> Expected {
    let w = World {
        c,
        p,
        m: p.scene.mbs.len(),
    };
    let m = w.m;
    let n_s = p.scene.sbs.len();
    let n_b = m + n_s;
    let ues: Vec<Point2> = p.scene.ues.nodes.iter().map(|n| n.position).collect();
    let fiber = &p.association.fiber_sbs;

    let ue_to_bs: Vec<usize> = ues
        .iter()
        .map(|&u| {
            let powers: Vec<f64> = (0..n_b)
                .map(|b| w.bs_power(b) + G_MAIN - w.loss(w.bs_pos(b), u))
                .collect();
            let best = powers.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            powers.iter().position(|&x| x == best).unwrap()
        })
        .collect();

    let sbs_to_mbs: Vec<Option<usize>> = (0..n_s)
        .map(|s| {
            if fiber[s] || m == 0 {
                return None;
            }
            let sp = p.scene.sbs.nodes[s].position;
            let losses: Vec<f64> = (0..m).map(|k| w.loss(p.scene.mbs.nodes[k].position, sp)).collect();
            let best = losses.iter().cloned().fold(f64::INFINITY, f64::min);
            losses.iter().position(|&x| x == best)
        })
        .collect();

    let mut load = vec![0usize; n_b];
    for &b in &ue_to_bs {
        load[b] += 1;
    }
    let mut donor_load = vec![0usize; m];
    for s in 0..n_s {
        if let Some(d) = sbs_to_mbs[s] {
            donor_load[d] += load[m + s];
        }
    }

    let backhaul_rate: Vec<Option<f64>> = (0..n_s)
        .map(|s| {
            if fiber[s] {
                return None;
            }
            let Some(parent) = sbs_to_mbs[s] else { return Some(0.0) };
            let bw = if donor_load[parent] > 0 {
                mu * c.bandwidth_hz * load[m + s] as f64 / donor_load[parent] as f64
            } else {
                0.0
            };
            if bw == 0.0 {
                return Some(0.0);
            }
            let sp = p.scene.sbs.nodes[s].position;
            let pp = p.scene.mbs.nodes[parent].position;
            let signal = mw(c.mbs_power_dbm + 2.0 * G_MAIN - w.loss(pp, sp)) * p.backhaul_fading.get(s, parent);
            let mut interference = 0.0;
            if c.backhaul_interference {
                for d in 0..m {
                    let Some(target) = p.donor_boresights[d] else { continue };
                    if d == parent {
                        continue;
                    }
                    let dp = p.scene.mbs.nodes[d].position;
                    let tx_gain = gain(dp, p.scene.sbs.nodes[target].position, sp);
                    let rx_gain = gain(sp, pp, dp);
                    interference +=
                        mw(c.mbs_power_dbm + tx_gain + rx_gain - w.loss(dp, sp)) * p.backhaul_fading.get(s, d);
                }
            }
            Some(bw * (1.0 + signal / (interference + noise_mw(bw))).log2())
        })
        .collect();

    let rates: Vec<f64> = ues
        .iter()
        .enumerate()
        .map(|(u, &up)| {
            let serving = ue_to_bs[u];
            let bw = (1.0 - mu) * c.bandwidth_hz / load[serving] as f64;
            let access = if bw == 0.0 {
                0.0
            } else {
                let signal =
                    mw(w.bs_power(serving) + G_MAIN - w.loss(w.bs_pos(serving), up)) * p.access_fading.get(u, serving);
                let mut interference = 0.0;
                for b in 0..n_b {
                    if b == serving || load[b] == 0 {
                        continue;
                    }
                    let target = ues[p.boresights[b].expect("loaded BS has a beam")];
                    let g = gain(w.bs_pos(b), target, up);
                    interference += mw(w.bs_power(b) + g - w.loss(w.bs_pos(b), up)) * p.access_fading.get(u, b);
                }
                bw * (1.0 + signal / (interference + noise_mw(bw))).log2()
            };
            match serving.checked_sub(m).and_then(|s| backhaul_rate[s]) {
                Some(cap) => access.min(cap),
                None => access,
            }
        })
        .collect();
    let coverage = rates.iter().filter(|&&r| r >= c.rate_threshold_bps).count() as f64 / rates.len() as f64;
    Expected {
        ue_to_bs,
        sbs_to_mbs,
        rates,
        coverage,
    }
}

pub fn assert_close(a: f64, b: f64) {
    let scale = a.abs().max(b.abs()).max(1e-300);
    assert!((a - b).abs() / scale <= 1e-9 || (a == 0.0 && b == 0.0), "{a} vs {b}");
}

pub fn check(c: &ScenarioConfig, seed: u64) -> bool {
    let sim = Simulator::new(c.clone()).unwrap();
    let p = sim.prepare(seed).unwrap();
    let n_bs = p.scene.bs_count();
    let n_ue = p.scene.ues.len();
    if n_bs == 0 || n_bs > 6 || n_ue == 0 || n_ue > 10 {
        return false;
    }
    for mu in [0.0, 0.2, 0.35, 0.8] {
        let expected = oracle(c, &p, mu);
        let got = sim.evaluate(&p, mu);
        assert_eq!(p.association.ue_to_bs, expected.ue_to_bs, "seed {seed}");
        if !p.scene.mbs.is_empty() {
            assert_eq!(p.association.sbs_to_mbs, expected.sbs_to_mbs, "seed {seed}");
        }
        for (a, b) in got.ue_rate_bps.iter().zip(&expected.rates) {
            assert_close(*a, *b);
        }
        assert_eq!(got.coverage, Some(expected.coverage));
    }
    true
}
