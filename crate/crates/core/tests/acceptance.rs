//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs with 1000 realizations per estimate. `IABSIM_ACCEPTANCE_REALIZATIONS`
//! lowers the count for quick local iterations; the value in use is printed on
//! every line. Exits non-zero when any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use iabsim::engine::{default_mu_grid, sweep, CoverageResult, MuSetting, ScenarioConfig, Simulator, SweepAxis};
use iabsim::network::Mode;
use iabsim::propagation::{
    foliage_loss_db, noise_power_dbm, path_loss_db, rain_coefficients, rain_loss_db, ChannelParams, Polarization,
};

const SEED: u64 = 20_240_601;

struct Suite {
    realizations: usize,
    outcomes: Vec<(String, bool)>,
}

impl Suite {
    fn report(&mut self, id: &str, passed: bool, detail: String) {
        println!(
            "[{}] {id}: {detail} (n={})",
            if passed { "PASS" } else { "FAIL" },
            self.realizations
        );
        self.outcomes.push((id.to_string(), passed));
    }

    fn dense(&self) -> ScenarioConfig {
        ScenarioConfig {
            realizations: self.realizations,
            seed: SEED,
            ..ScenarioConfig::default()
        }
    }

    fn suburban(&self) -> ScenarioConfig {
        ScenarioConfig {
            mbs_count: Some(1),
            sbs_density: 3.0,
            ue_density: 50.0,
            wall_density: 0.0,
            mbs_power_dbm: 45.0,
            sbs_power_dbm: 33.0,
            ..self.dense()
        }
    }

    fn elevated(&self, sbs_density: f64) -> ScenarioConfig {
        ScenarioConfig {
            mode: Mode::Elevated,
            radius_m: 500.0,
            sbs_density,
            ..self.dense()
        }
    }
}

fn estimate(c: &ScenarioConfig) -> CoverageResult {
    Simulator::new(c.clone())
        .and_then(|s| s.run_monte_carlo())
        .expect("estimate")
}

fn fmt(r: &CoverageResult) -> String {
    format!("{:.3}±{:.3} (mu {:.2})", r.coverage, r.ci_half_width, r.mu)
}

fn within(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol
}

fn not_below(lower: &CoverageResult, upper: &CoverageResult) -> bool {
    upper.coverage >= lower.coverage - (lower.ci_half_width + upper.ci_half_width)
}

fn dense_anchor(s: &mut Suite) {
    let r65 = estimate(&ScenarioConfig {
        sbs_density: 65.0,
        ..s.dense()
    });
    let r85 = estimate(&ScenarioConfig {
        sbs_density: 85.0,
        ..s.dense()
    });
    let ok = within(r65.coverage, 0.76, 0.07) && within(r85.coverage, 0.81, 0.07);
    s.report(
        "1 all-IAB dense anchor",
        ok,
        format!(
            "rho(65/km2)={} target 0.76±0.07; rho(85/km2)={} target 0.81±0.07",
            fmt(&r65),
            fmt(&r85)
        ),
    );
}

/// Dense defaults over the whole mu grid; shared by criteria 2, 3 and 7.
fn dense_grid(s: &Suite) -> Vec<CoverageResult> {
    let c = s.dense();
    Simulator::new(c.clone())
        .and_then(|sim| sim.evaluate_mus(&c.mu_grid, 0))
        .expect("dense grid")
}

fn best(results: &[CoverageResult]) -> CoverageResult {
    let mut best = results[0].clone();
    for r in &results[1..] {
        if r.coverage > best.coverage {
            best = r.clone();
        }
    }
    best
}

fn backhaul_interference(s: &mut Suite, off: &CoverageResult) {
    let on = estimate(&ScenarioConfig {
        backhaul_interference: true,
        ..s.dense()
    });
    let gap = (on.coverage - off.coverage).abs();
    s.report(
        "2 backhaul interference negligible",
        gap <= 0.02,
        format!("rho(on)={} rho(off)={} |gap|={gap:.3} <= 0.02", fmt(&on), fmt(off)),
    );
}

fn blockage(s: &mut Suite, walls: &CoverageResult) {
    let open = estimate(&ScenarioConfig {
        wall_density: 0.0,
        ..s.dense()
    });
    let gap = (walls.coverage - open.coverage).abs();
    s.report(
        "3 blockage barely matters when dense",
        gap <= 0.05,
        format!(
            "rho(500/km2, 5 m)={} rho(no walls)={} |gap|={gap:.3} <= 0.05",
            fmt(walls),
            fmt(&open)
        ),
    );
}

fn rain(s: &mut Suite) {
    let urban = ScenarioConfig {
        ue_density: 700.0,
        mbs_power_dbm: 45.0,
        sbs_power_dbm: 33.0,
        ..s.dense()
    };
    let table = sweep(&urban, SweepAxis::RainRate, &[0.0, 50.0], true).expect("urban rain");
    let urban_gap = (table[1].1.coverage - table[0].1.coverage).abs();
    let table_s = sweep(&s.suburban(), SweepAxis::RainRate, &[0.0, 50.0], true).expect("suburban rain");
    let drop = table_s[0].1.coverage - table_s[1].1.coverage;
    s.report(
        "4 rain at 28 GHz",
        urban_gap <= 0.03 && drop > 0.0 && drop <= 0.10,
        format!(
            "urban rho(0)={} rho(50 mm/h)={} |gap|={urban_gap:.3} <= 0.03; suburban rho(0)={} rho(50 mm/h)={} drop={drop:.3} in (0, 0.10]",
            fmt(&table[0].1),
            fmt(&table[1].1),
            fmt(&table_s[0].1),
            fmt(&table_s[1].1)
        ),
    );
}

fn foliage(s: &mut Suite) {
    let bare = ScenarioConfig {
        rate_threshold_bps: 50e6,
        ..s.suburban()
    };
    let treed = ScenarioConfig {
        tree_density: 250.0,
        tree_length_m: 15.0,
        ..bare.clone()
    };
    let a = estimate(&bare);
    let b = estimate(&treed);
    let drop = a.coverage - b.coverage;
    s.report(
        "5 suburban foliage anchor",
        within(a.coverage, 0.70, 0.07) && within(b.coverage, 0.60, 0.07) && drop >= 0.05,
        format!(
            "rho(no trees)={} target 0.70±0.07; rho(l_T=15 m, 250/km2)={} target 0.60±0.07; drop={drop:.3} >= 0.05",
            fmt(&a),
            fmt(&b)
        ),
    );
}

fn hop_lengths(s: &mut Suite) {
    let mut ok = true;
    let mut parts = Vec::new();
    for (density, target) in [(100.0, 100.0), (50.0, 160.0), (8.0, 450.0), (3.0, 900.0)] {
        // urban donor layout for the short hops, a single donor for the long ones
        let base = if density >= 50.0 { s.dense() } else { s.suburban() };
        let c = ScenarioConfig {
            sbs_density: density,
            ..base
        };
        let hop = Simulator::new(c)
            .and_then(|sim| sim.mean_hop_length())
            .expect("hop")
            .unwrap_or(f64::NAN);
        let good = (hop - target).abs() <= 0.2 * target;
        ok &= good;
        parts.push(format!(
            "lambda_S={density}: {hop:.0} m vs {target} m±20% {}",
            if good { "ok" } else { "off" }
        ));
    }
    s.report("6 hop-length mapping", ok, parts.join("; "));
}

fn mu_shape(s: &mut Suite, grid: &[CoverageResult]) {
    let top = best(grid);
    let first = &grid[0];
    let last = grid.last().unwrap();
    let ok = first.mu == 0.0
        && last.mu == 1.0
        && first.coverage < top.coverage
        && last.coverage < top.coverage
        && last.coverage == 0.0;
    let curve: Vec<String> = grid.iter().map(|r| format!("{:.2}", r.coverage)).collect();
    s.report(
        "7 mu sweep shape",
        ok,
        format!(
            "rho(0)={:.3} rho(1)={:.3} max={:.3} at mu={:.2}; curve [{}]",
            first.coverage,
            last.coverage,
            top.coverage,
            top.mu,
            curve.join(" ")
        ),
    );
}

fn heights(s: &mut Suite) {
    let heights = [5.0, 10.0, 15.0];
    let low = sweep(&s.elevated(30.0), SweepAxis::SbsHeight, &heights, true).expect("3d low");
    let high = sweep(&s.elevated(100.0), SweepAxis::SbsHeight, &heights, true).expect("3d high");
    let monotone = low.windows(2).all(|w| not_below(&w[0].1, &w[1].1));
    let effect = |t: &[(f64, CoverageResult)]| t[2].1.coverage - t[0].1.coverage;
    let shrinks = effect(&high) < effect(&low);
    let show = |t: &[(f64, CoverageResult)]| {
        t.iter()
            .map(|(v, r)| format!("v={v}: {}", fmt(r)))
            .collect::<Vec<_>>()
            .join(", ")
    };
    s.report(
        "8 SBS height in 3D",
        monotone && shrinks,
        format!(
            "lambda_S=30: [{}]; lambda_S=100: [{}]; effect(15-5 m) {:.3} -> {:.3}",
            show(&low),
            show(&high),
            effect(&low),
            effect(&high)
        ),
    );
}

fn property_suite(s: &mut Suite) {
    let mut failures = Vec::new();
    // arithmetic anchors
    let ch = ChannelParams::default();
    let near = |a: f64, b: f64, tol: f64| (a - b).abs() <= tol;
    let rain = rain_coefficients(28.0, Polarization::Horizontal).unwrap();
    let checks = [
        (
            "path loss LOS 10 m",
            path_loss_db(10.0, true, &ch).unwrap(),
            32.4 + 20.0 + 20.0 * 28f64.log10(),
        ),
        (
            "path loss NLOS 100 m",
            path_loss_db(100.0, false, &ch).unwrap(),
            32.4 + 60.0 + 20.0 * 28f64.log10(),
        ),
        (
            "rain 25 mm/h over 1 km",
            rain_loss_db(25.0, 1000.0, &rain).unwrap(),
            0.2051 * 25f64.powf(0.9679),
        ),
        (
            "in-leaf crossing",
            foliage_loss_db(&[true], 5.0, 28_000.0),
            0.39 * 28_000f64.powf(0.39) * 5f64.powf(0.25),
        ),
        ("noise over 100 MHz", noise_power_dbm(100e6, 5.0), -174.0 + 80.0 + 5.0),
    ];
    for (name, got, want) in checks {
        if !near(got, want, 1e-9) {
            failures.push(format!("{name}: {got} vs {want}"));
        }
    }
    // small-instance oracle
    let mut instances = 0;
    for seed in 0..200 {
        for flag in [false, true] {
            let ok = std::panic::catch_unwind(|| common::check(&common::tiny(0, flag), seed));
            match ok {
                Ok(true) => instances += 1,
                Ok(false) => {}
                Err(_) => failures.push(format!("oracle mismatch at seed {seed}")),
            }
        }
    }
    // bit-exact determinism under a fixed seed and worker count
    let c = ScenarioConfig {
        radius_m: 300.0,
        realizations: 16,
        mu: MuSetting::Fixed(0.2),
        ..s.dense()
    };
    let run = |workers| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .unwrap()
            .install(|| estimate(&c))
    };
    let a = run(2);
    if a != run(2) || a != run(1) {
        failures.push("determinism".into());
    }
    s.report(
        "P property suites",
        failures.is_empty() && instances > 0,
        format!(
            "arithmetic anchors, {instances} oracle instances, repeat runs bit-identical; failures: [{}]",
            failures.join("; ")
        ),
    );
}

fn main() -> ExitCode {
    let realizations = std::env::var("IABSIM_ACCEPTANCE_REALIZATIONS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(1000);
    let mut suite = Suite {
        realizations,
        outcomes: Vec::new(),
    };
    let started = Instant::now();
    assert_eq!(suite.dense().mu_grid, default_mu_grid());

    property_suite(&mut suite);
    hop_lengths(&mut suite);
    foliage(&mut suite);
    let grid = dense_grid(&suite);
    let dense_best = best(&grid);
    mu_shape(&mut suite, &grid);
    blockage(&mut suite, &dense_best);
    backhaul_interference(&mut suite, &dense_best);
    dense_anchor(&mut suite);
    rain(&mut suite);
    heights(&mut suite);

    let passed = suite.outcomes.iter().filter(|(_, ok)| *ok).count();
    println!(
        "acceptance: {passed}/{} criteria passed in {:.0?}",
        suite.outcomes.len(),
        started.elapsed()
    );
    if passed == suite.outcomes.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
