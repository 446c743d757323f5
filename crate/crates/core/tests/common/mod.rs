#![allow(dead_code)]

use irs_coord::harness::default_scenario;
use irs_coord::model::{Instance, SystemConfig, C64};
use irs_coord::report::SolveReport;

/// Two single-antenna BSs, one user each, and a one-unit IRS.
pub fn tiny_config() -> SystemConfig {
    let mut cfg = default_scenario();
    cfg.cells = 2;
    cfg.antennas = 1;
    cfg.irs_units = 1;
    cfg.users_per_cell.truncate(2);
    cfg.power_w.truncate(2);
    cfg.weights.truncate(2);
    cfg.noise_w.truncate(2);
    cfg.bs_positions.truncate(2);
    cfg.user_positions.truncate(2);
    cfg
}

pub fn tiny_instance(seed: u64) -> Instance {
    Instance::sample(&tiny_config(), seed).unwrap()
}

pub fn with_irs_units(n: usize) -> SystemConfig {
    SystemConfig {
        irs_units: n,
        ..default_scenario()
    }
}

/// Per-BS power and unit-disk limits on a returned solution.
pub fn hygiene(cfg: &SystemConfig, rep: &SolveReport) -> Result<(), String> {
    for b in 0..cfg.cells {
        let p = rep.beams.bs_power(b);
        if p > cfg.power_w[b] * (1.0 + 1e-6) {
            return Err(format!("{}: BS {b} transmits {p:.6e} W over {:.6e} W", rep.algorithm, cfg.power_w[b]));
        }
    }
    let vmax = rep.reflect.max_modulus();
    if vmax > 1.0 + 1e-9 {
        return Err(format!("{}: reflection modulus {vmax}", rep.algorithm));
    }
    Ok(())
}

pub const POWER_STEPS: usize = 51;
pub const PHASES: usize = 720;
pub const AMPLITUDES: usize = 21;

/// Scalar channel gains `|a_im|^2` of the tiny instance at reflection `v`,
/// built directly from the sampled links.
pub fn tiny_gains(inst: &Instance, v: C64) -> [[f64; 2]; 2] {
    let ch = &inst.channels;
    let mut out = [[0.0; 2]; 2];
    for (i, row) in out.iter_mut().enumerate() {
        for (m, g) in row.iter_mut().enumerate() {
            // conj(conj(f) G) v + h
            let a = ch.f[m][0] * ch.g[i][(0, 0)].conj() * v + ch.h[i][m][0];
            *g = a.norm_sqr();
        }
    }
    out
}

/// Best min-SINR over the power grid for fixed gains.
pub fn power_grid_max(gain: &[[f64; 2]; 2], p_max: [f64; 2], noise: [f64; 2]) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..POWER_STEPS {
        let p0 = p_max[0] * i as f64 / (POWER_STEPS - 1) as f64;
        for j in 0..POWER_STEPS {
            let p1 = p_max[1] * j as f64 / (POWER_STEPS - 1) as f64;
            let s0 = p0 * gain[0][0] / (p1 * gain[1][0] + noise[0]);
            let s1 = p1 * gain[1][1] / (p0 * gain[0][1] + noise[1]);
            best = best.max(s0.min(s1));
        }
    }
    best
}

/// Max-min SINR with one BS at full power, searched finely along both edges.
/// The max-min optimum always lies on one of them.
pub fn edge_power_max(gain: &[[f64; 2]; 2], p_max: [f64; 2], noise: [f64; 2]) -> f64 {
    let steps = 100_000;
    let mut best: f64 = 0.0;
    for i in 0..=steps {
        let x = i as f64 / steps as f64;
        for (p0, p1) in [(p_max[0], x * p_max[1]), (x * p_max[0], p_max[1])] {
            let s0 = p0 * gain[0][0] / (p1 * gain[1][0] + noise[0]);
            let s1 = p1 * gain[1][1] / (p0 * gain[0][1] + noise[1]);
            best = best.max(s0.min(s1));
        }
    }
    best
}

/// The transmit solver agrees with the 51-point grid within 2%, or beats it
/// and then agrees with the fine edge search.
pub fn transmit_matches(solver: f64, gain: &[[f64; 2]; 2], p_max: [f64; 2], noise: [f64; 2]) -> bool {
    let coarse = power_grid_max(gain, p_max, noise);
    if (solver - coarse).abs() <= 0.02 * coarse {
        return true;
    }
    let fine = edge_power_max(gain, p_max, noise);
    solver > coarse && (solver - fine).abs() <= 1e-3 * fine
}

pub fn tiny_budgets(inst: &Instance) -> ([f64; 2], [f64; 2]) {
    let cfg = &inst.config;
    ([cfg.power_w[0], cfg.power_w[1]], [cfg.noise_w[0][0], cfg.noise_w[1][0]])
}

pub fn grid_oracle(inst: &Instance) -> f64 {
    let (p, s) = tiny_budgets(inst);
    let mut best: f64 = 0.0;
    for a in 0..AMPLITUDES {
        let beta = a as f64 / (AMPLITUDES - 1) as f64;
        for k in 0..PHASES {
            let theta = std::f64::consts::TAU * k as f64 / PHASES as f64;
            best = best.max(power_grid_max(&tiny_gains(inst, C64::from_polar(beta, theta)), p, s));
        }
    }
    best
}

/// Min-SINR with fixed per-BS powers `p` at reflection `v`.
pub fn fixed_power_sinr(inst: &Instance, p: [f64; 2], v: C64) -> f64 {
    let g = tiny_gains(inst, v);
    let (_, s) = tiny_budgets(inst);
    let s0 = p[0] * g[0][0] / (p[1] * g[1][0] + s[0]);
    let s1 = p[1] * g[1][1] / (p[0] * g[0][1] + s[1]);
    s0.min(s1)
}

/// Best min-SINR over a fine reflection grid with the powers held fixed.
pub fn reflect_grid_max(inst: &Instance, p: [f64; 2]) -> f64 {
    let mut best: f64 = 0.0;
    for a in 0..=100 {
        for k in 0..PHASES {
            let v = C64::from_polar(a as f64 / 100.0, std::f64::consts::TAU * k as f64 / PHASES as f64);
            best = best.max(fixed_power_sinr(inst, p, v));
        }
    }
    best
}
