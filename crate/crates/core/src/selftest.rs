//! Quick invariant checks behind the `selftest` command.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bench::{mrt_beams, run_scheme, SchemeId, Tuning};
use crate::exact_ao::solve_reflect_sdr;
use crate::harness::{default_scenario, read_csv, run_sweep, write_csv, ExperimentSpec, Placement, SweepAxis};
use crate::inexact_ao::{surrogate_f, surrogate_f_up};
use crate::metrics::{lift_matrices, quad_forms, ReflectVector};
use crate::model::{CVec, Instance, SystemConfig};
use crate::report::SolveReport;

pub struct Check {
    pub name: &'static str,
    pub outcome: std::result::Result<(), String>,
}

fn small_scenario(n: usize) -> SystemConfig {
    SystemConfig {
        irs_units: n,
        ..default_scenario()
    }
}

fn hygiene(cfg: &SystemConfig, rep: &SolveReport) -> std::result::Result<(), String> {
    if !rep.beams.within_power(&cfg.power_w, 1e-6) {
        return Err(format!("{}: power budget exceeded", rep.algorithm));
    }
    if rep.reflect.max_modulus() > 1.0 + 1e-9 {
        return Err(format!("{}: reflection outside the unit disk", rep.algorithm));
    }
    Ok(())
}

fn check_defaults() -> std::result::Result<(), String> {
    let cfg = default_scenario();
    cfg.validate().map_err(|e| e.to_string())?;
    let noise_ok = cfg.noise_vec().iter().all(|&s| (s - 1e-11).abs() <= 1e-20);
    let weights_ok = cfg.weight_vec().iter().all(|&a| a == 1.0);
    let exps = &cfg.exponents;
    if !(noise_ok && weights_ok && (exps.bs_user, exps.bs_irs, exps.irs_user) == (3.6, 2.0, 2.5)) {
        return Err("default scenario fields differ from the documented values".into());
    }
    Ok(())
}

fn check_monotone_and_feasible() -> std::result::Result<(), String> {
    let cfg = default_scenario();
    let tune = Tuning::default();
    for seed in 0..2 {
        let inst = Instance::sample(&cfg, seed).map_err(|e| e.to_string())?;
        for scheme in [SchemeId::InexactAo, SchemeId::LowCxAo] {
            let rep = run_scheme(&scheme, &inst, seed, &tune).map_err(|e| e.to_string())?;
            if rep.worst_drop() > 1e-8 {
                return Err(format!("{scheme} seed {seed}: objective dropped by {:.2e}", rep.worst_drop()));
            }
            hygiene(&cfg, &rep)?;
        }
    }
    let small = small_scenario(4);
    let inst = Instance::sample(&small, 0).map_err(|e| e.to_string())?;
    let rep = run_scheme(&SchemeId::ExactAo, &inst, 0, &tune).map_err(|e| e.to_string())?;
    hygiene(&small, &rep)
}

fn check_majorization() -> std::result::Result<(), String> {
    let cfg = small_scenario(6);
    let inst = Instance::sample(&cfg, 3).map_err(|e| e.to_string())?;
    let (w, _) = mrt_beams(&inst, &ReflectVector::ones(6));
    let q = quad_forms(&inst, &w).map_err(|e| e.to_string())?;
    let (noise, alpha) = (cfg.noise_vec(), cfg.weight_vec());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let disk = |rng: &mut ChaCha8Rng| {
        CVec::from_fn(6, |_, _| C64::from_polar(rng.random::<f64>().sqrt(), rng.random_range(0.0..std::f64::consts::TAU)))
    };
    for _ in 0..200 {
        let (v, v0) = (disk(&mut rng), disk(&mut rng));
        let t = rng.random_range(0.0..10.0);
        for m in 0..q.num_users() {
            let f = surrogate_f(&q, &v, t, &noise, &alpha, m);
            let up = surrogate_f_up(&q, &v, t, &v0, &noise, &alpha, m);
            if up < f - 1e-9 * f.abs().max(noise[m]) {
                return Err(format!("surrogate below the function: {up:.6e} < {f:.6e}"));
            }
        }
    }
    Ok(())
}

fn check_relaxation_bound() -> std::result::Result<(), String> {
    let cfg = small_scenario(4);
    let inst = Instance::sample(&cfg, 5).map_err(|e| e.to_string())?;
    let (w, _) = mrt_beams(&inst, &ReflectVector::ones(4));
    let q = quad_forms(&inst, &w).map_err(|e| e.to_string())?;
    let lifted = lift_matrices(&q);
    let (noise, alpha) = (cfg.noise_vec(), cfg.weight_vec());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let out = solve_reflect_sdr(&q, &lifted, &alpha, &noise, &ReflectVector::ones(4), 1e-3, 100, &mut rng)
        .map_err(|e| e.to_string())?;
    let bound = out.sdr.t_relaxed;
    if out.t_achieved > bound * (1.0 + 1e-6) {
        return Err(format!("recovered value {} above the bound {bound}", out.t_achieved));
    }
    for _ in 0..200 {
        let v = CVec::from_fn(4, |_, _| C64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU)));
        let t = q.min_weighted_sinr(&v, &alpha, &noise);
        if t > bound * (1.0 + 1e-6) {
            return Err(format!("random reflection reaches {t} above the bound {bound}"));
        }
    }
    Ok(())
}

fn check_sweep_and_csv() -> std::result::Result<(), String> {
    let spec = ExperimentSpec {
        base: small_scenario(4),
        placement: Placement::Fixed,
        disk_radius_m: 10.0,
        axis: SweepAxis::PMaxDbm,
        values: vec![30.0, 35.0],
        schemes: vec![SchemeId::LowCxAo, SchemeId::NoIrs],
        seed_start: 0,
        seed_count: 2,
        output: None,
        tuning: Tuning::default(),
        overrides: Default::default(),
    };
    let a = run_sweep(&spec).map_err(|e| e.to_string())?;
    let b = run_sweep(&spec).map_err(|e| e.to_string())?;
    if a.len() != 8 {
        return Err(format!("expected 8 rows, got {}", a.len()));
    }
    if a.iter().zip(&b).any(|(x, y)| x.min_sinr_db.to_bits() != y.min_sinr_db.to_bits()) {
        return Err("repeated sweep gave different values".into());
    }
    let path = std::env::temp_dir().join(format!("irs-coord-selftest-{}.csv", std::process::id()));
    write_csv(&a, &path).map_err(|e| e.to_string())?;
    let back = read_csv(&path);
    let _ = std::fs::remove_file(&path);
    let back = back.map_err(|e| e.to_string())?;
    let same = back.len() == a.len()
        && back
            .iter()
            .zip(&a)
            .all(|(x, y)| x.seed == y.seed && x.scheme == y.scheme && (x.min_sinr_db - y.min_sinr_db).abs() <= 1e-4 * y.min_sinr_db.abs().max(1.0));
    if !same {
        return Err("CSV round trip changed the rows".into());
    }
    Ok(())
}

/// Runs every check; takes a few seconds in an optimized build.
pub fn run() -> Vec<Check> {
    let checks: [(&'static str, fn() -> std::result::Result<(), String>); 5] = [
        ("default scenario", check_defaults),
        ("monotone traces and feasible outputs", check_monotone_and_feasible),
        ("surrogate majorizes the SINR constraint", check_majorization),
        ("relaxation bound", check_relaxation_bound),
        ("sweep determinism and CSV round trip", check_sweep_and_csv),
    ];
    checks
        .into_iter()
        .map(|(name, f)| Check { name, outcome: f() })
        .collect()
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for c in super::run() {
            assert!(c.outcome.is_ok(), "{}: {:?}", c.name, c.outcome);
        }
    }
}
