//! Benchmark schemes: closed-form MRT / ZF beams alternated with the SCA
//! reflective step, random reflection, no IRS, and the unit-amplitude wrapper.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact_ao::{improved, run_exact_ao, solve_txbf, ExactOptions, TxSolution, Tracker};
use crate::inexact_ao::{run_inexact_ao, solve_p5_1, InexactOptions};
use crate::lowcx_ao::{run_lowcx_ao, LowComplexityOptions};
use crate::metrics::{min_weighted_sinr, quad_forms, ReflectVector, TxBeams};
use crate::model::{CMat, CVec, Instance, C64};
use crate::report::{SolveReport, Termination};

/// Everything the harness can run on an instance.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchemeId {
    ExactAo,
    InexactAo,
    LowCxAo,
    AoMrt,
    AoZf,
    RandomReflect,
    NoIrs,
    /// Inner scheme with unit-modulus projection after every reflective update.
    UnitAmplitude(Box<SchemeId>),
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemeId::ExactAo => f.write_str("exact_ao"),
            SchemeId::InexactAo => f.write_str("inexact_ao"),
            SchemeId::LowCxAo => f.write_str("lowcx_ao"),
            SchemeId::AoMrt => f.write_str("ao_mrt"),
            SchemeId::AoZf => f.write_str("ao_zf"),
            SchemeId::RandomReflect => f.write_str("random_reflect"),
            SchemeId::NoIrs => f.write_str("no_irs"),
            SchemeId::UnitAmplitude(inner) => write!(f, "unit_amplitude({inner})"),
        }
    }
}

impl FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(inner) = s.strip_prefix("unit_amplitude(").and_then(|r| r.strip_suffix(')')) {
            return Ok(SchemeId::UnitAmplitude(Box::new(inner.parse()?)));
        }
        Ok(match s {
            "exact_ao" => SchemeId::ExactAo,
            "inexact_ao" => SchemeId::InexactAo,
            "lowcx_ao" => SchemeId::LowCxAo,
            "ao_mrt" => SchemeId::AoMrt,
            "ao_zf" => SchemeId::AoZf,
            "random_reflect" => SchemeId::RandomReflect,
            "no_irs" => SchemeId::NoIrs,
            _ => return Err(Error::Config(format!("unknown scheme '{s}'"))),
        })
    }
}

impl Serialize for SchemeId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SchemeId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Tuning knobs shared by all schemes; unused fields are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tuning {
    pub eps: f64,
    pub max_iters: usize,
    pub num_rand: usize,
    pub tol_rel: f64,
    pub gamma: f64,
    pub steps: usize,
    /// Start the alternating schemes from random phases instead of all ones.
    pub random_init: bool,
}

impl Default for Tuning {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            max_iters: 50,
            num_rand: 1000,
            tol_rel: 1e-3,
            gamma: 0.01,
            steps: 100,
            random_init: false,
        }
    }
}

/// Per-user MRT beams `sqrt(P_b / K_b) a / ||a||` on the effective channel.
/// Users whose effective channel vanishes get a zero beam and are returned
/// in the second element.
pub fn mrt_beams(inst: &Instance, v: &ReflectVector) -> (TxBeams, Vec<usize>) {
    let cfg = &inst.config;
    let a = inst.effective(&v.v);
    let cell = cfg.cell_of();
    let mut flagged = Vec::new();
    let w = (0..inst.num_users())
        .map(|m| {
            let b = cell[m];
            let dir = &a[b][m];
            let norm = dir.norm();
            if norm == 0.0 {
                flagged.push(m);
                return CVec::zeros(cfg.antennas);
            }
            let p = cfg.power_w[b] / cfg.users_per_cell[b] as f64;
            dir * C64::from(p.sqrt() / norm)
        })
        .collect();
    (TxBeams { w, cell }, flagged)
}

/// Zero-forcing beams: user `m`'s beam is its effective channel projected
/// onto the orthogonal complement of the channels from its BS to every other
/// user, then scaled as in [`mrt_beams`]. Users left with a (numerically)
/// zero projection are flagged.
pub fn zf_beams(inst: &Instance, v: &ReflectVector) -> Result<(TxBeams, Vec<usize>)> {
    let cfg = &inst.config;
    let k = inst.num_users();
    if cfg.antennas < k {
        return Err(Error::Inapplicable(format!(
            "zero forcing needs at least {k} antennas, have {}",
            cfg.antennas
        )));
    }
    let a = inst.effective(&v.v);
    let cell = cfg.cell_of();
    let mut flagged = Vec::new();
    let mut w = Vec::with_capacity(k);
    for m in 0..k {
        let b = cell[m];
        let desired = &a[b][m];
        let others: Vec<CVec> = (0..k).filter(|&u| u != m).map(|u| a[b][u].clone()).collect();
        let proj = if others.is_empty() {
            desired.clone()
        } else {
            let basis = orthonormal_basis(&CMat::from_columns(&others)).ok_or_else(|| {
                Error::Inapplicable(format!("interference channels of user {m} are rank deficient"))
            })?;
            desired - &basis * basis.ad_mul(desired)
        };
        let norm = proj.norm();
        if norm <= 1e-9 * desired.norm() || norm == 0.0 {
            flagged.push(m);
            w.push(CVec::zeros(cfg.antennas));
            continue;
        }
        let p = cfg.power_w[b] / cfg.users_per_cell[b] as f64;
        w.push(proj * C64::from(p.sqrt() / norm));
    }
    Ok((TxBeams { w, cell }, flagged))
}

/// Orthonormal basis of the column space, or `None` when the columns are not
/// linearly independent.
fn orthonormal_basis(a: &CMat) -> Option<CMat> {
    let svd = a.clone().svd(true, false);
    let s = &svd.singular_values;
    let top = s.max();
    if top == 0.0 || s.min() <= 1e-10 * top {
        return None;
    }
    svd.u
}

/// Unit-modulus reflect vector with phases uniform on `[0, 2 pi)`.
pub fn random_reflect(n: usize, seed: u64) -> ReflectVector {
    random_phases(n, seed, 4 << 56)
}

fn random_phases(n: usize, seed: u64, stream: u64) -> ReflectVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    ReflectVector::new(CVec::from_fn(n, |_, _| {
        C64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU))
    }))
}

/// Optimal transmit beams with the reflected paths switched off.
pub fn no_irs_solve(inst: &Instance, tol_rel: f64) -> Result<TxSolution> {
    solve_txbf(inst, &ReflectVector::zeros(inst.config.irs_units), tol_rel)
}

/// Entrywise `exp(j arg v_n)`; zero entries map to 1.
pub fn unit_amplitude_project(v: &ReflectVector) -> ReflectVector {
    ReflectVector::new(v.v.map(|z| {
        if z.norm() == 0.0 {
            C64::new(1.0, 0.0)
        } else {
            C64::from_polar(1.0, z.arg())
        }
    }))
}

fn closed_form_ao(
    inst: &Instance,
    init: &ReflectVector,
    zf: bool,
    tune: &Tuning,
    unit_amplitude: bool,
) -> Result<SolveReport> {
    let name = if zf { "ao_zf" } else { "ao_mrt" };
    let beams = |v: &ReflectVector| -> Result<TxBeams> {
        if zf {
            zf_beams(inst, v).map(|(w, _)| w)
        } else {
            Ok(mrt_beams(inst, v).0)
        }
    };
    let alpha = inst.config.weight_vec();
    let noise = inst.config.noise_vec();
    let mut v = init.clone();
    if unit_amplitude {
        v = unit_amplitude_project(&v);
    }
    let mut w = beams(&v)?;
    let t0 = min_weighted_sinr(inst, &w, &v);
    let mut tr = Tracker::new(w.clone(), v.clone(), t0);
    let mut t_prev = t0;
    for l in 1..=tune.max_iters {
        if l >= 2 {
            w = beams(&v)?;
            let t_tx = min_weighted_sinr(inst, &w, &v);
            tr.half_trace.push(t_tx);
            if t_tx < t_prev {
                tr.trace.push(t_tx);
                return Ok(tr.finish(inst, name, l, Termination::ObjectiveDecreased, None));
            }
            tr.offer(&w, &v, t_tx);
            t_prev = t_tx;
        } else {
            tr.half_trace.push(t_prev);
        }
        let started = std::time::Instant::now();
        let q = quad_forms(inst, &w)?;
        let out = solve_p5_1(&q, t_prev, &v, &noise, &alpha);
        tr.reflect_times.push(started.elapsed());
        let mut v_new = out.reflect;
        if unit_amplitude {
            v_new = unit_amplitude_project(&v_new);
        }
        let t_ref = min_weighted_sinr(inst, &w, &v_new);
        tr.half_trace.push(t_ref);
        if t_ref < t_prev {
            tr.trace.push(t_ref);
            return Ok(tr.finish(inst, name, l, Termination::ObjectiveDecreased, None));
        }
        tr.offer(&w, &v_new, t_ref);
        tr.trace.push(t_ref);
        let gained = improved(t_ref, t_prev, tune.eps);
        v = v_new;
        t_prev = t_ref;
        if !gained {
            return Ok(tr.finish(inst, name, l, Termination::Converged, None));
        }
    }
    Ok(tr.finish(inst, name, tune.max_iters, Termination::MaxIters, None))
}

fn fixed_reflect(inst: &Instance, v: ReflectVector, name: &str, tune: &Tuning) -> Result<SolveReport> {
    let start = std::time::Instant::now();
    let sol = solve_txbf(inst, &v, tune.tol_rel)?;
    let t0 = min_weighted_sinr(inst, &mrt_beams(inst, &v).0, &v);
    Ok(SolveReport {
        algorithm: name.to_string(),
        trace: vec![t0, sol.objective],
        half_trace: vec![sol.objective],
        beams: sol.beams,
        reflect: v,
        objective: sol.objective,
        iterations: 1,
        wall: start.elapsed(),
        reflect_times: Vec::new(),
        termination: Termination::Converged,
        detail: None,
    })
}

/// Runs one scheme on one instance. `seed` drives every random choice the
/// scheme makes (random phases, Gaussian randomization).
pub fn run_scheme(scheme: &SchemeId, inst: &Instance, seed: u64, tune: &Tuning) -> Result<SolveReport> {
    run_inner(scheme, inst, seed, tune, false)
}

fn run_inner(scheme: &SchemeId, inst: &Instance, seed: u64, tune: &Tuning, unit: bool) -> Result<SolveReport> {
    let n = inst.config.irs_units;
    let init = if tune.random_init {
        random_phases(n, seed, 6 << 56)
    } else {
        ReflectVector::ones(n)
    };
    let mut rep = match scheme {
        SchemeId::ExactAo => run_exact_ao(
            inst,
            &init,
            &ExactOptions {
                eps: tune.eps,
                max_iters: tune.max_iters,
                num_rand: tune.num_rand,
                tol_rel: tune.tol_rel,
                seed,
                unit_amplitude: unit,
            },
        ),
        SchemeId::InexactAo => run_inexact_ao(
            inst,
            &init,
            &InexactOptions {
                eps: tune.eps,
                max_iters: tune.max_iters,
                unit_amplitude: unit,
            },
        ),
        SchemeId::LowCxAo => run_lowcx_ao(
            inst,
            &init,
            &LowComplexityOptions {
                eps: tune.eps,
                max_iters: tune.max_iters,
                gamma: tune.gamma,
                steps: tune.steps,
                unit_amplitude: unit,
            },
        ),
        SchemeId::AoMrt => closed_form_ao(inst, &init, false, tune, unit)?,
        SchemeId::AoZf => closed_form_ao(inst, &init, true, tune, unit)?,
        SchemeId::RandomReflect => fixed_reflect(inst, random_reflect(n, seed), "random_reflect", tune)?,
        SchemeId::NoIrs => {
            let mut rep = fixed_reflect(inst, ReflectVector::zeros(n), "no_irs", tune)?;
            rep.algorithm = "no_irs".into();
            rep
        }
        SchemeId::UnitAmplitude(inner) => {
            if matches!(**inner, SchemeId::UnitAmplitude(_)) {
                return Err(Error::Config("nested unit-amplitude wrapper".into()));
            }
            let mut rep = run_inner(inner, inst, seed, tune, true)?;
            rep.algorithm = scheme.to_string();
            return Ok(rep);
        }
    };
    if rep.termination == Termination::SolverFailure {
        rep.detail.get_or_insert_with(|| "solver failure".into());
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::sinrs;
    use crate::model::tests::tiny_config;

    #[test]
    fn random_init_is_seeded_and_unit_modulus() {
        let inst = Instance::sample(&tiny_config(2, 2, 1, 6), 1).unwrap();
        let tune = Tuning {
            random_init: true,
            max_iters: 1,
            ..Tuning::default()
        };
        let a = run_scheme(&SchemeId::AoMrt, &inst, 3, &tune).unwrap();
        let b = run_scheme(&SchemeId::AoMrt, &inst, 3, &tune).unwrap();
        let ones = run_scheme(&SchemeId::AoMrt, &inst, 3, &Tuning { max_iters: 1, ..Tuning::default() }).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_ne!(a.trace[0], ones.trace[0]);
        let init = random_phases(6, 3, 6 << 56);
        assert!(init.v.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        assert_ne!(init.v, random_reflect(6, 3).v);
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in [
            SchemeId::ExactAo,
            SchemeId::AoZf,
            SchemeId::NoIrs,
            SchemeId::UnitAmplitude(Box::new(SchemeId::LowCxAo)),
        ] {
            assert_eq!(s.to_string().parse::<SchemeId>().unwrap(), s);
        }
        assert!("ao_xyz".parse::<SchemeId>().is_err());
        let json = serde_json::to_string(&SchemeId::UnitAmplitude(Box::new(SchemeId::InexactAo))).unwrap();
        assert_eq!(json, "\"unit_amplitude(inexact_ao)\"");
    }

    #[test]
    fn mrt_is_colinear_with_full_power() {
        let cfg = tiny_config(3, 3, 2, 4);
        let inst = Instance::sample(&cfg, 1).unwrap();
        let v = ReflectVector::ones(4);
        let (w, flagged) = mrt_beams(&inst, &v);
        assert!(flagged.is_empty());
        let a = inst.effective(&v.v);
        for m in 0..inst.num_users() {
            let aa = &a[w.cell[m]][m];
            let ww = &w.w[m];
            assert!((aa.dotc(ww).norm() - aa.norm() * ww.norm()).abs() <= 1e-10 * aa.norm() * ww.norm());
        }
        for b in 0..3 {
            assert!((w.bs_power(b) - cfg.power_w[b]).abs() <= 1e-12);
        }
    }

    #[test]
    fn zf_nulls_cross_links() {
        let cfg = tiny_config(3, 3, 1, 4);
        let inst = Instance::sample(&cfg, 2).unwrap();
        let v = ReflectVector::ones(4);
        let (w, flagged) = zf_beams(&inst, &v).unwrap();
        assert!(flagged.is_empty());
        let a = inst.effective(&v.v);
        for i in 0..3 {
            for b in (0..3).filter(|&b| b != i) {
                let leak = a[i][b].dotc(&w.w[i]).norm();
                assert!(leak <= 1e-8 * a[i][b].norm() * w.w[i].norm());
            }
            assert!((w.bs_power(i) - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn zf_needs_enough_antennas() {
        let cfg = tiny_config(3, 2, 1, 4);
        let inst = Instance::sample(&cfg, 2).unwrap();
        let err = zf_beams(&inst, &ReflectVector::ones(4)).unwrap_err();
        assert!(matches!(err, Error::Inapplicable(_)));
        assert!(run_scheme(&SchemeId::AoZf, &inst, 0, &Tuning::default()).is_err());
    }

    #[test]
    fn zf_two_cells_is_interference_free() {
        let cfg = tiny_config(2, 2, 1, 3);
        let inst = Instance::sample(&cfg, 11).unwrap();
        let v = ReflectVector::ones(3);
        let (w, _) = zf_beams(&inst, &v).unwrap();
        let a = inst.effective(&v.v);
        let s = sinrs(&inst, &w, &v);
        for m in 0..2 {
            let other = &a[m][1 - m];
            let u = other / C64::from(other.norm());
            let proj = &a[m][m] - &u * u.dotc(&a[m][m]);
            let expect = proj.norm_squared() / cfg.noise_w[m][0];
            assert!((s[m] - expect).abs() <= 1e-9 * expect);
        }
    }

    #[test]
    fn random_reflect_is_unit_and_seeded() {
        let a = random_reflect(16, 5);
        assert!(a.v.iter().all(|z| (z.norm() - 1.0).abs() < 1e-15));
        assert_eq!(a, random_reflect(16, 5));
        assert_ne!(a, random_reflect(16, 6));
    }

    #[test]
    fn unit_projection_examples() {
        let th = 0.7f64;
        let v = ReflectVector::new(CVec::from_vec(vec![C64::from_polar(0.5, th), C64::new(0.0, 0.0)]));
        let p = unit_amplitude_project(&v);
        assert!((p.v[0] - C64::from_polar(1.0, th)).norm() < 1e-15);
        assert_eq!(p.v[1], C64::new(1.0, 0.0));
        assert_eq!(unit_amplitude_project(&p), p);
    }

    #[test]
    fn no_irs_ignores_the_surface() {
        let cfg = tiny_config(2, 2, 1, 3);
        let inst = Instance::sample(&cfg, 3).unwrap();
        let a = no_irs_solve(&inst, 1e-3).unwrap();
        let b = no_irs_solve(&inst.without_irs(), 1e-3).unwrap();
        assert!((a.objective - b.objective).abs() <= 1e-12 * a.objective);
        let mut bigger = cfg.clone();
        bigger.irs_units = 7;
        let inst7 = Instance::sample(&bigger, 3).unwrap();
        let c = no_irs_solve(&inst7, 1e-3).unwrap();
        assert!((a.objective - c.objective).abs() <= 1e-9 * a.objective);
    }

    #[test]
    fn closed_form_schemes_are_feasible() {
        let cfg = tiny_config(3, 3, 1, 5);
        let inst = Instance::sample(&cfg, 4).unwrap();
        for s in [SchemeId::AoMrt, SchemeId::AoZf, SchemeId::UnitAmplitude(Box::new(SchemeId::AoMrt))] {
            let rep = run_scheme(&s, &inst, 0, &Tuning::default()).unwrap();
            assert!(rep.beams.within_power(&cfg.power_w, 1e-6), "{s}");
            assert!(rep.reflect.is_feasible(1e-9), "{s}");
            assert!(rep.objective >= rep.trace[0] * (1.0 - 1e-12), "{s}");
        }
    }
}
