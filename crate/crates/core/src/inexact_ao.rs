//! Inexact alternating optimization: one SOCP for the beams and one convex
//! successive-approximation step for the reflect vector per iteration.

use crate::bench::{mrt_beams, unit_amplitude_project};
use crate::conic::{solve, ConicProgram, LinExpr, SolveStatus};
use crate::exact_ao::{add_beam_vars, extract_beams, improved, scaled_links, Tracker};
use crate::metrics::{min_weighted_sinr, quad_forms, reflect_link_power, QuadForms, ReflectVector, TxBeams};
use crate::model::{CVec, Instance};
use crate::report::{SolveReport, Termination};

#[derive(Clone, Debug)]
pub struct P4Outcome {
    pub beams: TxBeams,
    /// Optimal margin, in the same amplitude units as `a^H w`.
    pub xi: f64,
    /// Min-weighted SINR of `beams`.
    pub t: f64,
    pub solved: bool,
}

/// Beam update that maximizes the common margin `xi` in
/// `Re(a_mm^H w_m) - xi >= sqrt(alpha_m t_prev) ||(interference, sigma_m)||`.
/// On solver failure the previous beams are kept with `xi = 0`.
pub fn solve_p4(inst: &Instance, v: &ReflectVector, w_prev: &TxBeams, t_prev: f64) -> P4Outcome {
    let keep = || P4Outcome {
        beams: w_prev.clone(),
        xi: 0.0,
        t: min_weighted_sinr(inst, w_prev, v),
        solved: false,
    };
    let links = scaled_links(inst, v);
    let alpha = inst.config.weight_vec();
    let noise = inst.config.noise_vec();
    let k = inst.num_users();
    let sigma_ref = (noise.iter().sum::<f64>() / k as f64).sqrt();

    let mut p = ConicProgram::new();
    let w = add_beam_vars(&mut p, inst, &links);
    let xi = p.add_var();
    p.set_objective(xi, -1.0);
    for m in 0..k {
        let root = (alpha[m] * t_prev.max(0.0)).sqrt();
        let (re, _) = w[m].inner(links[m][m].as_slice());
        let mut head = re;
        head.add(xi, -sigma_ref / noise[m].sqrt());
        let mut rows = vec![head];
        for u in (0..k).filter(|&u| u != m) {
            let (r, i) = w[u].inner(links[u][m].as_slice());
            rows.push(r.scaled(root));
            rows.push(i.scaled(root));
        }
        rows.push(LinExpr::constant(root));
        p.add_soc(rows);
    }
    let sol = solve(&p);
    if sol.status != SolveStatus::Optimal {
        return keep();
    }
    let beams = extract_beams(inst, &w, &sol.x, v);
    let t = min_weighted_sinr(inst, &beams, v);
    P4Outcome {
        beams,
        xi: sol.x[xi] * sigma_ref,
        t,
        solved: true,
    }
}

/// `F_m(v) = alpha_m t (interference + sigma_m^2) - desired`, for linear
/// user index `m`.
pub fn surrogate_f(q: &QuadForms, v: &CVec, t: f64, sigma2: &[f64], alpha: &[f64], m: usize) -> f64 {
    let interf: f64 = (0..q.num_users())
        .filter(|&u| u != m)
        .map(|u| reflect_link_power(q.get(u, m), v))
        .sum();
    alpha[m] * t * (interf + sigma2[m]) - reflect_link_power(q.get(m, m), v)
}

/// Convex majorizer of [`surrogate_f`], tight at `v0`: the desired-signal
/// term is replaced by its first-order expansion
/// `D(v0) + 2 Re[(C v0 + u)^H (v - v0)]`.
pub fn surrogate_f_up(
    q: &QuadForms,
    v: &CVec,
    t: f64,
    v0: &CVec,
    sigma2: &[f64],
    alpha: &[f64],
    m: usize,
) -> f64 {
    let interf: f64 = (0..q.num_users())
        .filter(|&u| u != m)
        .map(|u| reflect_link_power(q.get(u, m), v))
        .sum();
    let e = q.get(m, m);
    let x0 = e.amplitude(v0);
    let x = e.amplitude(v);
    // D(v0) + 2 Re[conj(x0) (x - x0)] = 2 Re[conj(x0) x] - |x0|^2
    alpha[m] * t * (interf + sigma2[m]) + x0.norm_sqr() - 2.0 * (x0.conj() * x).re
}

#[derive(Clone, Debug)]
pub struct P5Outcome {
    pub reflect: ReflectVector,
    /// Optimal value of the majorized problem (nonpositive up to tolerance).
    pub z: f64,
    pub solved: bool,
}

/// Minimizes `max_m F_up_m(v)` over the unit disk. On solver failure returns
/// `v0` with `z = 0`.
pub fn solve_p5_1(q: &QuadForms, t_star: f64, v0: &ReflectVector, sigma2: &[f64], alpha: &[f64]) -> P5Outcome {
    let keep = || P5Outcome {
        reflect: v0.clone(),
        z: 0.0,
        solved: false,
    };
    let k = q.num_users();
    let n = q.irs_units();
    let s0 = sigma2.iter().sum::<f64>() / k as f64;
    let mut p = ConicProgram::new();
    let v = p.add_complex("v", n);
    let z = p.add_var();
    p.set_objective(z, 1.0);
    // x_um(v) = v^H c_um + d_um as (re, im) affine expressions
    let amp = |u: usize, m: usize| {
        let e = q.get(u, m);
        let (mut re, mut im) = v.inner_conj(e.c.as_slice());
        re.add_constant(e.d.re);
        im.add_constant(e.d.im);
        (re, im)
    };
    for m in 0..k {
        let x0 = q.get(m, m).amplitude(&v0.v);
        let scale = (alpha[m] * t_star / s0).sqrt();
        let (xr, xi) = amp(m, m);
        // q = z - (alpha t sigma^2 + |x0|^2 - 2 Re(conj(x0) x)) / s0
        let mut qe = LinExpr::var(z);
        qe.add_constant(-(alpha[m] * t_star * sigma2[m] + x0.norm_sqr()) / s0);
        qe.add_expr(&xr, 2.0 * x0.re / s0);
        qe.add_expr(&xi, 2.0 * x0.im / s0);
        let mut top = qe.clone();
        top.add_constant(1.0);
        let mut second = qe;
        second.add_constant(-1.0);
        let mut rows = vec![top, second];
        for u in (0..k).filter(|&u| u != m) {
            let (r, i) = amp(u, m);
            rows.push(r.scaled(2.0 * scale));
            rows.push(i.scaled(2.0 * scale));
        }
        p.add_soc(rows);
    }
    for j in 0..n {
        p.add_soc(vec![
            LinExpr::constant(1.0),
            LinExpr::var(v.re(j)),
            LinExpr::var(v.im(j)),
        ]);
    }
    let sol = solve(&p);
    if sol.status != SolveStatus::Optimal {
        return keep();
    }
    let reflect = crate::lowcx_ao::project_unit_disk(&CVec::from_vec(v.extract(&sol.x)));
    P5Outcome {
        reflect,
        z: sol.x[z] * s0,
        solved: true,
    }
}

#[derive(Clone, Debug)]
pub struct InexactOptions {
    pub eps: f64,
    pub max_iters: usize,
    pub unit_amplitude: bool,
}

impl Default for InexactOptions {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            max_iters: 50,
            unit_amplitude: false,
        }
    }
}

/// Reflective half-step used by the inexact loops.
pub(crate) enum ReflectUpdate {
    Sca,
    Subgradient { gamma: f64, steps: usize },
}

/// Shared outer loop of the inexact methods. Each half-step is accepted
/// only if it does not lower the objective.
pub(crate) fn run_inexact_loop(
    inst: &Instance,
    init_v: &ReflectVector,
    eps: f64,
    max_iters: usize,
    unit_amplitude: bool,
    update: ReflectUpdate,
    name: &str,
) -> SolveReport {
    let alpha = inst.config.weight_vec();
    let noise = inst.config.noise_vec();
    let mut v = init_v.clone();
    let (mut w, _) = mrt_beams(inst, &v);
    let mut t = min_weighted_sinr(inst, &w, &v);
    let mut tr = Tracker::new(w.clone(), v.clone(), t);
    let mut failures = 0usize;
    for l in 1..=max_iters {
        let p4 = solve_p4(inst, &v, &w, t);
        failures += usize::from(!p4.solved);
        if p4.t >= t {
            w = p4.beams;
        }
        let t_star = min_weighted_sinr(inst, &w, &v);
        tr.half_trace.push(t_star);

        let started = std::time::Instant::now();
        let q = match quad_forms(inst, &w) {
            Ok(q) => q,
            Err(e) => {
                return tr.finish(inst, name, l, Termination::SolverFailure, Some(e.to_string()))
            }
        };
        let mut v_new = match &update {
            ReflectUpdate::Sca => {
                let out = solve_p5_1(&q, t_star, &v, &noise, &alpha);
                failures += usize::from(!out.solved);
                out.reflect
            }
            ReflectUpdate::Subgradient { gamma, steps } => {
                crate::lowcx_ao::descend(&q, t_star, &v, &noise, &alpha, *gamma, *steps, unit_amplitude).0
            }
        };
        tr.reflect_times.push(started.elapsed());
        if unit_amplitude {
            v_new = unit_amplitude_project(&v_new);
        }
        let t_new = min_weighted_sinr(inst, &w, &v_new);
        let t_next = if t_new >= t_star {
            v = v_new;
            t_new
        } else {
            t_star
        };
        tr.half_trace.push(t_next);
        tr.offer(&w, &v, t_next);
        tr.trace.push(t_next);
        if !improved(t_next, t, eps) {
            let detail = (failures > 0).then(|| format!("{failures} subproblem solves failed"));
            return tr.finish(inst, name, l, Termination::Converged, detail);
        }
        t = t_next;
    }
    tr.finish(inst, name, max_iters, Termination::MaxIters, None)
}

/// Inexact alternating optimization with an SCA reflective step.
pub fn run_inexact_ao(inst: &Instance, init_v: &ReflectVector, opts: &InexactOptions) -> SolveReport {
    run_inexact_loop(
        inst,
        init_v,
        opts.eps,
        opts.max_iters,
        opts.unit_amplitude,
        ReflectUpdate::Sca,
        "inexact_ao",
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact_ao::solve_txbf;
    use crate::model::tests::tiny_config;
    use crate::model::C64;

    #[test]
    fn p4_single_cell_reaches_mrt_bound() {
        let cfg = tiny_config(1, 3, 1, 4);
        let inst = Instance::sample(&cfg, 12).unwrap();
        let v = ReflectVector::ones(4);
        let w0 = TxBeams {
            w: vec![CVec::from_element(3, C64::new(0.1, 0.0))],
            cell: vec![0],
        };
        let t0 = min_weighted_sinr(&inst, &w0, &v);
        let out = solve_p4(&inst, &v, &w0, t0);
        let a = &inst.effective(&v.v)[0][0];
        let bound = cfg.power_w[0] * a.norm_squared() / cfg.noise_w[0][0];
        assert!(out.solved);
        assert!((out.t - bound).abs() <= 1e-3 * bound);
        assert!(out.xi >= -1e-8);
    }

    #[test]
    fn p4_at_optimum_has_zero_margin() {
        let cfg = tiny_config(2, 2, 1, 3);
        let inst = Instance::sample(&cfg, 2).unwrap();
        let v = ReflectVector::ones(3);
        let tx = solve_txbf(&inst, &v, 1e-6).unwrap();
        let out = solve_p4(&inst, &v, &tx.beams, tx.t_lo);
        let scale = tx.beams.w.iter().map(|w| w.norm()).fold(0.0, f64::max)
            * inst.effective(&v.v)[0][0].norm();
        assert!(out.xi.abs() <= 1e-4 * scale, "xi {} scale {}", out.xi, scale);
        assert!(out.t >= tx.t_lo * (1.0 - 1e-6));
    }

    #[test]
    fn surrogate_at_zero_target_is_minus_desired() {
        let cfg = tiny_config(2, 2, 1, 3);
        let inst = Instance::sample(&cfg, 4).unwrap();
        let (w, _) = mrt_beams(&inst, &ReflectVector::ones(3));
        let q = quad_forms(&inst, &w).unwrap();
        let v = CVec::from_element(3, C64::new(0.2, 0.5));
        let f = surrogate_f(&q, &v, 0.0, &cfg.noise_vec(), &[1.0; 2], 1);
        assert!((f + reflect_link_power(q.get(1, 1), &v)).abs() < 1e-24);
        assert!(f <= 0.0);
        let fu = surrogate_f_up(&q, &v, 0.7, &v, &cfg.noise_vec(), &[1.0; 2], 0);
        let ff = surrogate_f(&q, &v, 0.7, &cfg.noise_vec(), &[1.0; 2], 0);
        assert!((fu - ff).abs() <= 1e-10 * ff.abs().max(1e-30));
    }

    #[test]
    fn p5_never_lowers_the_objective() {
        let cfg = tiny_config(3, 2, 1, 6);
        let inst = Instance::sample(&cfg, 6).unwrap();
        let v0 = ReflectVector::ones(6);
        let tx = solve_txbf(&inst, &v0, 1e-3).unwrap();
        let q = quad_forms(&inst, &tx.beams).unwrap();
        let noise = cfg.noise_vec();
        let t0 = q.min_weighted_sinr(&v0.v, &[1.0; 3], &noise);
        let out = solve_p5_1(&q, t0, &v0, &noise, &[1.0; 3]);
        assert!(out.solved);
        assert!(out.z <= 1e-8);
        assert!(out.reflect.is_feasible(1e-9));
        let t1 = q.min_weighted_sinr(&out.reflect.v, &[1.0; 3], &noise);
        assert!(t1 >= t0 - 1e-8 * (1.0 + t0));
    }

    #[test]
    fn disconnected_irs_makes_p5_constant() {
        let cfg = tiny_config(2, 2, 1, 3);
        let inst = Instance::sample(&cfg, 5).unwrap().without_irs();
        let v0 = ReflectVector::ones(3);
        let (w, _) = mrt_beams(&inst, &v0);
        let q = quad_forms(&inst, &w).unwrap();
        let noise = cfg.noise_vec();
        let t = q.min_weighted_sinr(&v0.v, &[1.0; 2], &noise);
        let out = solve_p5_1(&q, t, &v0, &noise, &[1.0; 2]);
        let expect = (0..2)
            .map(|m| {
                let interf: f64 = (0..2).filter(|&u| u != m).map(|u| q.get(u, m).d.norm_sqr()).sum();
                t * (interf + noise[m]) - q.get(m, m).d.norm_sqr()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((out.z - expect).abs() <= 1e-6 * noise[0]);
        let t1 = q.min_weighted_sinr(&out.reflect.v, &[1.0; 2], &noise);
        assert!((t1 - t).abs() <= 1e-12 * t);
    }

    #[test]
    fn inexact_trace_is_monotone() {
        let cfg = tiny_config(3, 2, 1, 5);
        let inst = Instance::sample(&cfg, 3).unwrap();
        let rep = run_inexact_ao(&inst, &ReflectVector::ones(5), &InexactOptions::default());
        assert!(rep.worst_drop() <= 1e-8);
        assert!(rep.beams.within_power(&cfg.power_w, 1e-6));
        assert!(rep.reflect.is_feasible(1e-9));
        assert!((rep.objective - *rep.trace.last().unwrap()).abs() <= 1e-8 * rep.objective);
    }
}
