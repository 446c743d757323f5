//! Low-complexity inexact alternating optimization: the convex reflective
//! subproblem is replaced by projected subgradient steps on
//! `G(v) = max_m F_up_m(v)`.
//!
//! Every product with a `C` matrix uses its rank-one factor, so one step
//! costs `O(K^2 N)`.

use crate::bench::unit_amplitude_project;
use crate::inexact_ao::{run_inexact_loop, surrogate_f_up, ReflectUpdate};
use crate::metrics::{QuadForms, ReflectVector};
use crate::model::{CVec, Instance, C64};
use crate::report::SolveReport;

/// `max_m F_up_m(v)` and the lowest-index user attaining it.
pub fn objective_g(q: &QuadForms, v: &CVec, t: f64, v0: &CVec, sigma2: &[f64], alpha: &[f64]) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for m in 0..q.num_users() {
        let f = surrogate_f_up(q, v, t, v0, sigma2, alpha, m);
        if f > best.0 {
            best = (f, m);
        }
    }
    best
}

/// Gradient of the active user's `F_up` with respect to `(Re v, Im v)`,
/// written as a complex vector:
/// `2 alpha t sum_{u != m} (C_um v + u_um) - 2 (C_mm v0 + u_mm)`.
pub fn subgrad(q: &QuadForms, v: &CVec, t: f64, v0: &CVec, sigma2: &[f64], alpha: &[f64]) -> CVec {
    let (_, m) = objective_g(q, v, t, v0, sigma2, alpha);
    user_gradient(q, v, t, v0, alpha, m)
}

pub(crate) fn user_gradient(q: &QuadForms, v: &CVec, t: f64, v0: &CVec, alpha: &[f64], m: usize) -> CVec {
    let n = q.irs_units();
    let mut g = CVec::zeros(n);
    let at = alpha[m] * t;
    for u in (0..q.num_users()).filter(|&u| u != m) {
        // C v + u = c (c^H v + conj(d)) = c conj(v^H c + d)
        let e = q.get(u, m);
        g.axpy(C64::from(2.0 * at) * e.amplitude(v).conj(), &e.c, C64::from(1.0));
    }
    let e = q.get(m, m);
    g.axpy(C64::from(-2.0) * e.amplitude(v0).conj(), &e.c, C64::from(1.0));
    g
}

/// Entrywise projection onto the closed unit disk.
pub fn project_unit_disk(x: &CVec) -> ReflectVector {
    ReflectVector::new(x.map(|z| {
        let r = z.norm();
        if r > 1.0 {
            z / r
        } else {
            z
        }
    }))
}

/// `T` projected subgradient steps of length `gamma` from `v0`; returns the
/// best point seen (including `v0`) and its value.
pub fn subgrad_descend(
    q: &QuadForms,
    t: f64,
    v0: &ReflectVector,
    sigma2: &[f64],
    alpha: &[f64],
    gamma: f64,
    steps: usize,
) -> (ReflectVector, f64) {
    descend(q, t, v0, sigma2, alpha, gamma, steps, false)
}

/// With `unit` set every step is projected onto the unit circle instead of
/// the disk.
#[allow(clippy::too_many_arguments)]
pub(crate) fn descend(
    q: &QuadForms,
    t: f64,
    v0: &ReflectVector,
    sigma2: &[f64],
    alpha: &[f64],
    gamma: f64,
    steps: usize,
    unit: bool,
) -> (ReflectVector, f64) {
    let project = if unit {
        |x: &CVec| unit_amplitude_project(&ReflectVector::new(x.clone()))
    } else {
        project_unit_disk
    };
    let (mut val, mut active) = objective_g(q, &v0.v, t, &v0.v, sigma2, alpha);
    let mut v = v0.v.clone();
    let mut best = (v.clone(), val);
    for _ in 0..steps {
        let g = user_gradient(q, &v, t, &v0.v, alpha, active);
        let norm = g.norm();
        if norm == 0.0 {
            break;
        }
        let step = &v - g * C64::from(gamma / norm);
        v = project(&step).v;
        (val, active) = objective_g(q, &v, t, &v0.v, sigma2, alpha);
        if val < best.1 {
            best = (v.clone(), val);
        }
    }
    (ReflectVector::new(best.0), best.1)
}

#[derive(Clone, Debug)]
pub struct LowComplexityOptions {
    pub eps: f64,
    pub max_iters: usize,
    pub gamma: f64,
    pub steps: usize,
    pub unit_amplitude: bool,
}

impl Default for LowComplexityOptions {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            max_iters: 50,
            gamma: 0.01,
            steps: 100,
            unit_amplitude: false,
        }
    }
}

pub fn run_lowcx_ao(inst: &Instance, init_v: &ReflectVector, opts: &LowComplexityOptions) -> SolveReport {
    run_inexact_loop(
        inst,
        init_v,
        opts.eps,
        opts.max_iters,
        opts.unit_amplitude,
        ReflectUpdate::Subgradient {
            gamma: opts.gamma,
            steps: opts.steps,
        },
        "lowcx_ao",
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::mrt_beams;
    use crate::metrics::{quad_forms, QuadEntry};
    use crate::model::tests::tiny_config;

    #[test]
    fn projection_examples() {
        let x = CVec::from_vec(vec![C64::new(2.0, 0.0), C64::new(1.0, 1.0), C64::new(0.3, -0.4)]);
        let p = project_unit_disk(&x);
        assert_eq!(p.v[0], C64::new(1.0, 0.0));
        assert!((p.v[1] - C64::new(1.0, 1.0) / 2f64.sqrt()).norm() < 1e-15);
        assert_eq!(p.v[2], x[2]);
        let pp = project_unit_disk(&p.v);
        assert!((pp.v - &p.v).norm() <= 1e-15);
    }

    fn zero_forms(k: usize, n: usize) -> QuadForms {
        QuadForms {
            entries: vec![
                vec![
                    QuadEntry {
                        c: CVec::zeros(n),
                        d: C64::new(0.0, 0.0),
                    };
                    k
                ];
                k
            ],
        }
    }

    #[test]
    fn zero_data_gives_zero_gradient_and_no_move() {
        let q = zero_forms(2, 3);
        let v0 = ReflectVector::new(CVec::from_element(3, C64::new(0.5, 0.1)));
        let g = subgrad(&q, &v0.v, 1.0, &v0.v, &[1.0, 1.0], &[1.0, 1.0]);
        assert_eq!(g.norm(), 0.0);
        let (v, _) = subgrad_descend(&q, 1.0, &v0, &[1.0, 1.0], &[1.0, 1.0], 0.01, 100);
        assert_eq!(v, v0);
    }

    #[test]
    fn single_user_g_is_its_surrogate() {
        let cfg = tiny_config(1, 2, 1, 4);
        let inst = Instance::sample(&cfg, 1).unwrap();
        let (w, _) = mrt_beams(&inst, &ReflectVector::ones(4));
        let q = quad_forms(&inst, &w).unwrap();
        let v = CVec::from_element(4, C64::new(0.1, 0.2));
        let v0 = CVec::from_element(4, C64::new(1.0, 0.0));
        let (g, m) = objective_g(&q, &v, 3.0, &v0, &cfg.noise_vec(), &[1.0]);
        assert_eq!(m, 0);
        assert_eq!(g, surrogate_f_up(&q, &v, 3.0, &v0, &cfg.noise_vec(), &[1.0], 0));
    }

    #[test]
    fn steps_have_length_gamma_and_best_never_worse() {
        let cfg = tiny_config(3, 2, 1, 6);
        let inst = Instance::sample(&cfg, 9).unwrap();
        let v0 = ReflectVector::ones(6);
        let (w, _) = mrt_beams(&inst, &v0);
        let q = quad_forms(&inst, &w).unwrap();
        let noise = cfg.noise_vec();
        let t = q.min_weighted_sinr(&v0.v, &[1.0; 3], &noise);
        let g = subgrad(&q, &v0.v, t, &v0.v, &noise, &[1.0; 3]);
        let step = g.clone() * C64::from(0.01 / g.norm());
        assert!((step.norm() - 0.01).abs() < 1e-15);
        let (g0, _) = objective_g(&q, &v0.v, t, &v0.v, &noise, &[1.0; 3]);
        assert!(g0.abs() <= 1e-8 * noise[0] * (1.0 + t));
        let (vb, gb) = subgrad_descend(&q, t, &v0, &noise, &[1.0; 3], 0.01, 100);
        assert!(gb <= g0);
        assert!(vb.max_modulus() <= 1.0);
    }

    #[test]
    fn gradient_is_affine_for_fixed_user() {
        let cfg = tiny_config(2, 2, 1, 3);
        let inst = Instance::sample(&cfg, 2).unwrap();
        let (w, _) = mrt_beams(&inst, &ReflectVector::ones(3));
        let q = quad_forms(&inst, &w).unwrap();
        let v0 = CVec::from_element(3, C64::new(1.0, 0.0));
        let va = CVec::from_element(3, C64::new(0.2, 0.1));
        let vb = CVec::from_element(3, C64::new(-0.3, 0.4));
        let (t, m) = (2.0, 0);
        let diff = user_gradient(&q, &va, t, &v0, &[1.0; 2], m) - user_gradient(&q, &vb, t, &v0, &[1.0; 2], m);
        let c = q.get(1, 0).c_mat();
        let expect = (&c * (&va - &vb)) * C64::from(2.0 * t);
        assert!((diff - &expect).norm() <= 1e-12 * expect.norm());
    }
}
