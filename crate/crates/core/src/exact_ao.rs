//! Exact alternating optimization: bisection over SOCP feasibility probes
//! for the transmit beams, and bisection over SDP probes plus Gaussian
//! randomization for the reflect vector.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::bench::{mrt_beams, unit_amplitude_project};
use crate::conic::{
    hermitian_embedding_rows, hermitian_from_embedding, solve, unpack_symmetric, ComplexVar,
    ConicProgram, LinExpr, SolveStatus,
};
use crate::error::{Error, Result};
use crate::metrics::{min_weighted_sinr, quad_forms, LiftedForms, QuadForms, ReflectVector, TxBeams};
use crate::model::{CMat, CVec, Instance, C64};
use crate::report::{SolveReport, Termination};

/// Index map and cross-link matrix of the transmit SOCP.
#[derive(Clone, Debug)]
pub struct TxSocpEncoding {
    /// `(cell, k)` of every linear user index.
    pub users: Vec<(usize, usize)>,
    /// `cross[(m, u)] = a_{cell(u), m}^H w_u`.
    pub cross: DMatrix<C64>,
    /// `sqrt(1 + 1 / (alpha_m t))` per user.
    pub scale: Vec<f64>,
}

impl TxSocpEncoding {
    pub fn new(inst: &Instance, w: &TxBeams, v: &ReflectVector, t: f64) -> Self {
        let a = inst.effective(&v.v);
        let k = inst.num_users();
        let alpha = inst.config.weight_vec();
        Self {
            users: inst.config.users(),
            cross: DMatrix::from_fn(k, k, |m, u| a[w.cell[u]][m].dotc(&w.w[u])),
            scale: alpha.iter().map(|al| (1.0 + 1.0 / (al * t)).sqrt()).collect(),
        }
    }

    /// Whether the beams meet every cone constraint
    /// `scale_m Re(A_mm) >= ||(A_m1, ..., A_mK, sigma_m)||`, with slack `tol`.
    pub fn satisfied(&self, noise: &[f64], tol: f64) -> bool {
        let k = self.users.len();
        (0..k).all(|m| {
            let rhs = ((0..k).map(|u| self.cross[(m, u)].norm_sqr()).sum::<f64>() + noise[m]).sqrt();
            self.scale[m] * self.cross[(m, m)].re >= rhs * (1.0 - tol)
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Probe {
    pub t: f64,
    pub feasible: bool,
}

#[derive(Clone, Debug)]
pub struct TxSolution {
    pub beams: TxBeams,
    /// Largest certified-feasible target (the beams achieve it).
    pub t_lo: f64,
    /// Smallest target shown infeasible, or the analytic upper bound.
    pub t_hi: f64,
    /// Min-weighted SINR of `beams`.
    pub objective: f64,
    pub probes: Vec<Probe>,
}

/// Relative bracket width below which a twice-failed probe ends the
/// bisection instead of raising an error; probes this close to the optimum
/// are poorly conditioned.
const GIVE_UP_GAP: f64 = 1e-2;

/// `a_{cell(u), m} sqrt(P_cell(u)) / sigma_m`, indexed `[u][m]`.
pub(crate) fn scaled_links(inst: &Instance, v: &ReflectVector) -> Vec<Vec<CVec>> {
    let a = inst.effective(&v.v);
    let cell = inst.config.cell_of();
    let noise = inst.config.noise_vec();
    let k = inst.num_users();
    (0..k)
        .map(|u| {
            let p = inst.config.power_w[cell[u]];
            (0..k)
                .map(|m| &a[cell[u]][m] * C64::from((p / noise[m]).sqrt()))
                .collect()
        })
        .collect()
}

/// Adds normalized beam variables (one per user) with per-BS power cones and
/// the phase convention `Im(a_mm^H w_m) = 0`.
pub(crate) fn add_beam_vars(
    p: &mut ConicProgram,
    inst: &Instance,
    links: &[Vec<CVec>],
) -> Vec<ComplexVar> {
    let cell = inst.config.cell_of();
    let k = inst.num_users();
    let w: Vec<ComplexVar> = (0..k)
        .map(|u| p.add_complex(&format!("w{u}"), inst.config.antennas))
        .collect();
    for b in 0..inst.config.cells {
        let mut rows = vec![LinExpr::constant(1.0)];
        for u in (0..k).filter(|&u| cell[u] == b) {
            rows.extend((0..w[u].len).map(|j| LinExpr::var(w[u].re(j))));
            rows.extend((0..w[u].len).map(|j| LinExpr::var(w[u].im(j))));
        }
        p.add_soc(rows);
    }
    for m in 0..k {
        let (_, im) = w[m].inner(links[m][m].as_slice());
        p.add_equality(im);
    }
    w
}

/// Reads normalized beams back, rotates `a_mm^H w_m` onto the nonnegative
/// real axis and rescales to watts, clipping any power excess from solver
/// tolerance.
pub(crate) fn extract_beams(
    inst: &Instance,
    vars: &[ComplexVar],
    x: &[f64],
    v: &ReflectVector,
) -> TxBeams {
    let cfg = &inst.config;
    let cell = cfg.cell_of();
    let a = inst.effective(&v.v);
    let mut beams = TxBeams {
        w: vars
            .iter()
            .enumerate()
            .map(|(u, var)| {
                let w = CVec::from_vec(var.extract(x)) * C64::from(cfg.power_w[cell[u]].sqrt());
                let s = a[cell[u]][u].dotc(&w);
                if s.norm() > 0.0 {
                    w * (s.conj() / s.norm())
                } else {
                    w
                }
            })
            .collect(),
        cell,
    };
    clip_power(&mut beams, &cfg.power_w);
    beams
}

pub(crate) fn clip_power(beams: &mut TxBeams, budgets: &[f64]) {
    for (b, &p) in budgets.iter().enumerate() {
        let used = beams.bs_power(b);
        if used > p {
            let f = C64::from((p / used).sqrt());
            for (w, _) in beams.w.iter_mut().zip(&beams.cell).filter(|(_, c)| **c == b) {
                *w *= f;
            }
        }
    }
}

fn txbf_probe(inst: &Instance, links: &[Vec<CVec>], t: f64) -> (ConicProgram, Vec<ComplexVar>) {
    let mut p = ConicProgram::new();
    let w = add_beam_vars(&mut p, inst, links);
    let alpha = inst.config.weight_vec();
    let k = inst.num_users();
    for m in 0..k {
        let scale = (1.0 + 1.0 / (alpha[m] * t)).sqrt();
        let (re, _) = w[m].inner(links[m][m].as_slice());
        let mut rows = vec![re.scaled(scale)];
        for u in 0..k {
            let (r, i) = w[u].inner(links[u][m].as_slice());
            rows.push(r);
            rows.push(i);
        }
        rows.push(LinExpr::constant(1.0));
        p.add_soc(rows);
    }
    (p, w)
}

/// Interference-free bound `min_m P ||a_mm||^2 / (alpha_m sigma_m^2)`.
fn txbf_upper_bound(inst: &Instance, v: &ReflectVector) -> f64 {
    let a = inst.effective(&v.v);
    let cfg = &inst.config;
    let (cell, alpha, noise) = (cfg.cell_of(), cfg.weight_vec(), cfg.noise_vec());
    (0..inst.num_users())
        .map(|m| cfg.power_w[cell[m]] * a[cell[m]][m].norm_squared() / (alpha[m] * noise[m]))
        .fold(f64::INFINITY, f64::min)
}

/// Optimal transmit beams for a fixed reflect vector by bisection on the
/// target `t`, each probe being a conic feasibility problem.
pub fn solve_txbf(inst: &Instance, v: &ReflectVector, tol_rel: f64) -> Result<TxSolution> {
    solve_txbf_from(inst, v, tol_rel, None)
}

/// Bracket midpoint; wide brackets are split on a log scale.
fn split(lo: f64, hi: f64) -> f64 {
    if lo > 0.0 && hi > 4.0 * lo {
        (lo * hi).sqrt()
    } else {
        0.5 * (lo + hi)
    }
}

/// As [`solve_txbf`], starting the bracket at the better of the equal-split
/// MRT beams and `incumbent`.
pub fn solve_txbf_from(
    inst: &Instance,
    v: &ReflectVector,
    tol_rel: f64,
    incumbent: Option<&TxBeams>,
) -> Result<TxSolution> {
    if !(tol_rel > 0.0) {
        return Err(Error::Config("bisection tolerance must be positive".into()));
    }
    let (mut best, _) = mrt_beams(inst, v);
    let mut lo = min_weighted_sinr(inst, &best, v);
    if let Some(w) = incumbent {
        let t = min_weighted_sinr(inst, w, v);
        if t > lo {
            lo = t;
            best = w.clone();
        }
    }
    let mut hi = txbf_upper_bound(inst, v).max(lo);
    let links = scaled_links(inst, v);
    let mut probes = Vec::new();
    let run = |t: f64, probes: &mut Vec<Probe>| -> Option<Option<TxBeams>> {
        let (prog, vars) = txbf_probe(inst, &links, t);
        let sol = solve(&prog);
        match sol.status {
            SolveStatus::Optimal => {
                probes.push(Probe { t, feasible: true });
                Some(Some(extract_beams(inst, &vars, &sol.x, v)))
            }
            SolveStatus::Infeasible => {
                probes.push(Probe { t, feasible: false });
                Some(None)
            }
            SolveStatus::NumericalFailure => None,
        }
    };
    while hi - lo > tol_rel * hi {
        let mid = split(lo, hi);
        let (t, verdict) = match run(mid, &mut probes) {
            Some(r) => (mid, r),
            None => {
                let retry = lo + 0.5 * (mid - lo);
                match run(retry, &mut probes) {
                    Some(r) => (retry, r),
                    None if hi - lo <= GIVE_UP_GAP * hi => break,
                    None => {
                        return Err(Error::Solver(format!(
                            "transmit probe failed at t={mid:.6e} and t={retry:.6e}"
                        )))
                    }
                }
            }
        };
        match verdict {
            Some(w) => {
                // the probe's beams may do better than asked
                lo = min_weighted_sinr(inst, &w, v).clamp(t, hi);
                best = w;
            }
            None => hi = t,
        }
    }
    let objective = min_weighted_sinr(inst, &best, v);
    Ok(TxSolution {
        beams: best,
        t_lo: lo,
        t_hi: hi,
        objective,
        probes,
    })
}

/// Relaxed lifted solution of the reflective subproblem.
#[derive(Clone, Debug)]
pub struct SdrSolution {
    /// `(N+1) x (N+1)` Hermitian PSD matrix.
    pub v_mat: CMat,
    /// Certified upper bound on the relaxed optimum.
    pub t_relaxed: f64,
    pub rank_estimate: usize,
    /// Eigenvalues of `v_mat`, descending.
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors matching `eigenvalues` (columns).
    pub eigenvectors: CMat,
}

impl SdrSolution {
    pub fn from_matrix(v_mat: CMat, t_relaxed: f64) -> Self {
        let v_mat = (&v_mat + v_mat.adjoint()) * C64::from(0.5);
        let eig = v_mat.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let eigenvectors = CMat::from_columns(
            &order
                .iter()
                .map(|&i| eig.eigenvectors.column(i).into_owned())
                .collect::<Vec<_>>(),
        );
        let rank_estimate = rank_estimate(&eigenvalues);
        Self {
            v_mat,
            t_relaxed,
            rank_estimate,
            eigenvalues,
            eigenvectors,
        }
    }

    /// `sqrt(lambda_1) u_1` normalized so its last entry is 1, as a reflect
    /// vector (entries clipped to the unit disk).
    pub fn principal_vector(&self) -> Option<ReflectVector> {
        let l = self.eigenvalues.len();
        let u = self.eigenvectors.column(0);
        let last = u[l - 1];
        if last.norm() == 0.0 {
            return None;
        }
        let v = CVec::from_fn(l - 1, |n, _| u[n] / last);
        Some(crate::lowcx_ao::project_unit_disk(&v))
    }
}

/// Numerical rank: 1 when `lambda_2 / lambda_1 <= 1e-6`, otherwise the count
/// of eigenvalues above that ratio.
fn rank_estimate(desc: &[f64]) -> usize {
    let top = desc.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return 0;
    }
    desc.iter().filter(|&&l| l / top > 1e-6).count()
}

#[derive(Clone, Debug)]
pub struct ReflectOutcome {
    pub reflect: ReflectVector,
    pub t_achieved: f64,
    pub sdr: SdrSolution,
    /// Set when no candidate beat the incumbent, which is returned instead.
    pub degraded: bool,
    pub probes: Vec<Probe>,
}

struct SdrProbe {
    objective: f64,
    v_mat: CMat,
}

/// Dual of the margin SDP `max s : Tr(Q_m V) - s >= r_m, V_nn <= 1,
/// V_{N+1,N+1} = 1, V >= 0`. Its optimal value equals the margin `s*`; the
/// PSD multiplier is `V`.
/// With `unit` the diagonal of V is pinned to one instead of bounded by it.
fn sdr_probe(q: &QuadForms, lifted: &LiftedForms, alpha: &[f64], sigma2: &[f64], t: f64, unit: bool) -> Option<SdrProbe> {
    let k = q.num_users();
    let n = q.irs_units();
    let l = n + 1;
    let qt: Vec<CMat> = (0..k)
        .map(|m| {
            let rho = 1.0 / (sigma2[m] * (1.0 + alpha[m] * t));
            let hat = |u: usize| {
                let mut r = lifted.r[u][m].clone();
                r[(n, n)] += C64::from(q.get(u, m).d.norm_sqr());
                r
            };
            let mut acc = hat(m);
            for u in (0..k).filter(|&u| u != m) {
                acc -= hat(u) * C64::from(alpha[m] * t);
            }
            acc * C64::from(rho)
        })
        .collect();
    let rt: Vec<f64> = (0..k)
        .map(|m| alpha[m] * t / (1.0 + alpha[m] * t))
        .collect();

    let mut p = ConicProgram::new();
    let mu: Vec<usize> = (0..k).map(|_| p.add_var()).collect();
    let nu: Vec<usize> = (0..n).map(|_| p.add_var()).collect();
    let rho = p.add_var();
    for m in 0..k {
        p.set_objective(mu[m], -rt[m]);
    }
    for &x in &nu {
        p.set_objective(x, 1.0);
    }
    p.set_objective(rho, 1.0);
    let mut sum = LinExpr::constant(-1.0);
    mu.iter().for_each(|&x| {
        sum.add(x, 1.0);
    });
    p.add_equality(sum);
    let signed = if unit { &[][..] } else { &nu[..] };
    p.add_nonneg(mu.iter().chain(signed).map(|&x| LinExpr::var(x)).collect());
    let rows = hermitian_embedding_rows(l, |i, j| {
        let mut re = LinExpr::zero();
        let mut im = LinExpr::zero();
        if i == j {
            re.add(if i < n { nu[i] } else { rho }, 1.0);
        }
        for m in 0..k {
            re.add(mu[m], -qt[m][(i, j)].re);
            im.add(mu[m], -qt[m][(i, j)].im);
        }
        (re, im)
    });
    p.add_psd(2 * l, rows);
    let sol = solve(&p);
    if sol.status != SolveStatus::Optimal {
        return None;
    }
    let y = unpack_symmetric(2 * l, &sol.cone_duals[1]);
    let v_mat = hermitian_from_embedding(l, &y);
    // complex-domain re-check of the multiplier
    let diag_ok = (0..n).all(|i| v_mat[(i, i)].re <= 1.0 + 1e-7 && (!unit || v_mat[(i, i)].re >= 1.0 - 1e-7));
    let last_ok = (v_mat[(n, n)].re - 1.0).abs() <= 1e-7;
    let herm = (&v_mat + v_mat.adjoint()) * C64::from(0.5);
    let eigs = herm.clone().symmetric_eigenvalues();
    let (min_eig, max_eig) = (eigs.min(), eigs.max());
    if !(diag_ok && last_ok && min_eig >= -1e-8 * max_eig.max(1.0)) {
        return None;
    }
    Some(SdrProbe {
        objective: sol.objective,
        v_mat: herm,
    })
}

/// Probe placement for the relaxation bracket. The probe margin decreases
/// in `t`, so once both ends carry a margin the next probe is the secant
/// root (Illinois variant), nudged so a correct guess closes the bracket;
/// bisection is used otherwise or when the bracket stops halving.
#[derive(Default)]
struct MarginSearch {
    lo_margin: Option<f64>,
    hi_margin: Option<f64>,
    last_side: Option<bool>,
    slow: usize,
    /// Relative step above `lo` tried before any probe has failed.
    gallop: Option<f64>,
}

impl MarginSearch {
    fn next(&self, lo: f64, hi: f64, tol_rel: f64) -> f64 {
        let mid = split(lo, hi);
        if let (None, Some(g)) = (self.hi_margin, self.gallop) {
            let t = lo * (1.0 + g);
            return if t < mid { t } else { mid };
        }
        let (Some(a), Some(b)) = (self.lo_margin, self.hi_margin) else {
            return mid;
        };
        if self.slow >= 2 || !(a > b) {
            return mid;
        }
        let root = lo + a / (a - b) * (hi - lo);
        let close = 0.9 * tol_rel * hi;
        if root - lo < 0.5 * close {
            lo + close
        } else if hi - root < 0.5 * close {
            hi - close
        } else {
            root
        }
    }

    fn record(&mut self, feasible: bool, margin: f64, old_width: f64, new_width: f64) {
        if feasible {
            self.lo_margin = Some(margin);
            self.gallop = self.gallop.map(|g| 4.0 * g);
            if self.last_side == Some(true) {
                self.hi_margin = self.hi_margin.map(|m| 0.5 * m);
            }
        } else {
            self.hi_margin = Some(margin);
            if self.last_side == Some(false) {
                self.lo_margin = self.lo_margin.map(|m| 0.5 * m);
            }
        }
        self.last_side = Some(feasible);
        self.slow = if new_width > 0.5 * old_width { self.slow + 1 } else { 0 };
    }
}

/// Reflective step of the exact method: bisection over SDP probes, then
/// rank-one extraction or Gaussian randomization.
#[allow(clippy::too_many_arguments)]
pub fn solve_reflect_sdr(
    q: &QuadForms,
    lifted: &LiftedForms,
    alpha: &[f64],
    sigma2: &[f64],
    incumbent: &ReflectVector,
    tol_rel: f64,
    num_rand: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ReflectOutcome> {
    reflect_sdr(q, lifted, alpha, sigma2, incumbent, tol_rel, num_rand, rng, None, false)
}

/// `gain` is the expected relative improvement over the incumbent; the
/// bracket search starts there instead of splitting the full range. With
/// `unit` every candidate is put on the unit circle before it is compared.
#[allow(clippy::too_many_arguments)]
fn reflect_sdr(
    q: &QuadForms,
    lifted: &LiftedForms,
    alpha: &[f64],
    sigma2: &[f64],
    incumbent: &ReflectVector,
    tol_rel: f64,
    num_rand: usize,
    rng: &mut ChaCha8Rng,
    gain: Option<f64>,
    unit: bool,
) -> Result<ReflectOutcome> {
    if num_rand == 0 {
        return Err(Error::Config("at least one randomization is required".into()));
    }
    let k = q.num_users();
    let t_inc = q.min_weighted_sinr(&incumbent.v, alpha, sigma2);
    let mut lo = t_inc;
    let mut hi = (0..k)
        .map(|m| {
            let e = q.get(m, m);
            let l1: f64 = e.c.iter().map(|x| x.norm()).sum::<f64>() + e.d.norm();
            l1 * l1 / (alpha[m] * sigma2[m])
        })
        .fold(f64::INFINITY, f64::min)
        .max(lo);
    let mut v_mat: Option<CMat> = None;
    let mut probes = Vec::new();
    let mut search = MarginSearch {
        gallop: gain.map(|g| g.max(tol_rel)),
        ..MarginSearch::default()
    };
    while hi - lo > tol_rel * hi {
        let mid = search.next(lo, hi, tol_rel);
        let (t, res) = match sdr_probe(q, lifted, alpha, sigma2, mid, unit) {
            Some(r) => (mid, r),
            None => {
                let retry = lo + 0.5 * (mid - lo);
                match sdr_probe(q, lifted, alpha, sigma2, retry, unit) {
                    Some(r) => (retry, r),
                    None if hi - lo <= GIVE_UP_GAP * hi => break,
                    None => {
                        return Err(Error::Solver(format!(
                            "relaxation probe failed at t={mid:.6e} and t={retry:.6e}"
                        )))
                    }
                }
            }
        };
        let feasible = res.objective >= 0.0;
        probes.push(Probe { t, feasible });
        let width = hi - lo;
        if feasible {
            lo = t;
            v_mat = Some(res.v_mat);
        } else {
            hi = t;
        }
        search.record(feasible, res.objective, width, hi - lo);
    }
    let eval = |v: &CVec| q.min_weighted_sinr(v, alpha, sigma2);
    let Some(v_mat) = v_mat else {
        // no probe beat the incumbent: its own lift is the relaxed solution
        let vb = crate::metrics::vbar(&incumbent.v);
        let sdr = SdrSolution::from_matrix(&vb * vb.adjoint(), hi);
        return Ok(ReflectOutcome {
            reflect: incumbent.clone(),
            t_achieved: t_inc,
            sdr,
            degraded: false,
            probes,
        });
    };
    let sdr = SdrSolution::from_matrix(v_mat, hi);
    let principal = || {
        sdr.principal_vector().map(|v| {
            let v = if unit { unit_amplitude_project(&v) } else { v };
            let t = eval(&v.v);
            (v, t)
        })
    };
    let candidate = if unit {
        // draws are already unit modulus, so they compete with the projection
        [principal(), gaussian_randomize(&sdr, num_rand, rng, eval)]
            .into_iter()
            .flatten()
            .max_by(|a, b| a.1.total_cmp(&b.1))
    } else if sdr.rank_estimate <= 1 {
        principal()
    } else {
        gaussian_randomize(&sdr, num_rand, rng, eval)
    };
    match candidate {
        Some((v, t)) if t >= t_inc => Ok(ReflectOutcome {
            reflect: v,
            t_achieved: t,
            sdr,
            degraded: false,
            probes,
        }),
        _ => Ok(ReflectOutcome {
            reflect: incumbent.clone(),
            t_achieved: t_inc,
            sdr,
            degraded: true,
            probes,
        }),
    }
}

/// Draws `U Sigma^{1/2} r` with `r ~ CN(0, I)`, maps each draw to the unit
/// modulus vector `exp(j arg(x_n / x_{N+1}))` and keeps the best under `eval`.
pub fn gaussian_randomize<F>(
    sdr: &SdrSolution,
    num_draws: usize,
    rng: &mut ChaCha8Rng,
    eval: F,
) -> Option<(ReflectVector, f64)>
where
    F: Fn(&CVec) -> f64,
{
    let l = sdr.eigenvalues.len();
    let n = l - 1;
    let sqrt_l: Vec<f64> = sdr.eigenvalues.iter().map(|x| x.max(0.0).sqrt()).collect();
    let mut factor = sdr.eigenvectors.clone();
    for (j, s) in sqrt_l.iter().enumerate() {
        factor.column_mut(j).scale_mut(*s);
    }
    let mut best: Option<(CVec, f64)> = None;
    for _ in 0..num_draws {
        let r = CVec::from_fn(l, |_, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        });
        let x = &factor * r;
        let ref_phase = x[n];
        if ref_phase.norm() == 0.0 {
            continue;
        }
        let v = CVec::from_fn(n, |i, _| {
            let z = x[i] / ref_phase;
            if z.norm() > 0.0 {
                C64::from_polar(1.0, z.arg())
            } else {
                C64::new(1.0, 0.0)
            }
        });
        let t = eval(&v);
        if best.as_ref().is_none_or(|(_, bt)| t > *bt) {
            best = Some((v, t));
        }
    }
    best.map(|(v, t)| (ReflectVector::new(v), t))
}

#[derive(Clone, Debug)]
pub struct ExactOptions {
    pub eps: f64,
    pub max_iters: usize,
    pub num_rand: usize,
    pub tol_rel: f64,
    /// Seed of the randomization stream.
    pub seed: u64,
    /// Force unit-modulus reflection after every reflective update.
    pub unit_amplitude: bool,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            max_iters: 30,
            num_rand: 1000,
            tol_rel: 1e-3,
            seed: 0,
            unit_amplitude: false,
        }
    }
}

/// Bookkeeping common to the alternating loops.
pub(crate) struct Tracker {
    pub start: Instant,
    pub trace: Vec<f64>,
    pub half_trace: Vec<f64>,
    pub reflect_times: Vec<Duration>,
    pub best: (TxBeams, ReflectVector, f64),
}

impl Tracker {
    pub fn new(w: TxBeams, v: ReflectVector, t: f64) -> Self {
        Self {
            start: Instant::now(),
            trace: vec![t],
            half_trace: Vec::new(),
            reflect_times: Vec::new(),
            best: (w, v, t),
        }
    }

    pub fn offer(&mut self, w: &TxBeams, v: &ReflectVector, t: f64) {
        if t > self.best.2 {
            self.best = (w.clone(), v.clone(), t);
        }
    }

    pub fn finish(
        self,
        inst: &Instance,
        algorithm: &str,
        iterations: usize,
        termination: Termination,
        detail: Option<String>,
    ) -> SolveReport {
        let (beams, reflect, _) = self.best;
        let objective = min_weighted_sinr(inst, &beams, &reflect);
        SolveReport {
            algorithm: algorithm.to_string(),
            trace: self.trace,
            half_trace: self.half_trace,
            beams,
            reflect,
            objective,
            iterations,
            wall: self.start.elapsed(),
            reflect_times: self.reflect_times,
            termination,
            detail,
        }
    }
}

pub(crate) fn improved(new: f64, old: f64, eps: f64) -> bool {
    new - old >= eps * old.abs()
}

/// Algorithm with exact subproblem solutions on both blocks.
pub fn run_exact_ao(inst: &Instance, init_v: &ReflectVector, opts: &ExactOptions) -> SolveReport {
    const NAME: &str = "exact_ao";
    let alpha = inst.config.weight_vec();
    let noise = inst.config.noise_vec();
    let mut v = init_v.clone();
    let (mut w, _) = mrt_beams(inst, &v);
    let t0 = min_weighted_sinr(inst, &w, &v);
    let mut tr = Tracker::new(w.clone(), v.clone(), t0);
    let mut t_prev = t0;
    let mut gain = None;
    for l in 1..=opts.max_iters {
        let tx = match solve_txbf_from(inst, &v, opts.tol_rel, Some(&w)) {
            Ok(tx) => tx,
            Err(e) => return tr.finish(inst, NAME, l, Termination::SolverFailure, Some(e.to_string())),
        };
        w = tx.beams;
        let t_tx = tx.objective;
        tr.half_trace.push(t_tx);
        tr.offer(&w, &v, t_tx);
        if l >= 2 && !improved(t_tx, t_prev, opts.eps) {
            tr.trace.push(t_tx);
            return tr.finish(inst, NAME, l, Termination::Converged, None);
        }

        // one stream per iteration: fewer draws see a prefix of more draws
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(l as u64);
        let started = Instant::now();
        let step = quad_forms(inst, &w).and_then(|q| {
            let lifted = crate::metrics::lift_matrices(&q);
            reflect_sdr(&q, &lifted, &alpha, &noise, &v, opts.tol_rel, opts.num_rand, &mut rng, gain, opts.unit_amplitude)
        });
        tr.reflect_times.push(started.elapsed());
        let out = match step {
            Ok(out) => out,
            Err(e) => return tr.finish(inst, NAME, l, Termination::SolverFailure, Some(e.to_string())),
        };
        let mut v_new = out.reflect;
        if opts.unit_amplitude {
            v_new = unit_amplitude_project(&v_new);
        }
        let t_ref = min_weighted_sinr(inst, &w, &v_new);
        tr.half_trace.push(t_ref);
        if out.degraded || t_ref < t_tx {
            tr.trace.push(t_ref.min(t_tx));
            return tr.finish(inst, NAME, l, Termination::ObjectiveDecreased, None);
        }
        gain = Some(t_ref / t_tx - 1.0);
        v = v_new;
        tr.offer(&w, &v, t_ref);
        tr.trace.push(t_ref);
        if !improved(t_ref, t_tx, opts.eps) {
            return tr.finish(inst, NAME, l, Termination::Converged, None);
        }
        t_prev = t_ref;
    }
    tr.finish(inst, NAME, opts.max_iters, Termination::MaxIters, None)
}
