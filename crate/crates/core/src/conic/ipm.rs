//! Primal-dual interior-point method on the homogeneous self-dual embedding
//! with Nesterov-Todd scaling and Mehrotra predictor-corrector steps.
//!
//! Internally the program is
//!
//! ```text
//! minimize c'x  s.t.  G x + s = h,  A x = b,  s in K
//! ```
//!
//! with dual `A'y + G'z + c = 0`, `z in K`.

use nalgebra::{DMatrix, DVector};

use super::cones::{Cone, Layout, Op, Scaling};
use super::{ConeKind, ConicProgram, ConicSolution, SolveStatus};

#[derive(Clone, Debug)]
pub struct SolverSettings {
    pub max_iters: usize,
    pub feastol: f64,
    pub abstol: f64,
    pub reltol: f64,
    /// Absolute tolerance for the final re-check of the returned point.
    pub residual_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iters: 100,
            feastol: 1e-9,
            abstol: 1e-9,
            reltol: 1e-8,
            residual_tol: 1e-7,
        }
    }
}

struct Data {
    c: DVector<f64>,
    g: DMatrix<f64>,
    h: DVector<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    layout: Layout,
    /// `A' = Q1 R1` with `Q2` spanning the null space of `A`.
    q1: DMatrix<f64>,
    q2: DMatrix<f64>,
    r1: DMatrix<f64>,
}

impl Data {
    fn from_program(p: &ConicProgram) -> Self {
        let n = p.num_vars;
        let cones: Vec<Cone> = p
            .cones
            .iter()
            .map(|blk| match blk.kind {
                ConeKind::Nonnegative => Cone::Nonneg(blk.rows.len()),
                ConeKind::SecondOrder => Cone::Soc(blk.rows.len()),
                ConeKind::Psd { order } => Cone::Psd(order),
            })
            .collect();
        let layout = Layout::new(cones);
        let mut g = DMatrix::zeros(layout.total, n);
        let mut h = DVector::zeros(layout.total);
        for (blk, &off) in p.cones.iter().zip(&layout.offsets) {
            // (row in internal vector, packed row index)
            let map: Vec<(usize, usize)> = match blk.kind {
                ConeKind::Psd { order } => (0..order)
                    .flat_map(|j| (0..order).map(move |i| (i, j)))
                    .map(|(i, j)| (j * order + i, super::packed_index(order, i, j)))
                    .collect(),
                _ => (0..blk.rows.len()).map(|k| (k, k)).collect(),
            };
            for (row, k) in map {
                let e = &blk.rows[k];
                h[off + row] = e.constant;
                for &(var, coef) in &e.terms {
                    g[(off + row, var)] -= coef;
                }
            }
        }
        let mut a = DMatrix::zeros(p.equalities.len(), n);
        let mut b = DVector::zeros(p.equalities.len());
        for (i, e) in p.equalities.iter().enumerate() {
            b[i] = -e.constant;
            for &(var, coef) in &e.terms {
                a[(i, var)] += coef;
            }
        }
        let m = a.nrows();
        let mut padded = DMatrix::zeros(n, n.max(m));
        padded.view_mut((0, 0), (n, m)).copy_from(&a.transpose());
        let qr = padded.qr();
        let (q, r) = (qr.q(), qr.r());
        Self {
            c: DVector::from_column_slice(&p.objective),
            g,
            h,
            a,
            b,
            layout,
            q1: q.columns(0, m).into_owned(),
            q2: q.columns(m, n - m.min(n)).into_owned(),
            r1: r.view((0, 0), (m, m)).into_owned(),
        }
    }
}

enum Verdict {
    Optimal,
    Infeasible,
    Failure(String),
}

#[derive(Clone)]
struct Iterate {
    x: DVector<f64>,
    y: DVector<f64>,
    s: DVector<f64>,
    z: DVector<f64>,
    tau: f64,
    kappa: f64,
}

struct Outcome {
    verdict: Verdict,
    it: Iterate,
    iterations: usize,
    dres: f64,
}

/// Reduced KKT system `[[G'W'WG, A'], [A, 0]]`, solved by eliminating the
/// equality constraints through the null space of `A` and factoring
/// `Q2' G'W'WG Q2` by Cholesky.
struct Kkt<'a> {
    data: &'a Data,
    scaling: &'a Scaling,
    wg: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl<'a> Kkt<'a> {
    fn new(data: &'a Data, scaling: &'a Scaling) -> Option<Self> {
        let wg = scaling.apply_columns(&data.layout, &data.g, Op::W);
        let wq = &wg * &data.q2;
        let mut h2 = wq.tr_mul(&wq);
        let diag_max = h2.diagonal().iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let chol = match h2.clone().cholesky() {
            Some(c) => c,
            None => {
                for i in 0..h2.nrows() {
                    h2[(i, i)] += 1e-13 * diag_max.max(1.0);
                }
                h2.cholesky()?
            }
        };
        Some(Self {
            data,
            scaling,
            wg,
            chol,
        })
    }

    fn k_times(&self, x: &DVector<f64>) -> DVector<f64> {
        self.wg.tr_mul(&(&self.wg * x))
    }

    /// `[[K, A'], [A, 0]] (x, y) = (top, r2)` with `K = G'W'WG`.
    fn solve_xy(&self, top: &DVector<f64>, r2: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        let d = self.data;
        // A x = r2 fixes the range component: R1' x1 = r2
        let x1 = d.r1.transpose().solve_lower_triangular(r2)?;
        let xa = &d.q1 * x1;
        let f = d.q2.tr_mul(&(top - self.k_times(&xa)));
        let x = xa + &d.q2 * self.chol.solve(&f);
        // R1 y = Q1'(top - K x)
        let y = d.r1.solve_upper_triangular(&d.q1.tr_mul(&(top - self.k_times(&x))))?;
        Some((x, y))
    }

    /// Solves `[[0, A', G'], [A, 0, 0], [G, 0, -W^-1 W^-T]] (x, y, z) = (r1, r2, r3)`;
    /// returns `(x, y, z, W^-T z)`.
    fn solve(
        &self,
        r1: &DVector<f64>,
        r2: &DVector<f64>,
        r3: &DVector<f64>,
    ) -> Option<(DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>)> {
        let layout = &self.data.layout;
        let a = &self.data.a;
        let w_r3 = DVector::from_vec(self.scaling.apply(layout, r3.as_slice(), Op::W));
        let top = r1 + self.wg.tr_mul(&w_r3);
        let (mut x, mut y) = self.solve_xy(&top, r2)?;
        let scale = 1.0 + top.amax().max(r2.amax());
        for _ in 0..3 {
            let e1 = &top - self.k_times(&x) - a.tr_mul(&y);
            let e2 = r2 - a * &x;
            if e1.amax().max(e2.amax()) <= 1e-15 * scale {
                break;
            }
            let (dx, dy) = self.solve_xy(&e1, &e2)?;
            x += dx;
            y += dy;
        }
        let zt = &self.wg * &x - w_r3;
        let z = DVector::from_vec(self.scaling.apply(layout, zt.as_slice(), Op::WT));
        if !(x.iter().chain(y.iter()).chain(z.iter()).all(|v| v.is_finite())) {
            return None;
        }
        Some((x, y, z, zt))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Step {
    dx: DVector<f64>,
    dy: DVector<f64>,
    dz: DVector<f64>,
    ds: DVector<f64>,
    dzt: Vec<f64>,
    dst: Vec<f64>,
    dtau: f64,
    dkappa: f64,
}

fn hsd(data: &Data, st: &SolverSettings) -> Outcome {
    let layout = &data.layout;
    let (n, p) = (data.c.len(), data.b.len());
    let e = DVector::from_vec(layout.identity());
    let mut it = Iterate {
        x: DVector::zeros(n),
        y: DVector::zeros(p),
        s: e.clone(),
        z: e.clone(),
        tau: 1.0,
        kappa: 1.0,
    };
    let resx0 = data.c.norm().max(1.0);
    let resy0 = data.b.norm().max(1.0);
    let resz0 = data.h.norm().max(1.0);
    let degree = layout.degree as f64;
    let mut iterations = 0;
    // best iterate by residuals, and the smallest infeasibility certificate seen
    let mut best: Option<(f64, Iterate, f64, usize)> = None;
    let mut best_pinf = f64::INFINITY;
    // pure feasibility problems only need a primal point
    let feasibility = data.c.iter().all(|&v| v == 0.0);
    let loose_ok = |pres: f64, dres: f64, gapok: f64| pres <= 1e-7 && dres <= 1e-7 && gapok <= 1e-6;

    let fail = |it: Iterate,
                iterations: usize,
                msg: String,
                best: Option<(f64, Iterate, f64, usize)>,
                best_pinf: f64| {
        // near-optimal or near-infeasible fallbacks with looser tolerances
        match best {
            Some((score, bit, dres, _)) if score <= 1e-7 => Outcome {
                verdict: Verdict::Optimal,
                it: bit,
                iterations,
                dres,
            },
            _ => Outcome {
                verdict: if best_pinf <= 1e-7 {
                    Verdict::Infeasible
                } else {
                    Verdict::Failure(msg)
                },
                it,
                iterations,
                dres: f64::NAN,
            },
        }
    };

    for iter in 0..=st.max_iters {
        iterations = iter;
        let gx = &data.g * &it.x;
        let ax = &data.a * &it.x;
        let aty = data.a.tr_mul(&it.y);
        let gtz = data.g.tr_mul(&it.z);
        let rx = &aty + &gtz + &data.c * it.tau;
        let ry = &data.b * it.tau - &ax;
        let rz = &it.s + &gx - &data.h * it.tau;
        let cx = data.c.dot(&it.x);
        let by = data.b.dot(&it.y);
        let hz = data.h.dot(&it.z);
        let rt = it.kappa + cx + by + hz;

        let sz = it.s.dot(&it.z);
        let pcost = cx / it.tau;
        let dcost = -(by + hz) / it.tau;
        let gap = sz / (it.tau * it.tau);
        let pres = (ry.norm() / it.tau / resy0).max(rz.norm() / it.tau / resz0);
        let dres = rx.norm() / it.tau / resx0;
        let relgap = if pcost < 0.0 {
            gap / -pcost
        } else if dcost > 0.0 {
            gap / dcost
        } else {
            f64::INFINITY
        };
        let pinf = (hz + by < 0.0).then(|| (&aty + &gtz).norm() / resx0 / -(hz + by));
        let dinf = (cx < 0.0)
            .then(|| (ax.norm() / resy0).max((&gx + &it.s).norm() / resz0) / -cx);
        let gapok = gap.min(relgap);
        if loose_ok(pres, dres, gapok) {
            let score = pres.max(dres).max(gapok / 10.0);
            if best.as_ref().is_none_or(|b| score < b.0) {
                best = Some((score, it.clone(), dres, iter));
            }
        }
        if let Some(v) = pinf {
            best_pinf = best_pinf.min(v);
        }
        if feasibility && pres <= 1e-7 && best.is_none() {
            best = Some((pres, it.clone(), dres, iter));
        }
        if pres <= st.feastol && dres <= st.feastol && (gap <= st.abstol || relgap <= st.reltol) {
            return Outcome {
                verdict: Verdict::Optimal,
                it,
                iterations: iter,
                dres,
            };
        }
        if pinf.is_some_and(|v| v <= st.feastol) {
            return Outcome {
                verdict: Verdict::Infeasible,
                it,
                iterations: iter,
                dres,
            };
        }
        if dinf.is_some_and(|v| v <= st.feastol) {
            return Outcome {
                verdict: Verdict::Failure("dual infeasible (unbounded objective)".into()),
                it,
                iterations: iter,
                dres,
            };
        }
        if iter == st.max_iters {
            break;
        }
        if best.as_ref().is_some_and(|b| iter >= b.3 + 5) {
            return fail(it, iter, "stalled".into(), best, best_pinf);
        }
        if it.tau <= 1e-10 * it.kappa {
            // tau has collapsed: accept a weaker infeasibility certificate
            let verdict = if best_pinf <= 1e-3 {
                Verdict::Infeasible
            } else {
                Verdict::Failure("homogeneous scale collapsed".into())
            };
            return Outcome {
                verdict,
                it,
                iterations: iter,
                dres: f64::NAN,
            };
        }

        let Some(scaling) = layout.scaling(it.s.as_slice(), it.z.as_slice()) else {
            return fail(it, iter, "iterate left the cone interior".into(), best.clone(), best_pinf);
        };
        let lambda = scaling.lambda.clone();
        let mu = (sz + it.tau * it.kappa) / (degree + 1.0);
        let Some(kkt) = Kkt::new(data, &scaling) else {
            return fail(it, iter, "singular KKT system".into(), best.clone(), best_pinf);
        };
        let Some((x1, y1, z1, zt1)) = kkt.solve(&(-&data.c), &data.b, &data.h) else {
            return fail(it, iter, "KKT solve failed".into(), best.clone(), best_pinf);
        };
        let denom = -zt1.norm_squared() - it.kappa / it.tau;

        let newton = |eta: f64, dsz: &[f64], dtk: f64| -> Option<Step> {
            let dst_rhs = layout.jordan_div(&lambda, dsz);
            let winv_ds = DVector::from_vec(scaling.apply(layout, &dst_rhs, Op::WInv));
            let r1 = -&rx * eta;
            let r2 = &ry * eta;
            let r3 = -&rz * eta - winv_ds;
            let (x2, y2, z2, zt2) = kkt.solve(&r1, &r2, &r3)?;
            let num = -eta * rt - dtk / it.tau
                - (data.c.dot(&x2) + data.b.dot(&y2) + data.h.dot(&z2));
            let dtau = num / denom;
            let dx = x2 + &x1 * dtau;
            let dy = y2 + &y1 * dtau;
            let dz = z2 + &z1 * dtau;
            let dzt: Vec<f64> = (zt2 + &zt1 * dtau).iter().copied().collect();
            let dst: Vec<f64> = dst_rhs.iter().zip(&dzt).map(|(a, b)| a - b).collect();
            let ds = DVector::from_vec(scaling.apply(layout, &dst, Op::WInv));
            let dkappa = (dtk - it.kappa * dtau) / it.tau;
            Some(Step {
                dx,
                dy,
                dz,
                ds,
                dzt,
                dst,
                dtau,
                dkappa,
            })
        };
        let step_len = |d: &Step| -> f64 {
            let mut a = layout.max_step(&lambda, &d.dst).min(layout.max_step(&lambda, &d.dzt));
            if d.dtau < 0.0 {
                a = a.min(-it.tau / d.dtau);
            }
            if d.dkappa < 0.0 {
                a = a.min(-it.kappa / d.dkappa);
            }
            a
        };

        let ll = layout.jordan_prod(&lambda, &lambda);
        let dsz_aff: Vec<f64> = ll.iter().map(|v| -v).collect();
        let Some(aff) = newton(1.0, &dsz_aff, -it.tau * it.kappa) else {
            return fail(it, iter, "affine step failed".into(), best.clone(), best_pinf);
        };
        let alpha_aff = step_len(&aff).min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3);
        let corr = layout.jordan_prod(&aff.dst, &aff.dzt);
        let dsz: Vec<f64> = (0..layout.total)
            .map(|i| -ll[i] - corr[i] + sigma * mu * e[i])
            .collect();
        let dtk = -it.tau * it.kappa - aff.dtau * aff.dkappa + sigma * mu;
        let Some(mut step) = newton(1.0 - sigma, &dsz, dtk) else {
            return fail(it, iter, "combined step failed".into(), best.clone(), best_pinf);
        };
        layout.symmetrize(step.dz.as_mut_slice());
        layout.symmetrize(step.ds.as_mut_slice());
        let alpha = (0.99 * step_len(&step)).min(1.0);
        if !(alpha > 1e-12) {
            return fail(it, iter, "step length vanished".into(), best.clone(), best_pinf);
        }
        it.x.axpy(alpha, &step.dx, 1.0);
        it.y.axpy(alpha, &step.dy, 1.0);
        it.z.axpy(alpha, &step.dz, 1.0);
        it.s.axpy(alpha, &step.ds, 1.0);
        it.tau += alpha * step.dtau;
        it.kappa += alpha * step.dkappa;
    }
    fail(it, iterations, "iteration limit reached".into(), best, best_pinf)
}

/// Solves with default settings.
pub fn solve(p: &ConicProgram) -> ConicSolution {
    solve_with(p, &SolverSettings::default())
}

pub fn solve_with(p: &ConicProgram, st: &SolverSettings) -> ConicSolution {
    let failed = |detail: String| ConicSolution {
        status: SolveStatus::NumericalFailure,
        x: vec![0.0; p.num_vars],
        objective: f64::NAN,
        iterations: 0,
        primal_residual: f64::INFINITY,
        dual_residual: f64::INFINITY,
        cone_duals: Vec::new(),
        equality_duals: Vec::new(),
        detail: Some(detail),
    };
    if let Err(err) = p.validate() {
        return failed(err.to_string());
    }
    let data = Data::from_program(p);
    let out = hsd(&data, st);
    let tau = out.it.tau;
    let x: Vec<f64> = out.it.x.iter().map(|v| v / tau).collect();
    let z: Vec<f64> = out.it.z.iter().map(|v| v / tau).collect();
    let y: Vec<f64> = out.it.y.iter().map(|v| v / tau).collect();
    let primal_residual = primal_violation(p, &data, &x);
    let cone_duals = p
        .cones
        .iter()
        .zip(&data.layout.offsets)
        .map(|(blk, &off)| match blk.kind {
            ConeKind::Psd { order } => (0..order)
                .flat_map(|j| (j..order).map(move |i| (i, j)))
                .map(|(i, j)| 0.5 * (z[off + j * order + i] + z[off + i * order + j]))
                .collect(),
            _ => z[off..off + blk.rows.len()].to_vec(),
        })
        .collect();
    let (status, detail) = match out.verdict {
        Verdict::Optimal if primal_residual <= st.residual_tol => (SolveStatus::Optimal, None),
        Verdict::Optimal => (
            SolveStatus::NumericalFailure,
            Some(format!("residual {primal_residual:.3e} above tolerance")),
        ),
        Verdict::Infeasible => (SolveStatus::Infeasible, None),
        Verdict::Failure(msg) => (SolveStatus::NumericalFailure, Some(msg)),
    };
    let objective = if status == SolveStatus::Optimal {
        dot(&p.objective, &x)
    } else {
        f64::NAN
    };
    ConicSolution {
        status,
        x,
        objective,
        iterations: out.iterations,
        primal_residual,
        dual_residual: out.dres,
        cone_duals,
        equality_duals: y,
        detail,
    }
}

/// Largest violation of the original constraints at `x`.
fn primal_violation(p: &ConicProgram, data: &Data, x: &[f64]) -> f64 {
    let eq = p
        .equalities
        .iter()
        .map(|e| e.eval(x).abs())
        .fold(0.0, f64::max);
    let xv = DVector::from_column_slice(x);
    let sv = &data.h - &data.g * xv;
    let cone = data.layout.violation(sv.as_slice());
    if eq.is_finite() && cone.is_finite() {
        eq.max(cone)
    } else {
        f64::INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::super::{LinExpr, SolveStatus};
    use super::*;

    #[test]
    fn lp_lower_bound() {
        let mut p = ConicProgram::new();
        let x = p.add_var();
        p.set_objective(x, 1.0);
        p.add_nonneg(vec![LinExpr { terms: vec![(x, 1.0)], constant: -1.0 }]);
        let sol = solve(&p);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-7);
    }

    #[test]
    fn lp_infeasible() {
        let mut p = ConicProgram::new();
        let x = p.add_var();
        p.add_nonneg(vec![
            LinExpr { terms: vec![(x, 1.0)], constant: -1.0 },
            LinExpr::term(x, -1.0),
        ]);
        assert_eq!(solve(&p).status, SolveStatus::Infeasible);
    }

    #[test]
    fn soc_pythagoras() {
        let mut p = ConicProgram::new();
        let t = p.add_var();
        p.set_objective(t, 1.0);
        p.add_soc(vec![LinExpr::var(t), LinExpr::constant(3.0), LinExpr::constant(4.0)]);
        let sol = solve(&p);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective - 5.0).abs() < 1e-7);
    }

    #[test]
    fn psd_trace_above_identity() {
        // X = [[a, b], [b, c]], minimize a + c subject to X - I >= 0
        let mut p = ConicProgram::new();
        let (a, b, c) = (p.add_var(), p.add_var(), p.add_var());
        p.set_objective(a, 1.0);
        p.set_objective(c, 1.0);
        p.add_psd(
            2,
            vec![
                LinExpr { terms: vec![(a, 1.0)], constant: -1.0 },
                LinExpr::var(b),
                LinExpr { terms: vec![(c, 1.0)], constant: -1.0 },
            ],
        );
        let sol = solve(&p);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective - 2.0).abs() < 1e-7);
    }

    #[test]
    fn equality_constrained_soc() {
        // minimize t s.t. ||(x, y)|| <= t, x + y = 2  =>  t = sqrt(2)
        let mut p = ConicProgram::new();
        let (t, x, y) = (p.add_var(), p.add_var(), p.add_var());
        p.set_objective(t, 1.0);
        p.add_soc(vec![LinExpr::var(t), LinExpr::var(x), LinExpr::var(y)]);
        let mut e = LinExpr::var(x);
        e.add(y, 1.0).add_constant(-2.0);
        p.add_equality(e);
        let sol = solve(&p);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective - 2f64.sqrt()).abs() < 1e-7);
        assert!((sol.x[x] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn soc_infeasible_and_unbounded() {
        // ||x|| <= 1 and x >= 2
        let mut p = ConicProgram::new();
        let x = p.add_var();
        p.add_soc(vec![LinExpr::constant(1.0), LinExpr::var(x)]);
        p.add_nonneg(vec![LinExpr { terms: vec![(x, 1.0)], constant: -2.0 }]);
        assert_eq!(solve(&p).status, SolveStatus::Infeasible);

        let mut p = ConicProgram::new();
        let x = p.add_var();
        p.set_objective(x, -1.0);
        p.add_nonneg(vec![LinExpr::var(x)]);
        assert_eq!(solve(&p).status, SolveStatus::NumericalFailure);
    }

    #[test]
    fn psd_max_eigen_of_fixed_matrix() {
        // minimize t s.t. t I - M >= 0  =>  t = lambda_max(M)
        let m = [[2.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 1.0]];
        let mut p = ConicProgram::new();
        let t = p.add_var();
        p.set_objective(t, 1.0);
        let mut rows = Vec::new();
        for j in 0..3 {
            for i in j..3 {
                let mut e = LinExpr::constant(-m[i][j]);
                if i == j {
                    e.add(t, 1.0);
                }
                rows.push(e);
            }
        }
        p.add_psd(3, rows);
        let sol = solve(&p);
        let mm = DMatrix::from_fn(3, 3, |i, j| m[i][j]);
        let lmax = mm.symmetric_eigenvalues().max();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective - lmax).abs() < 1e-7);
        // the dual is a unit-trace PSD matrix aligned with the top eigenvector
        let y = super::super::unpack_symmetric(3, &sol.cone_duals[0]);
        assert!((y.trace() - 1.0).abs() < 1e-6);
    }
}
