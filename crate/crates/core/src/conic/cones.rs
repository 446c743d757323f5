//! Cone algebra for the interior-point iteration: Jordan products, scalings
//! and step lengths.
//!
//! Vectors are concatenations of blocks. PSD blocks of order `n` are stored as
//! full `n x n` column-major matrices, so the flat dot product equals the
//! trace inner product.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Cone {
    Nonneg(usize),
    Soc(usize),
    Psd(usize),
}

impl Cone {
    pub fn len(self) -> usize {
        match self {
            Cone::Nonneg(m) | Cone::Soc(m) => m,
            Cone::Psd(n) => n * n,
        }
    }

    /// Barrier degree of the block.
    pub fn degree(self) -> usize {
        match self {
            Cone::Nonneg(m) => m,
            Cone::Soc(_) => 1,
            Cone::Psd(n) => n,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Op {
    W,
    WInv,
    WT,
    #[cfg_attr(not(test), allow(dead_code))]
    WInvT,
}

#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub cones: Vec<Cone>,
    pub offsets: Vec<usize>,
    pub total: usize,
    pub degree: usize,
}

fn mat(n: usize, x: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(n, n, x)
}

fn sym(n: usize, x: &[f64]) -> DMatrix<f64> {
    let m = mat(n, x);
    (&m + m.transpose()) * 0.5
}

impl Layout {
    pub fn new(cones: Vec<Cone>) -> Self {
        let mut offsets = Vec::with_capacity(cones.len());
        let mut total = 0;
        for c in &cones {
            offsets.push(total);
            total += c.len();
        }
        let degree = cones.iter().map(|c| c.degree()).sum();
        Self {
            cones,
            offsets,
            total,
            degree,
        }
    }

    fn blocks(&self) -> impl Iterator<Item = (Cone, std::ops::Range<usize>)> + '_ {
        self.cones
            .iter()
            .zip(&self.offsets)
            .map(|(c, &o)| (*c, o..o + c.len()))
    }

    pub fn identity(&self) -> Vec<f64> {
        let mut e = vec![0.0; self.total];
        for (cone, r) in self.blocks() {
            let b = &mut e[r];
            match cone {
                Cone::Nonneg(_) => b.fill(1.0),
                Cone::Soc(_) => b[0] = 1.0,
                Cone::Psd(n) => (0..n).for_each(|i| b[i * n + i] = 1.0),
            }
        }
        e
    }

    pub fn jordan_prod(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.total];
        for (cone, r) in self.blocks() {
            let (a, b, o) = (&a[r.clone()], &b[r.clone()], &mut out[r]);
            match cone {
                Cone::Nonneg(_) => {
                    for i in 0..a.len() {
                        o[i] = a[i] * b[i];
                    }
                }
                Cone::Soc(_) => {
                    o[0] = a.iter().zip(b).map(|(x, y)| x * y).sum();
                    for i in 1..a.len() {
                        o[i] = a[0] * b[i] + b[0] * a[i];
                    }
                }
                Cone::Psd(n) => {
                    let (ma, mb) = (mat(n, a), mat(n, b));
                    let p = (&ma * &mb + &mb * &ma) * 0.5;
                    o.copy_from_slice(p.as_slice());
                }
            }
        }
        out
    }

    /// Solves `lambda o u = v` for `u`, where `lambda` is a scaled point
    /// (diagonal for PSD blocks).
    pub fn jordan_div(&self, lambda: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.total];
        for (cone, r) in self.blocks() {
            let (l, v, o) = (&lambda[r.clone()], &v[r.clone()], &mut out[r]);
            match cone {
                Cone::Nonneg(_) => {
                    for i in 0..l.len() {
                        o[i] = v[i] / l[i];
                    }
                }
                Cone::Soc(_) => {
                    let det = l[0] * l[0] - l[1..].iter().map(|x| x * x).sum::<f64>();
                    let dot1: f64 = l[1..].iter().zip(&v[1..]).map(|(x, y)| x * y).sum();
                    o[0] = (l[0] * v[0] - dot1) / det;
                    for i in 1..l.len() {
                        o[i] = (v[i] - o[0] * l[i]) / l[0];
                    }
                }
                Cone::Psd(n) => {
                    for j in 0..n {
                        for i in 0..n {
                            o[j * n + i] = 2.0 * v[j * n + i] / (l[i * n + i] + l[j * n + j]);
                        }
                    }
                }
            }
        }
        out
    }

    /// Largest `alpha` with `lambda + alpha * d` in the cone, for a scaled
    /// interior point `lambda`. Returns `f64::INFINITY` when unbounded.
    pub fn max_step(&self, lambda: &[f64], d: &[f64]) -> f64 {
        let mut alpha = f64::INFINITY;
        for (cone, r) in self.blocks() {
            let (l, d) = (&lambda[r.clone()], &d[r]);
            let a = match cone {
                Cone::Nonneg(_) => l
                    .iter()
                    .zip(d)
                    .filter(|(_, di)| **di < 0.0)
                    .map(|(li, di)| -li / di)
                    .fold(f64::INFINITY, f64::min),
                Cone::Soc(_) => soc_step(l, d),
                Cone::Psd(n) => {
                    let scale: Vec<f64> = (0..n).map(|i| 1.0 / l[i * n + i].sqrt()).collect();
                    let m = DMatrix::from_fn(n, n, |i, j| {
                        0.5 * (d[j * n + i] + d[i * n + j]) * scale[i] * scale[j]
                    });
                    let min = m.symmetric_eigenvalues().min();
                    if min < 0.0 {
                        -1.0 / min
                    } else {
                        f64::INFINITY
                    }
                }
            };
            alpha = alpha.min(a);
        }
        alpha
    }

    /// Replaces every PSD block by its symmetric part.
    pub fn symmetrize(&self, x: &mut [f64]) {
        for (cone, r) in self.blocks() {
            if let Cone::Psd(n) = cone {
                let b = &mut x[r];
                for j in 0..n {
                    for i in j + 1..n {
                        let m = 0.5 * (b[j * n + i] + b[i * n + j]);
                        b[j * n + i] = m;
                        b[i * n + j] = m;
                    }
                }
            }
        }
    }

    /// Amount by which `x` lies outside the cone (0 when inside).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (cone, r) in self.blocks() {
            let x = &x[r];
            let v = match cone {
                Cone::Nonneg(_) => x.iter().map(|v| -v).fold(0.0, f64::max),
                Cone::Soc(_) => {
                    let tail = x[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
                    tail - x[0]
                }
                Cone::Psd(n) => -sym(n, x).symmetric_eigenvalues().min(),
            };
            worst = worst.max(v);
        }
        worst
    }

    /// Nesterov-Todd scaling at the interior pair `(s, z)`; `None` if either
    /// point has left the interior numerically.
    pub fn scaling(&self, s: &[f64], z: &[f64]) -> Option<Scaling> {
        let mut blocks = Vec::with_capacity(self.cones.len());
        let mut lambda = vec![0.0; self.total];
        for (cone, r) in self.blocks() {
            let (s, z, l) = (&s[r.clone()], &z[r.clone()], &mut lambda[r]);
            match cone {
                Cone::Nonneg(_) => {
                    let mut d = Vec::with_capacity(s.len());
                    for i in 0..s.len() {
                        if !(s[i] > 0.0 && z[i] > 0.0) {
                            return None;
                        }
                        d.push((z[i] / s[i]).sqrt());
                        l[i] = (s[i] * z[i]).sqrt();
                    }
                    blocks.push(BlockScaling::Nonneg { d });
                }
                Cone::Soc(_) => {
                    let jn = |x: &[f64]| x[0] * x[0] - x[1..].iter().map(|v| v * v).sum::<f64>();
                    let (sn, zn) = (jn(s), jn(z));
                    if !(sn > 0.0 && zn > 0.0 && s[0] > 0.0 && z[0] > 0.0) {
                        return None;
                    }
                    let (sn, zn) = (sn.sqrt(), zn.sqrt());
                    let sb: Vec<f64> = s.iter().map(|v| v / sn).collect();
                    let zb: Vec<f64> = z.iter().map(|v| v / zn).collect();
                    let dot: f64 = sb.iter().zip(&zb).map(|(a, b)| a * b).sum();
                    let gamma = ((1.0 + dot) / 2.0).sqrt();
                    // NT point wbar = (J sbar + zbar) / (2 gamma); W is its square root
                    let mut v: Vec<f64> = sb.iter().zip(&zb).map(|(a, b)| (b - a) / (2.0 * gamma)).collect();
                    v[0] = (sb[0] + zb[0]) / (2.0 * gamma);
                    let norm = (2.0 * (v[0] + 1.0)).sqrt();
                    v[0] += 1.0;
                    v.iter_mut().for_each(|x| *x /= norm);
                    let beta = (zn / sn).sqrt();
                    let sc = BlockScaling::Soc {
                        beta,
                        v: DVector::from_vec(v),
                    };
                    l.copy_from_slice(&sc.apply_soc(s, Op::W));
                    blocks.push(sc);
                }
                Cone::Psd(n) => {
                    let ls = sym(n, s).cholesky()?.l();
                    let lz = sym(n, z).cholesky()?.l();
                    let prod = lz.transpose() * &ls;
                    let svd = prod.svd(true, true);
                    let (u, vt) = (svd.u?, svd.v_t?);
                    let sv = &svd.singular_values;
                    if sv.iter().any(|x| !(*x > 0.0)) {
                        return None;
                    }
                    let inv_sqrt = DVector::from_iterator(n, sv.iter().map(|x| 1.0 / x.sqrt()));
                    // R = Ls V diag(sv^-1/2), R^-1 = diag(sv^-1/2) U' Lz'
                    let mut r_mat = ls * vt.transpose();
                    for j in 0..n {
                        r_mat.column_mut(j).scale_mut(inv_sqrt[j]);
                    }
                    let mut r_inv = u.transpose() * lz.transpose();
                    for i in 0..n {
                        r_inv.row_mut(i).scale_mut(inv_sqrt[i]);
                    }
                    for i in 0..n {
                        l[i * n + i] = sv[i];
                    }
                    blocks.push(BlockScaling::Psd {
                        r_inv_t: r_inv.transpose(),
                        r_t: r_mat.transpose(),
                        r: r_mat,
                        r_inv,
                    });
                }
            }
        }
        Some(Scaling { blocks, lambda })
    }
}

fn soc_step(l: &[f64], d: &[f64]) -> f64 {
    let jdot = |a: &[f64], b: &[f64]| a[0] * b[0] - a[1..].iter().zip(&b[1..]).map(|(x, y)| x * y).sum::<f64>();
    let a = jdot(d, d);
    let b = jdot(l, d);
    let c = jdot(l, l);
    // smallest positive root of a t^2 + 2 b t + c, with c > 0
    let disc = b * b - a * c;
    let scale = a.abs().max(b.abs()).max(c.abs());
    if a.abs() <= 1e-15 * scale {
        return if b < 0.0 { -c / (2.0 * b) } else { f64::INFINITY };
    }
    if disc < 0.0 {
        return f64::INFINITY;
    }
    let q = -(b + b.signum() * disc.sqrt());
    let roots = [q / a, if q != 0.0 { c / q } else { f64::INFINITY }];
    roots
        .into_iter()
        .filter(|t| *t > 0.0)
        .fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Debug)]
pub(crate) enum BlockScaling {
    Nonneg {
        d: Vec<f64>,
    },
    Soc {
        beta: f64,
        v: DVector<f64>,
    },
    Psd {
        r: DMatrix<f64>,
        r_inv: DMatrix<f64>,
        r_t: DMatrix<f64>,
        r_inv_t: DMatrix<f64>,
    },
}

impl BlockScaling {
    fn apply_soc(&self, u: &[f64], op: Op) -> Vec<f64> {
        let BlockScaling::Soc { beta, v } = self else {
            unreachable!()
        };
        let vu: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
        match op {
            // beta (2 v v' - J) u
            Op::W | Op::WT => {
                let mut out: Vec<f64> = v.iter().map(|vi| 2.0 * vi * vu).collect();
                out[0] -= u[0];
                for i in 1..u.len() {
                    out[i] += u[i];
                }
                out.iter_mut().for_each(|x| *x *= beta);
                out
            }
            // (2 J v v' J - J) u / beta
            Op::WInv | Op::WInvT => {
                let mut jv: Vec<f64> = v.iter().map(|x| -x).collect();
                jv[0] = v[0];
                let vju: f64 = jv.iter().zip(u).map(|(a, b)| a * b).sum();
                let mut out: Vec<f64> = jv.iter().map(|x| 2.0 * x * vju).collect();
                out[0] -= u[0];
                for i in 1..u.len() {
                    out[i] += u[i];
                }
                out.iter_mut().for_each(|x| *x /= beta);
                out
            }
        }
    }

    fn psd_factor(&self, op: Op) -> &DMatrix<f64> {
        let BlockScaling::Psd {
            r,
            r_inv,
            r_t,
            r_inv_t,
        } = self
        else {
            unreachable!()
        };
        // every PSD operator is X -> F X F'
        match op {
            Op::W => r_inv,
            Op::WInv => r,
            Op::WT => r_inv_t,
            Op::WInvT => r_t,
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Scaling {
    pub blocks: Vec<BlockScaling>,
    pub lambda: Vec<f64>,
}

impl Scaling {
    pub fn apply(&self, layout: &Layout, u: &[f64], op: Op) -> Vec<f64> {
        let mut out = vec![0.0; layout.total];
        for ((cone, r), sc) in layout.blocks().zip(&self.blocks) {
            let (u, o) = (&u[r.clone()], &mut out[r]);
            match cone {
                Cone::Nonneg(_) => {
                    let BlockScaling::Nonneg { d } = sc else {
                        unreachable!()
                    };
                    for i in 0..u.len() {
                        o[i] = match op {
                            Op::W | Op::WT => d[i] * u[i],
                            Op::WInv | Op::WInvT => u[i] / d[i],
                        };
                    }
                }
                Cone::Soc(_) => o.copy_from_slice(&sc.apply_soc(u, op)),
                Cone::Psd(n) => {
                    let f = sc.psd_factor(op);
                    let p = f * mat(n, u) * f.transpose();
                    o.copy_from_slice(p.as_slice());
                }
            }
        }
        out
    }

    /// Applies `op` to every column of `g` (rows laid out per `layout`).
    /// Sparse PSD columns are handled as sums of rank-one updates.
    pub fn apply_columns(&self, layout: &Layout, g: &DMatrix<f64>, op: Op) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(g.nrows(), g.ncols());
        for col in 0..g.ncols() {
            let gc = g.column(col);
            for ((cone, r), sc) in layout.blocks().zip(&self.blocks) {
                let u = gc.rows(r.start, r.len());
                if u.iter().all(|x| *x == 0.0) {
                    continue;
                }
                let mut o = out.view_mut((r.start, col), (r.len(), 1));
                match cone {
                    Cone::Nonneg(_) => {
                        let BlockScaling::Nonneg { d } = sc else {
                            unreachable!()
                        };
                        for i in 0..u.len() {
                            o[i] = match op {
                                Op::W | Op::WT => d[i] * u[i],
                                Op::WInv | Op::WInvT => u[i] / d[i],
                            };
                        }
                    }
                    Cone::Soc(_) => {
                        let v = sc.apply_soc(u.as_slice(), op);
                        o.copy_from_slice(&v);
                    }
                    Cone::Psd(n) => {
                        let f = sc.psd_factor(op);
                        let nnz: Vec<(usize, usize, f64)> = (0..n)
                            .flat_map(|j| (0..n).map(move |i| (i, j)))
                            .filter_map(|(i, j)| {
                                let x = u[j * n + i];
                                (x != 0.0).then_some((i, j, x))
                            })
                            .collect();
                        let p = if nnz.len() <= n / 2 {
                            let mut p = DMatrix::zeros(n, n);
                            for (i, j, x) in nnz {
                                p.ger(x, &f.column(i), &f.column(j), 1.0);
                            }
                            p
                        } else {
                            let m = DMatrix::from_column_slice(n, n, u.as_slice());
                            f * m * f.transpose()
                        };
                        o.copy_from_slice(p.as_slice());
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_layout() -> (Layout, Vec<f64>, Vec<f64>) {
        let layout = Layout::new(vec![Cone::Nonneg(2), Cone::Soc(3), Cone::Psd(2)]);
        let s = vec![0.5, 2.0, 3.0, 1.0, -2.0, 2.0, 0.3, 0.3, 1.0];
        let z = vec![1.5, 0.1, 1.2, -0.4, 0.5, 1.0, -0.2, -0.2, 0.7];
        (layout, s, z)
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
    }

    #[test]
    fn nt_scaling_maps_s_and_z_to_lambda() {
        let (layout, s, z) = sample_layout();
        let sc = layout.scaling(&s, &z).unwrap();
        let ws = sc.apply(&layout, &s, Op::W);
        let wz = sc.apply(&layout, &z, Op::WInvT);
        assert!(close(&ws, &sc.lambda, 1e-12), "{ws:?} vs {:?}", sc.lambda);
        assert!(close(&wz, &sc.lambda, 1e-12), "{wz:?} vs {:?}", sc.lambda);
        let sz: f64 = s.iter().zip(&z).map(|(a, b)| a * b).sum();
        let ll: f64 = sc.lambda.iter().map(|x| x * x).sum();
        assert!((sz - ll).abs() < 1e-12);
    }

    #[test]
    fn scaling_inverse_and_transpose_are_consistent() {
        let (layout, s, z) = sample_layout();
        let sc = layout.scaling(&s, &z).unwrap();
        let u: Vec<f64> = (0..layout.total).map(|i| (i as f64 * 0.37).sin()).collect();
        let w = sc.apply(&layout, &u, Op::W);
        let back = sc.apply(&layout, &w, Op::WInv);
        assert!(close(&back, &u, 1e-12));
        let wt = sc.apply(&layout, &u, Op::WT);
        let back = sc.apply(&layout, &wt, Op::WInvT);
        assert!(close(&back, &u, 1e-12));
        // <W u, y> = <u, W' y>
        let y: Vec<f64> = (0..layout.total).map(|i| (i as f64 * 1.3).cos()).collect();
        let lhs: f64 = w.iter().zip(&y).map(|(a, b)| a * b).sum();
        let wty = sc.apply(&layout, &y, Op::WT);
        let rhs: f64 = u.iter().zip(&wty).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
        let g = DMatrix::from_column_slice(layout.total, 1, &u);
        let gc = sc.apply_columns(&layout, &g, Op::W);
        assert!(close(gc.as_slice(), &w, 1e-12));
    }

    #[test]
    fn jordan_division_inverts_product() {
        let (layout, s, z) = sample_layout();
        let sc = layout.scaling(&s, &z).unwrap();
        let v: Vec<f64> = (0..layout.total).map(|i| 0.2 * i as f64 - 0.5).collect();
        let u = layout.jordan_div(&sc.lambda, &v);
        let back = layout.jordan_prod(&sc.lambda, &u);
        assert!(close(&back, &v, 1e-12), "{back:?} vs {v:?}");
    }

    #[test]
    fn step_length_hits_boundary() {
        let layout = Layout::new(vec![Cone::Soc(3)]);
        let l = [2.0, 0.0, 0.0];
        let d = [-1.0, 1.0, 0.0];
        // (2 - a)^2 = a^2  =>  a = 1
        assert!((layout.max_step(&l, &d) - 1.0).abs() < 1e-12);
        let layout = Layout::new(vec![Cone::Psd(2)]);
        let l = [4.0, 0.0, 0.0, 1.0];
        let d = [0.0, 0.0, 0.0, -2.0];
        assert!((layout.max_step(&l, &d) - 0.5).abs() < 1e-12);
        let layout = Layout::new(vec![Cone::Nonneg(2)]);
        assert_eq!(layout.max_step(&[1.0, 1.0], &[1.0, 0.0]), f64::INFINITY);
    }
}
