//! SINR evaluation and the quadratic forms of the reflect vector.
//!
//! For a beam of user `u` (sent by its serving BS `i`) observed at user `m`,
//! the received amplitude is `(v^H Phi_{i,m} + h_{i,m}^H) w_u = v^H c + d`
//! with `c = Phi_{i,m} w_u` and `d = h_{i,m}^H w_u`. Its power expands as
//! `v^H C v + 2 Re(v^H u) + |d|^2` with `C = c c^H` and `u = c conj(d)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{CMat, CVec, Instance, SystemConfig, C64};

/// Transmit beams, one vector per user in linear order; user `m` is served
/// by BS `cell[m]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TxBeams {
    pub w: Vec<CVec>,
    pub cell: Vec<usize>,
}

impl TxBeams {
    pub fn zeros(config: &SystemConfig) -> Self {
        Self {
            w: vec![CVec::zeros(config.antennas); config.num_users()],
            cell: config.cell_of(),
        }
    }

    /// The `M x K_b` matrix whose columns are the beams of cell `b`.
    pub fn matrix(&self, b: usize) -> CMat {
        let cols: Vec<&CVec> = self
            .w
            .iter()
            .zip(&self.cell)
            .filter(|(_, c)| **c == b)
            .map(|(w, _)| w)
            .collect();
        let rows = self.w.first().map_or(0, |w| w.len());
        CMat::from_fn(rows, cols.len(), |r, c| cols[c][r])
    }

    pub fn bs_power(&self, b: usize) -> f64 {
        self.w
            .iter()
            .zip(&self.cell)
            .filter(|(_, c)| **c == b)
            .map(|(w, _)| w.norm_squared())
            .sum()
    }

    /// True when every BS meets its budget within relative slack `rel`.
    pub fn within_power(&self, budgets: &[f64], rel: f64) -> bool {
        budgets
            .iter()
            .enumerate()
            .all(|(b, p)| self.bs_power(b) <= p * (1.0 + rel))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            w: self.w.iter().map(|w| w * C64::from(factor)).collect(),
            cell: self.cell.clone(),
        }
    }
}

/// Reflect vector with entries in the closed unit disk.
#[derive(Clone, Debug, PartialEq)]
pub struct ReflectVector {
    pub v: CVec,
}

impl ReflectVector {
    pub fn new(v: CVec) -> Self {
        Self { v }
    }

    pub fn ones(n: usize) -> Self {
        Self::new(CVec::from_element(n, C64::new(1.0, 0.0)))
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(CVec::zeros(n))
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn max_modulus(&self) -> f64 {
        self.v.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    pub fn is_feasible(&self, slack: f64) -> bool {
        self.max_modulus() <= 1.0 + slack
    }
}

/// One beam-to-user link: amplitude `v^H c + d`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadEntry {
    pub c: CVec,
    pub d: C64,
}

impl QuadEntry {
    /// `C = c c^H`.
    pub fn c_mat(&self) -> CMat {
        &self.c * self.c.adjoint()
    }

    /// `u = c conj(d)`.
    pub fn u_vec(&self) -> CVec {
        &self.c * self.d.conj()
    }

    /// `v^H c + d`.
    pub fn amplitude(&self, v: &CVec) -> C64 {
        v.dotc(&self.c) + self.d
    }
}

/// Quadratic forms for every (beam user `u`, receiving user `m`) pair,
/// indexed `entries[u][m]`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadForms {
    pub entries: Vec<Vec<QuadEntry>>,
}

impl QuadForms {
    pub fn num_users(&self) -> usize {
        self.entries.len()
    }

    pub fn irs_units(&self) -> usize {
        self.entries
            .first()
            .and_then(|r| r.first())
            .map_or(0, |e| e.c.len())
    }

    pub fn get(&self, u: usize, m: usize) -> &QuadEntry {
        &self.entries[u][m]
    }

    /// Received powers `P[u][m]` at reflect vector `v`.
    pub fn powers(&self, v: &CVec) -> Vec<Vec<f64>> {
        self.entries
            .iter()
            .map(|row| row.iter().map(|e| reflect_link_power(e, v)).collect())
            .collect()
    }

    /// SINR of every user at `v`.
    pub fn sinrs(&self, v: &CVec, noise: &[f64]) -> Vec<f64> {
        let p = self.powers(v);
        sinrs_from_powers(&p, noise)
    }

    pub fn min_weighted_sinr(&self, v: &CVec, alpha: &[f64], noise: &[f64]) -> f64 {
        weighted_min(&self.sinrs(v, noise), alpha)
    }
}

fn sinrs_from_powers(p: &[Vec<f64>], noise: &[f64]) -> Vec<f64> {
    let k = p.len();
    (0..k)
        .map(|m| {
            let interf: f64 = (0..k).filter(|&u| u != m).map(|u| p[u][m]).sum();
            p[m][m] / (interf + noise[m])
        })
        .collect()
}

pub fn quad_forms(inst: &Instance, w: &TxBeams) -> Result<QuadForms> {
    let k = inst.num_users();
    if w.w.len() != k {
        return Err(Error::Dimension(format!("{} beams for {k} users", w.w.len())));
    }
    let entries = (0..k)
        .map(|u| {
            let i = w.cell[u];
            (0..k)
                .map(|m| {
                    let phi = &inst.composite.phi[i][m];
                    let h = &inst.channels.h[i][m];
                    if phi.ncols() != w.w[u].len() {
                        return Err(Error::Dimension(format!(
                            "beam of user {u} has length {}, BS has {} antennas",
                            w.w[u].len(),
                            phi.ncols()
                        )));
                    }
                    Ok(QuadEntry {
                        c: phi * &w.w[u],
                        d: h.dotc(&w.w[u]),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QuadForms { entries })
}

/// `v^H C v + 2 Re(v^H u) + |d|^2`, using the rank-one structure of `C`.
pub fn reflect_link_power(q: &QuadEntry, v: &CVec) -> f64 {
    let x = v.dotc(&q.c);
    let cross = x * q.d.conj();
    (x.norm_sqr() + 2.0 * cross.re + q.d.norm_sqr()).max(0.0)
}

/// SINR of every user in linear order.
pub fn sinrs(inst: &Instance, w: &TxBeams, v: &ReflectVector) -> Vec<f64> {
    let a = inst.effective(&v.v);
    let k = inst.num_users();
    let noise = inst.config.noise_vec();
    (0..k)
        .map(|m| {
            let amp = |u: usize| a[w.cell[u]][m].dotc(&w.w[u]).norm_sqr();
            let interf: f64 = (0..k).filter(|&u| u != m).map(amp).sum();
            amp(m) / (interf + noise[m])
        })
        .collect()
}

pub fn sinr(inst: &Instance, w: &TxBeams, v: &ReflectVector, cell: usize, k: usize) -> f64 {
    sinrs(inst, w, v)[inst.config.user_index(cell, k)]
}

/// `min_m sinr_m / alpha_m`.
pub fn weighted_min(sinrs: &[f64], alpha: &[f64]) -> f64 {
    sinrs
        .iter()
        .zip(alpha)
        .map(|(s, a)| s / a)
        .fold(f64::INFINITY, f64::min)
}

/// Users attaining the weighted minimum, lowest linear index first.
pub fn argmin_users(sinrs: &[f64], alpha: &[f64]) -> Vec<usize> {
    let t = weighted_min(sinrs, alpha);
    sinrs
        .iter()
        .zip(alpha)
        .enumerate()
        .filter(|(_, (s, a))| *s / *a == t)
        .map(|(m, _)| m)
        .collect()
}

pub fn min_weighted_sinr(inst: &Instance, w: &TxBeams, v: &ReflectVector) -> f64 {
    weighted_min(&sinrs(inst, w, v), &inst.config.weight_vec())
}

/// Lifted matrices `R = [[C, u], [u^H, 0]]`, indexed like [`QuadForms`].
#[derive(Clone, Debug)]
pub struct LiftedForms {
    pub r: Vec<Vec<CMat>>,
}

pub fn lift(q: &QuadEntry) -> CMat {
    let n = q.c.len();
    let mut r = CMat::zeros(n + 1, n + 1);
    r.view_mut((0, 0), (n, n)).copy_from(&q.c_mat());
    let u = q.u_vec();
    for i in 0..n {
        r[(i, n)] = u[i];
        r[(n, i)] = u[i].conj();
    }
    r
}

pub fn lift_matrices(q: &QuadForms) -> LiftedForms {
    LiftedForms {
        r: q.entries
            .iter()
            .map(|row| row.iter().map(lift).collect())
            .collect(),
    }
}

/// `[v; 1]`.
pub fn vbar(v: &CVec) -> CVec {
    let n = v.len();
    CVec::from_fn(n + 1, |i, _| if i < n { v[i] } else { C64::new(1.0, 0.0) })
}

/// `x^H R x` for Hermitian `R` (real part).
pub fn hermitian_form(r: &CMat, x: &CVec) -> f64 {
    x.dotc(&(r * x)).re
}

/// Hermitian part `(X + X^H) / 2`.
pub fn hermitian_part(x: &DMatrix<C64>) -> DMatrix<C64> {
    (x + x.adjoint()) * C64::from(0.5)
}

/// Linear power to decibels.
pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}
