//! Conic programs and the interior-point solver behind every convex subproblem.
//!
//! A [`ConicProgram`] is written in inequality form: real variables `x`, a
//! linear objective, affine equalities and a list of cone memberships
//!
//! ```text
//! minimize    c'x
//! subject to  e_i(x) = 0                    (equalities)
//!             (f_1(x), ..., f_m(x)) in K_j  (one block per cone)
//! ```
//!
//! where every `e_i`, `f_k` is an affine expression ([`LinExpr`]). Supported
//! cones are the nonnegative orthant, the second-order cone
//! `{(t, u) : ||u|| <= t}` and the cone of positive semidefinite real
//! symmetric matrices. PSD blocks list the lower triangle of the matrix
//! column by column: `(0,0), (1,0), ..., (n-1,0), (1,1), (2,1), ...`.
//!
//! Complex quantities are stacked as `[Re; Im]` (see [`ComplexVar`]); a
//! Hermitian constraint `Z >= 0` on an `L x L` complex matrix is imposed as
//! the real `2L x 2L` block `[[Re Z, -Im Z], [Im Z, Re Z]]` (see
//! [`hermitian_embedding_rows`]).

mod cones;
mod ipm;
mod text;

use nalgebra::DMatrix;
use num_complex::Complex64;

pub use ipm::{solve, solve_with, SolverSettings};
pub use text::to_text;

/// Affine expression `sum_k coef_k * x[var_k] + constant`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(index: usize) -> Self {
        Self::term(index, 1.0)
    }

    pub fn term(index: usize, coef: f64) -> Self {
        Self {
            terms: vec![(index, coef)],
            constant: 0.0,
        }
    }

    /// Adds `coef * x[index]`; zero coefficients are dropped.
    pub fn add(&mut self, index: usize, coef: f64) -> &mut Self {
        if coef != 0.0 {
            self.terms.push((index, coef));
        }
        self
    }

    pub fn add_constant(&mut self, c: f64) -> &mut Self {
        self.constant += c;
        self
    }

    pub fn add_expr(&mut self, other: &LinExpr, scale: f64) -> &mut Self {
        for &(i, c) in &other.terms {
            self.add(i, c * scale);
        }
        self.constant += other.constant * scale;
        self
    }

    pub fn scaled(&self, scale: f64) -> LinExpr {
        let mut out = LinExpr::zero();
        out.add_expr(self, scale);
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .fold(self.constant, |acc, &(i, c)| acc + c * x[i])
    }
}

/// Cone tag of one constraint block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConeKind {
    Nonnegative,
    SecondOrder,
    /// Real symmetric PSD matrices of the given order.
    Psd { order: usize },
}

impl ConeKind {
    fn label(&self) -> &'static str {
        match self {
            ConeKind::Nonnegative => "nonneg",
            ConeKind::SecondOrder => "soc",
            ConeKind::Psd { .. } => "psd",
        }
    }
}

/// One cone membership: the vector of affine `rows` must lie in `kind`.
#[derive(Clone, Debug)]
pub struct ConeBlock {
    pub kind: ConeKind,
    pub rows: Vec<LinExpr>,
}

/// A complex vector variable of length `len` occupying the real variables
/// `offset..offset+len` (real parts) and `offset+len..offset+2*len`
/// (imaginary parts).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComplexVar {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

impl ComplexVar {
    pub fn re(&self, k: usize) -> usize {
        debug_assert!(k < self.len);
        self.offset + k
    }

    pub fn im(&self, k: usize) -> usize {
        debug_assert!(k < self.len);
        self.offset + self.len + k
    }

    /// Reads the complex value back out of a real solution vector.
    pub fn extract(&self, x: &[f64]) -> Vec<Complex64> {
        (0..self.len)
            .map(|k| Complex64::new(x[self.re(k)], x[self.im(k)]))
            .collect()
    }

    /// Real and imaginary parts of `a^H x` as affine expressions, where `x`
    /// is this variable and `a` a constant complex vector.
    pub fn inner(&self, a: &[Complex64]) -> (LinExpr, LinExpr) {
        assert_eq!(a.len(), self.len, "dimension mismatch in complex inner product");
        let mut re = LinExpr::zero();
        let mut im = LinExpr::zero();
        for (k, ak) in a.iter().enumerate() {
            // conj(a_k) x_k = (ar xr + ai xi) + j (ar xi - ai xr)
            re.add(self.re(k), ak.re).add(self.im(k), ak.im);
            im.add(self.im(k), ak.re).add(self.re(k), -ak.im);
        }
        (re, im)
    }

    /// Real and imaginary parts of `x^H a`, i.e. the conjugate of [`Self::inner`].
    pub fn inner_conj(&self, a: &[Complex64]) -> (LinExpr, LinExpr) {
        let (re, im) = self.inner(a);
        (re, im.scaled(-1.0))
    }
}

#[derive(Clone, Debug)]
pub struct ConicProgram {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub equalities: Vec<LinExpr>,
    pub cones: Vec<ConeBlock>,
    pub complex_vars: Vec<ComplexVar>,
}

impl Default for ConicProgram {
    fn default() -> Self {
        Self::new()
    }
}

impl ConicProgram {
    pub fn new() -> Self {
        Self {
            num_vars: 0,
            objective: Vec::new(),
            equalities: Vec::new(),
            cones: Vec::new(),
            complex_vars: Vec::new(),
        }
    }

    pub fn add_var(&mut self) -> usize {
        self.num_vars += 1;
        self.objective.push(0.0);
        self.num_vars - 1
    }

    pub fn add_complex(&mut self, name: &str, len: usize) -> ComplexVar {
        let offset = self.num_vars;
        self.num_vars += 2 * len;
        self.objective.resize(self.num_vars, 0.0);
        let var = ComplexVar {
            name: name.to_string(),
            offset,
            len,
        };
        self.complex_vars.push(var.clone());
        var
    }

    pub fn set_objective(&mut self, var: usize, coef: f64) {
        self.objective[var] = coef;
    }

    pub fn add_equality(&mut self, expr: LinExpr) {
        self.equalities.push(expr);
    }

    pub fn add_nonneg(&mut self, rows: Vec<LinExpr>) {
        self.cones.push(ConeBlock {
            kind: ConeKind::Nonnegative,
            rows,
        });
    }

    /// `rows[0] >= ||rows[1..]||`.
    pub fn add_soc(&mut self, rows: Vec<LinExpr>) {
        self.cones.push(ConeBlock {
            kind: ConeKind::SecondOrder,
            rows,
        });
    }

    /// `rows` is the packed lower triangle (column-major) of an `order x order`
    /// symmetric matrix that must be positive semidefinite.
    pub fn add_psd(&mut self, order: usize, rows: Vec<LinExpr>) {
        self.cones.push(ConeBlock {
            kind: ConeKind::Psd { order },
            rows,
        });
    }

    pub fn validate(&self) -> Result<(), ProgramError> {
        if self.objective.len() != self.num_vars {
            return Err(ProgramError::Objective {
                expected: self.num_vars,
                found: self.objective.len(),
            });
        }
        let check = |expr: &LinExpr| {
            expr.terms
                .iter()
                .find(|(i, c)| *i >= self.num_vars || !c.is_finite())
                .map(|&(i, _)| ProgramError::BadTerm { var: i })
                .or_else(|| {
                    (!expr.constant.is_finite()).then_some(ProgramError::BadTerm { var: usize::MAX })
                })
        };
        for e in &self.equalities {
            if let Some(err) = check(e) {
                return Err(err);
            }
        }
        for (j, block) in self.cones.iter().enumerate() {
            let expected = match block.kind {
                ConeKind::Nonnegative => block.rows.len().max(1),
                ConeKind::SecondOrder => block.rows.len().max(1),
                ConeKind::Psd { order } => order * (order + 1) / 2,
            };
            if block.rows.is_empty() || block.rows.len() != expected {
                return Err(ProgramError::BlockSize {
                    block: j,
                    expected,
                    found: block.rows.len(),
                });
            }
            for e in &block.rows {
                if let Some(err) = check(e) {
                    return Err(err);
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProgramError {
    #[error("objective has {found} coefficients, program has {expected} variables")]
    Objective { expected: usize, found: usize },
    #[error("cone block {block} has {found} rows, expected {expected}")]
    BlockSize {
        block: usize,
        expected: usize,
        found: usize,
    },
    #[error("expression references invalid variable or non-finite value (var {var})")]
    BadTerm { var: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

/// Solver verdict. `x` is meaningful only when `status == Optimal`;
/// `cone_duals[j]` holds the multiplier of cone block `j` in the same row
/// layout as the block (packed lower triangle for PSD blocks).
#[derive(Clone, Debug)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Largest violation of any equality or cone constraint at `x`.
    pub primal_residual: f64,
    /// Relative dual residual reported by the interior-point iteration.
    pub dual_residual: f64,
    pub cone_duals: Vec<Vec<f64>>,
    pub equality_duals: Vec<f64>,
    /// Human readable reason when the status is not `Optimal`.
    pub detail: Option<String>,
}

impl ConicSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Index of entry `(i, j)` with `i >= j` in the packed lower triangle.
pub fn packed_index(order: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i >= j { (i, j) } else { (j, i) };
    column_start(order, j) + (i - j)
}

/// Start of column `j` in the packed lower triangle: `sum_{c<j} (order - c)`.
fn column_start(order: usize, j: usize) -> usize {
    j * order - j * j.saturating_sub(1) / 2
}

/// Expands a packed lower triangle into a full symmetric matrix.
pub fn unpack_symmetric(order: usize, packed: &[f64]) -> DMatrix<f64> {
    assert_eq!(packed.len(), order * (order + 1) / 2);
    let mut m = DMatrix::zeros(order, order);
    let mut k = 0;
    for j in 0..order {
        for i in j..order {
            m[(i, j)] = packed[k];
            m[(j, i)] = packed[k];
            k += 1;
        }
    }
    m
}

/// Packed rows of the real embedding `[[Re Z, -Im Z], [Im Z, Re Z]]` of a
/// Hermitian matrix `Z` whose lower triangle is given as `(re, im)` affine
/// expressions: `entry(i, j)` returns the real and imaginary parts of
/// `Z[i][j]` for `i >= j`.
pub fn hermitian_embedding_rows<F>(order: usize, mut entry: F) -> Vec<LinExpr>
where
    F: FnMut(usize, usize) -> (LinExpr, LinExpr),
{
    let mut re = vec![vec![LinExpr::zero(); order]; order];
    let mut im = vec![vec![LinExpr::zero(); order]; order];
    for j in 0..order {
        for i in j..order {
            let (r, m) = entry(i, j);
            im[i][j] = m.clone();
            im[j][i] = m.scaled(-1.0);
            re[i][j] = r.clone();
            re[j][i] = r;
        }
    }
    let n2 = 2 * order;
    let mut rows = Vec::with_capacity(n2 * (n2 + 1) / 2);
    for j in 0..n2 {
        for i in j..n2 {
            let (bi, ri) = (i / order, i % order);
            let (bj, rj) = (j / order, j % order);
            let expr = match (bi, bj) {
                (0, 0) | (1, 1) => re[ri][rj].clone(),
                (1, 0) => im[ri][rj].clone(),
                _ => im[ri][rj].scaled(-1.0),
            };
            rows.push(expr);
        }
    }
    rows
}

/// Recovers the Hermitian matrix `V` from a real symmetric multiplier `Y`
/// of an embedded block, so that `<emb(Z), Y> = Re tr(Z V)` for Hermitian `Z`.
pub fn hermitian_from_embedding(order: usize, y: &DMatrix<f64>) -> DMatrix<Complex64> {
    assert_eq!(y.nrows(), 2 * order);
    DMatrix::from_fn(order, order, |i, j| {
        let re = y[(i, j)] + y[(order + i, order + j)];
        let im = y[(order + i, j)] - y[(i, order + j)];
        Complex64::new(re, im)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packed_layout_matches_unpack() {
        let order = 4;
        let packed: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let m = unpack_symmetric(order, &packed);
        for j in 0..order {
            for i in j..order {
                assert_eq!(m[(i, j)], packed[packed_index(order, i, j)]);
                assert_eq!(m[(j, i)], m[(i, j)]);
            }
        }
        assert_eq!(column_start(order, 2), 7);
    }

    #[test]
    fn complex_inner_matches_direct_product() {
        let mut p = ConicProgram::new();
        let w = p.add_complex("w", 2);
        let a = [Complex64::new(1.0, -2.0), Complex64::new(0.5, 3.0)];
        let xv = [Complex64::new(0.3, 0.7), Complex64::new(-1.1, 0.2)];
        let mut x = vec![0.0; p.num_vars];
        for k in 0..2 {
            x[w.re(k)] = xv[k].re;
            x[w.im(k)] = xv[k].im;
        }
        let direct: Complex64 = a.iter().zip(&xv).map(|(a, x)| a.conj() * x).sum();
        let (re, im) = w.inner(&a);
        assert!((re.eval(&x) - direct.re).abs() < 1e-14);
        assert!((im.eval(&x) - direct.im).abs() < 1e-14);
        let (re, im) = w.inner_conj(&a);
        assert!((re.eval(&x) - direct.re).abs() < 1e-14);
        assert!((im.eval(&x) + direct.im).abs() < 1e-14);
    }

    #[test]
    fn embedding_pairs_with_multiplier_as_complex_trace() {
        // Z constant Hermitian, V Hermitian: <emb(Z), emb(V)/2> = tr(Z V).
        let z = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(2.0, 0.0),
                Complex64::new(0.5, -1.0),
                Complex64::new(0.5, 1.0),
                Complex64::new(3.0, 0.0),
            ],
        );
        let v = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(1.0, 0.0),
                Complex64::new(0.2, 0.4),
                Complex64::new(0.2, -0.4),
                Complex64::new(0.7, 0.0),
            ],
        );
        let rows = hermitian_embedding_rows(2, |i, j| {
            (LinExpr::constant(z[(i, j)].re), LinExpr::constant(z[(i, j)].im))
        });
        let emb_z = unpack_symmetric(4, &rows.iter().map(|r| r.constant).collect::<Vec<_>>());
        let emb_v = DMatrix::from_fn(4, 4, |i, j| {
            let e = v[(i % 2, j % 2)];
            match (i / 2, j / 2) {
                (0, 0) | (1, 1) => e.re / 2.0,
                (1, 0) => e.im / 2.0,
                _ => -e.im / 2.0,
            }
        });
        let tr: Complex64 = (&z * &v).trace();
        assert!((emb_z.dot(&emb_v) - tr.re).abs() < 1e-12);
        let back = hermitian_from_embedding(2, &emb_v);
        assert!((back - v).norm() < 1e-12);
    }

    #[test]
    fn validate_rejects_bad_psd_block() {
        let mut p = ConicProgram::new();
        let x = p.add_var();
        p.add_psd(2, vec![LinExpr::var(x), LinExpr::zero()]);
        assert!(matches!(
            p.validate(),
            Err(ProgramError::BlockSize { expected: 3, .. })
        ));
    }
}
