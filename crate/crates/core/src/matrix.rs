//! Symmetric system storage, definiteness classification and the two dense
//! direct solvers (Cholesky and partial-pivot elimination) used everywhere else.
//!
//! The two solvers share no code so that one can serve as the oracle for the other.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;

use crate::error::{structural, Error, Result};

/// Default relative tolerance for [`definiteness_class`], scaled by `‖A‖∞`.
pub const DEFAULT_DEFINITENESS_TOL: f64 = 1e-10;

/// A symmetric sparse matrix in coordinate form together with its source vector.
///
/// Only the upper triangle (`i <= j`) is stored and exact zeros are dropped,
/// so two systems compare equal exactly when their implied dense matrices and
/// right-hand sides are identical.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricSystem {
    n: usize,
    entries: BTreeMap<(usize, usize), f64>,
    b: Vec<f64>,
}

impl SymmetricSystem {
    /// Builds a system from 0-based `(i, j, value)` triples. Triples from either
    /// triangle are accepted; supplying both `(i, j)` and `(j, i)` is a duplicate.
    pub fn new<I>(n: usize, entries: I, b: Vec<f64>) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        if n == 0 {
            return Err(structural("system dimension must be at least 1"));
        }
        if b.len() != n {
            return Err(structural(format!(
                "source vector has length {}, expected {n}",
                b.len()
            )));
        }
        let mut map = BTreeMap::new();
        for (i, j, v) in entries {
            if i >= n || j >= n {
                return Err(structural(format!("entry ({i}, {j}) outside {n}x{n}")));
            }
            if !v.is_finite() {
                return Err(structural(format!("entry ({i}, {j}) is not finite")));
            }
            let key = (i.min(j), i.max(j));
            if map.insert(key, v).is_some() {
                return Err(structural(format!(
                    "duplicate entry ({}, {})",
                    key.0, key.1
                )));
            }
        }
        map.retain(|_, v| *v != 0.0);
        Ok(Self { n, entries: map, b })
    }

    /// Builds a system from a dense matrix, which must be exactly symmetric.
    pub fn from_dense(a: &DMatrix<f64>, b: Vec<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(structural("matrix is not square"));
        }
        let n = a.nrows();
        let mut entries = Vec::new();
        for i in 0..n {
            for j in i..n {
                if a[(i, j)] != a[(j, i)] {
                    return Err(structural(format!("matrix not symmetric at ({i}, {j})")));
                }
                entries.push((i, j, a[(i, j)]));
            }
        }
        Self::new(n, entries, b)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rhs(&self) -> &[f64] {
        &self.b
    }

    /// Stored upper-triangle entries `(i, j, value)` with `i <= j`, in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries.iter().map(|(&(i, j), &v)| (i, j, v))
    }

    pub fn nnz_upper(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries
            .get(&(i.min(j), i.max(j)))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for (i, j, v) in self.entries() {
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
        a
    }

    pub fn to_csr(&self) -> CsrMatrix {
        CsrMatrix::from_system(self)
    }

    /// `‖A x − b‖₂ / ‖b‖₂`, or the plain residual norm when `b = 0`.
    pub fn relative_residual(&self, x: &[f64]) -> f64 {
        self.to_csr().relative_residual(x, &self.b)
    }
}

/// Full-pattern compressed sparse row copy of a symmetric matrix, for repeated products.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_system(sys: &SymmetricSystem) -> Self {
        let n = sys.dim();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, j, v) in sys.entries() {
            rows[i].push((j, v));
            if i != j {
                rows[j].push((i, v));
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .map(|k| self.vals[k] * x[self.cols[k]])
                    .sum()
            })
            .collect()
    }

    /// Residual vector `A x − b`.
    pub fn residual(&self, x: &[f64], b: &[f64]) -> Vec<f64> {
        let mut r = self.matvec(x);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri -= bi;
        }
        r
    }

    pub fn relative_residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let r = norm2(&self.residual(x, b));
        let nb = norm2(b);
        if nb > 0.0 {
            r / nb
        } else {
            r
        }
    }
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn inf_norm(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() {
        return Err(structural(format!(
            "matrix is {}x{}, expected square",
            a.nrows(),
            a.ncols()
        )));
    }
    let scale = inf_norm(a).max(1.0) * 1e-12;
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[(i, j)] - a[(j, i)]).abs() > scale {
                return Err(structural(format!("matrix not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DefinitenessClass {
    Spd,
    Snnd,
    Indefinite,
}

impl fmt::Display for DefinitenessClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DefinitenessClass::Spd => "SPD",
            DefinitenessClass::Snnd => "SNND",
            DefinitenessClass::Indefinite => "INDEFINITE",
        })
    }
}

/// Classifies a symmetric matrix by the signs of its eigenvalues, with
/// thresholds `±tol·‖A‖∞`.
pub fn definiteness_class(a: &DMatrix<f64>, tol: f64) -> Result<DefinitenessClass> {
    check_symmetric(a)?;
    if a.nrows() == 0 {
        return Ok(DefinitenessClass::Spd);
    }
    let threshold = tol * inf_norm(a);
    let min_eig = a
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    Ok(if min_eig > threshold {
        DefinitenessClass::Spd
    } else if min_eig >= -threshold {
        DefinitenessClass::Snnd
    } else {
        DefinitenessClass::Indefinite
    })
}

/// Lower-triangular Cholesky factor `L` with `L·Lᵀ = M`, packed row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdFactor {
    n: usize,
    lower: Vec<f64>,
}

impl SpdFactor {
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(i: usize, j: usize) -> usize {
        i * (i + 1) / 2 + j
    }

    /// Entry `L[i][j]`; zero above the diagonal.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.lower[Self::idx(i, j)]
        }
    }

    pub fn lower(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// `L·Lᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let l = self.lower();
        &l * l.transpose()
    }
}

/// Dense Cholesky factorization of an SPD matrix.
pub fn factor_spd(a: &DMatrix<f64>) -> Result<SpdFactor> {
    check_symmetric(a)?;
    let n = a.nrows();
    let mut lower = vec![0.0; n * (n + 1) / 2];
    for i in 0..n {
        let row_i = SpdFactor::idx(i, 0);
        for j in 0..=i {
            let row_j = SpdFactor::idx(j, 0);
            let mut sum = a[(i, j)];
            for k in 0..j {
                sum -= lower[row_i + k] * lower[row_j + k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return Err(Error::Factorization {
                        pivot: i,
                        value: sum,
                    });
                }
                lower[row_i + i] = sum.sqrt();
            } else {
                lower[row_i + j] = sum / lower[row_j + j];
            }
        }
    }
    Ok(SpdFactor { n, lower })
}

/// Solves `L·Lᵀ x = rhs` by forward and backward substitution.
pub fn solve_factored(f: &SpdFactor, rhs: &[f64]) -> Result<Vec<f64>> {
    let mut x = rhs.to_vec();
    solve_factored_in_place(f, &mut x)?;
    Ok(x)
}

pub(crate) fn solve_factored_in_place(f: &SpdFactor, x: &mut [f64]) -> Result<()> {
    let n = f.n;
    if x.len() != n {
        return Err(structural(format!(
            "right-hand side has length {}, factor has dimension {n}",
            x.len()
        )));
    }
    for i in 0..n {
        let row = SpdFactor::idx(i, 0);
        let mut sum = x[i];
        for k in 0..i {
            sum -= f.lower[row + k] * x[k];
        }
        x[i] = sum / f.lower[row + i];
    }
    for i in (0..n).rev() {
        let mut sum = x[i];
        for k in (i + 1)..n {
            sum -= f.lower[SpdFactor::idx(k, i)] * x[k];
        }
        x[i] = sum / f.lower[SpdFactor::idx(i, i)];
    }
    Ok(())
}

/// Gaussian elimination with partial pivoting on a dense copy of `a`.
pub fn direct_solve(a: &DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(structural("matrix is not square"));
    }
    if b.len() != n {
        return Err(structural(format!(
            "right-hand side has length {}, expected {n}",
            b.len()
        )));
    }
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).iter().copied().collect()).collect();
    let mut x = b.to_vec();
    let tiny = f64::EPSILON * inf_norm(a) * n as f64;
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&p, &q| m[p][col].abs().total_cmp(&m[q][col].abs()))
            .unwrap_or(col);
        if m[pivot_row][col].abs() <= tiny || m[pivot_row][col] == 0.0 {
            return Err(Error::Singular { column: col });
        }
        m.swap(col, pivot_row);
        x.swap(col, pivot_row);
        let pivot = m[col][col];
        for r in (col + 1)..n {
            let factor = m[r][col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                m[r][c] -= factor * m[col][c];
            }
            x[r] -= factor * x[col];
        }
    }
    for i in (0..n).rev() {
        let mut sum = x[i];
        for k in (i + 1)..n {
            sum -= m[i][k] * x[k];
        }
        x[i] = sum / m[i][i];
    }
    Ok(x)
}
