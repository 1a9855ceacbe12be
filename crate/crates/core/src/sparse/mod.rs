//! Sparse weighted linear least squares through the normal equations.
//!
//! Rows are expected to be whitened already (each factor block multiplied by
//! the inverse Cholesky factor of its covariance), so the problem solved is
//! plain `min |A x - b|^2` with `x = (A^T A)^-1 A^T b`.

mod cholesky;
mod ordering;

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

pub use cholesky::{cholesky, etree, symbolic, CholeskyFactor, CscMatrix};
pub use ordering::{amd_ordering, invert, SymPattern};

use crate::error::{Error, Result};

/// Row-compressed least-squares system `A x ~ b`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseLsq {
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    rhs: Vec<f64>,
}

impl SparseLsq {
    pub fn new(ncols: usize) -> Self {
        Self {
            ncols,
            row_ptr: vec![0],
            cols: Vec::new(),
            vals: Vec::new(),
            rhs: Vec::new(),
        }
    }

    /// Appends a row. Duplicate columns are summed and exact zeros dropped.
    ///
    /// # Panics
    /// If a column index is out of bounds.
    pub fn push_row(&mut self, entries: &[(usize, f64)], rhs: f64) {
        let mut e: Vec<(usize, f64)> = entries.to_vec();
        e.sort_unstable_by_key(|x| x.0);
        let start = self.cols.len();
        for (c, v) in e {
            assert!(c < self.ncols, "column {c} out of bounds ({} columns)", self.ncols);
            if self.cols.len() > start && *self.cols.last().unwrap() == c {
                *self.vals.last_mut().unwrap() += v;
            } else {
                self.cols.push(c);
                self.vals.push(v);
            }
        }
        // drop zeros (including ones produced by summation)
        let mut w = start;
        for r in start..self.cols.len() {
            if self.vals[r] != 0.0 {
                self.cols[w] = self.cols[r];
                self.vals[w] = self.vals[r];
                w += 1;
            }
        }
        self.cols.truncate(w);
        self.vals.truncate(w);
        self.row_ptr.push(w);
        self.rhs.push(rhs);
    }

    pub fn nrows(&self) -> usize {
        self.rhs.len()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// `A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nrows())
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum()
            })
            .collect()
    }

    /// `A^T y`.
    pub fn tr_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        for (i, &yi) in y.iter().enumerate() {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                out[j] += a * yi;
            }
        }
        out
    }

    /// `|A x - b|^2`.
    pub fn cost(&self, x: &[f64]) -> f64 {
        self.mul_vec(x)
            .iter()
            .zip(&self.rhs)
            .map(|(ax, b)| (ax - b).powi(2))
            .sum()
    }

    pub fn to_dense(&self) -> (DMatrix<f64>, DVector<f64>) {
        let mut a = DMatrix::zeros(self.nrows(), self.ncols);
        for i in 0..self.nrows() {
            let (c, v) = self.row(i);
            for (&j, &x) in c.iter().zip(v) {
                a[(i, j)] = x;
            }
        }
        (a, DVector::from_column_slice(&self.rhs))
    }

    /// Sparsity pattern of `A^T A`.
    pub fn normal_pattern(&self) -> SymPattern {
        let mut edges = Vec::new();
        for i in 0..self.nrows() {
            let c = self.row(i).0;
            for (k, &a) in c.iter().enumerate() {
                for &b in &c[k + 1..] {
                    edges.push((a, b));
                }
            }
        }
        SymPattern::from_edges(self.ncols, edges)
    }

    fn check_finite(&self) -> Result<()> {
        for i in 0..self.nrows() {
            if !self.rhs[i].is_finite() || !self.row(i).1.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { row: i });
            }
        }
        Ok(())
    }

    /// Writes `A` as a Matrix Market coordinate file and `b` as one value per line.
    pub fn write_matrix_market(&self, matrix: impl AsRef<Path>, rhs: impl AsRef<Path>) -> Result<()> {
        let (mp, rp) = (matrix.as_ref(), rhs.as_ref());
        let mut m = Vec::new();
        writeln!(m, "%%MatrixMarket matrix coordinate real general").unwrap();
        writeln!(m, "{} {} {}", self.nrows(), self.ncols, self.nnz()).unwrap();
        for i in 0..self.nrows() {
            let (c, v) = self.row(i);
            for (&j, &x) in c.iter().zip(v) {
                writeln!(m, "{} {} {:e}", i + 1, j + 1, x).unwrap();
            }
        }
        std::fs::write(mp, m).map_err(|e| Error::io(mp, e))?;
        let mut b = Vec::new();
        for x in &self.rhs {
            writeln!(b, "{x:e}").unwrap();
        }
        std::fs::write(rp, b).map_err(|e| Error::io(rp, e))
    }
}

#[derive(Debug, Clone, Default)]
pub struct SolveOptions {
    /// Columns whose marginal variances `diag((A^T A)^-1)` are wanted.
    pub marginal_columns: Option<Vec<usize>>,
    /// Skip the fill-reducing ordering (natural column order).
    pub natural_order: bool,
}

#[derive(Debug, Clone)]
pub struct NormalSolution {
    pub x: DVector<f64>,
    /// Variances for `SolveOptions::marginal_columns`, same order.
    pub marginal_variances: Option<Vec<f64>>,
    pub factor_nnz: usize,
}

/// Minimizes `|A x - b|^2` by sparse Cholesky of `A^T A` under a minimum-degree ordering.
pub fn solve_normal(a: &SparseLsq, opts: &SolveOptions) -> Result<NormalSolution> {
    a.check_finite()?;
    let n = a.ncols();
    let perm: Vec<usize> = if opts.natural_order {
        (0..n).collect()
    } else {
        amd_ordering(&a.normal_pattern())
    };
    let pinv = invert(&perm);

    let mut triplets = Vec::new();
    for i in 0..a.nrows() {
        let (c, v) = a.row(i);
        for (k, (&ca, &va)) in c.iter().zip(v).enumerate() {
            let pa = pinv[ca];
            triplets.push((pa, pa, va * va));
            for (&cb, &vb) in c[k + 1..].iter().zip(&v[k + 1..]) {
                let pb = pinv[cb];
                triplets.push((pa.min(pb), pa.max(pb), va * vb));
            }
        }
    }
    let upper = CscMatrix::from_triplets(n, triplets);
    let factor = cholesky(&upper).map_err(|e| match e {
        Error::NotPositiveDefinite { pivot, value, .. } => Error::NotPositiveDefinite {
            pivot,
            column: perm[pivot],
            value,
        },
        other => other,
    })?;

    let atb = a.tr_mul_vec(a.rhs());
    let mut y: Vec<f64> = perm.iter().map(|&old| atb[old]).collect();
    factor.solve_in_place(&mut y);
    let mut x = DVector::zeros(n);
    for (new, &old) in perm.iter().enumerate() {
        x[old] = y[new];
    }

    let marginal_variances = opts.marginal_columns.as_ref().map(|cols| {
        let diag = factor.inverse_diagonal();
        cols.iter().map(|&c| diag[pinv[c]]).collect()
    });

    Ok(NormalSolution {
        x,
        marginal_variances,
        factor_nnz: factor.nnz(),
    })
}

/// Dense Householder QR solve of the same problem; reference path for tests.
pub fn solve_dense_qr(a: &SparseLsq) -> Result<DVector<f64>> {
    let (m, b) = a.to_dense();
    if m.nrows() < m.ncols() {
        return Err(Error::Singular("fewer rows than columns".into()));
    }
    let qr = m.qr();
    let qtb = qr.q().transpose() * b;
    let r = qr.r();
    r.solve_upper_triangular(&qtb)
        .ok_or_else(|| Error::Singular("R has a zero on its diagonal".into()))
}
