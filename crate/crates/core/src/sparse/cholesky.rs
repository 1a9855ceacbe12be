//! Up-looking sparse Cholesky factorization `C = L L^T` of a symmetric
//! positive definite matrix stored as its upper triangle in compressed-column
//! form, plus triangular solves and selected inversion of the diagonal.

use crate::error::{Error, Result};

/// Square compressed-column matrix. Row indices within a column are sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    pub n: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub vals: Vec<f64>,
}

impl CscMatrix {
    /// Builds from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(n: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (r, c, v) in triplets {
            cols[c].push((r, v));
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        let mut vals = Vec::new();
        col_ptr.push(0);
        for mut col in cols {
            col.sort_unstable_by_key(|e| e.0);
            let mut last = usize::MAX;
            for (r, v) in col {
                if r == last {
                    *vals.last_mut().unwrap() += v;
                } else {
                    row_idx.push(r);
                    vals.push(v);
                    last = r;
                }
            }
            col_ptr.push(row_idx.len());
        }
        Self {
            n,
            col_ptr,
            row_idx,
            vals,
        }
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn col(&self, j: usize) -> (&[usize], &[f64]) {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        (&self.row_idx[r.clone()], &self.vals[r])
    }
}

/// Elimination tree of an upper-triangular CSC pattern; `None` marks a root.
pub fn etree(upper: &CscMatrix) -> Vec<Option<usize>> {
    let n = upper.n;
    let mut parent = vec![None; n];
    let mut ancestor: Vec<Option<usize>> = vec![None; n];
    for k in 0..n {
        for &row in upper.col(k).0 {
            let mut i = Some(row);
            while let Some(ii) = i.filter(|&ii| ii < k) {
                let next = ancestor[ii];
                ancestor[ii] = Some(k);
                if next.is_none() {
                    parent[ii] = Some(k);
                }
                i = next;
            }
        }
    }
    parent
}

/// Reusable workspace for [`ereach`].
struct Reach {
    stack: Vec<usize>,
    out: Vec<usize>,
    mark: Vec<usize>,
    stamp: usize,
}

impl Reach {
    fn new(n: usize) -> Self {
        Self {
            stack: Vec::with_capacity(n),
            out: Vec::with_capacity(n),
            mark: vec![0; n],
            stamp: 0,
        }
    }

    /// Nonzero pattern of row `k` of `L` (excluding the diagonal), in an order
    /// where every column precedes its elimination-tree ancestors.
    fn ereach(&mut self, upper: &CscMatrix, k: usize, parent: &[Option<usize>]) -> &[usize] {
        self.stamp += 1;
        let stamp = self.stamp;
        self.mark[k] = stamp;
        self.out.clear();
        for &row in upper.col(k).0 {
            if row > k {
                continue;
            }
            self.stack.clear();
            let mut i = Some(row);
            while let Some(ii) = i {
                if self.mark[ii] == stamp {
                    break;
                }
                self.mark[ii] = stamp;
                self.stack.push(ii);
                i = parent[ii];
            }
            // appended root-first; the final reversal puts leaves first and
            // later paths (descendants of earlier ones) ahead of them
            while let Some(v) = self.stack.pop() {
                self.out.push(v);
            }
        }
        self.out.reverse();
        &self.out
    }
}

/// Column counts of `L` (including the diagonal) and the elimination tree.
pub fn symbolic(upper: &CscMatrix) -> (Vec<Option<usize>>, Vec<usize>) {
    let parent = etree(upper);
    let mut counts = vec![1usize; upper.n];
    let mut reach = Reach::new(upper.n);
    for k in 0..upper.n {
        for &i in reach.ereach(upper, k, &parent) {
            counts[i] += 1;
        }
    }
    (parent, counts)
}

/// Lower-triangular Cholesky factor in CSC form, diagonal first in each column.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    pub l: CscMatrix,
}

pub fn cholesky(upper: &CscMatrix) -> Result<CholeskyFactor> {
    let n = upper.n;
    let (parent, counts) = symbolic(upper);
    let mut col_ptr = Vec::with_capacity(n + 1);
    col_ptr.push(0);
    for c in &counts {
        col_ptr.push(col_ptr.last().unwrap() + c);
    }
    let nnz = col_ptr[n];
    let mut row_idx = vec![0usize; nnz];
    let mut vals = vec![0.0f64; nnz];
    let mut next = col_ptr[..n].to_vec();
    let mut x = vec![0.0f64; n];
    let mut reach = Reach::new(n);

    for k in 0..n {
        let (rows, v) = upper.col(k);
        for (&i, &val) in rows.iter().zip(v) {
            if i <= k {
                x[i] += val;
            }
        }
        let mut d = x[k];
        x[k] = 0.0;
        for &i in reach.ereach(upper, k, &parent) {
            let lki = x[i] / vals[col_ptr[i]];
            x[i] = 0.0;
            for p in col_ptr[i] + 1..next[i] {
                x[row_idx[p]] -= vals[p] * lki;
            }
            d -= lki * lki;
            let p = next[i];
            next[i] += 1;
            row_idx[p] = k;
            vals[p] = lki;
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite {
                pivot: k,
                column: k,
                value: d,
            });
        }
        let p = next[k];
        next[k] += 1;
        row_idx[p] = k;
        vals[p] = d.sqrt();
    }
    Ok(CholeskyFactor {
        l: CscMatrix {
            n,
            col_ptr,
            row_idx,
            vals,
        },
    })
}

impl CholeskyFactor {
    pub fn nnz(&self) -> usize {
        self.l.nnz()
    }

    /// Solves `L L^T x = b` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let l = &self.l;
        for j in 0..l.n {
            let (rows, v) = l.col(j);
            x[j] /= v[0];
            let xj = x[j];
            for (&i, &lij) in rows[1..].iter().zip(&v[1..]) {
                x[i] -= lij * xj;
            }
        }
        for j in (0..l.n).rev() {
            let (rows, v) = l.col(j);
            let mut s = x[j];
            for (&i, &lij) in rows[1..].iter().zip(&v[1..]) {
                s -= lij * x[i];
            }
            x[j] = s / v[0];
        }
    }

    /// Diagonal of `(L L^T)^-1` by selected inversion on the pattern of `L`.
    pub fn inverse_diagonal(&self) -> Vec<f64> {
        let l = &self.l;
        let n = l.n;
        let mut z = vec![0.0f64; l.nnz()];
        let lookup = |z: &[f64], i: usize, k: usize| -> f64 {
            let (c, r) = if i < k { (i, k) } else { (k, i) };
            let (rows, _) = l.col(c);
            let off = rows
                .binary_search(&r)
                .expect("filled pattern is closed under selected inversion");
            z[l.col_ptr[c] + off]
        };
        let mut tmp = Vec::new();
        for j in (0..n).rev() {
            let start = l.col_ptr[j];
            let (rows, v) = l.col(j);
            let ljj = v[0];
            let below = &rows[1..];
            let lvals = &v[1..];
            tmp.clear();
            for &i in below {
                let s: f64 = below
                    .iter()
                    .zip(lvals)
                    .map(|(&k, &lkj)| lkj * lookup(&z, i, k))
                    .sum();
                tmp.push(-s / ljj);
            }
            let mut zjj = 1.0 / (ljj * ljj);
            for (t, &lkj) in tmp.iter().zip(lvals) {
                zjj -= lkj * t / ljj;
            }
            z[start] = zjj;
            z[start + 1..start + 1 + tmp.len()].copy_from_slice(&tmp);
        }
        (0..n).map(|j| z[l.col_ptr[j]]).collect()
    }
}
