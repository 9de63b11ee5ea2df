//! Compressed sparse row matrices and the direct linear solve.

use std::fmt::Write as _;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMat};
use faer::{Col, ColRef};

use crate::error::{Error, Result};

/// Relative residual accepted from [`solve_linear`].
pub const SOLVE_TOL: f64 = 1e-10;

/// Coordinate-format accumulator; duplicates are summed on compression.
#[derive(Clone, Debug, Default)]
pub struct Triplets {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::with_capacity(cap),
        }
    }

    #[inline]
    pub fn add(&mut self, row: usize, col: usize, val: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, val));
    }

    /// Adds `scale * m` with its top-left corner at `(row_off, col_off)`.
    pub fn add_matrix(&mut self, m: &CsrMatrix, row_off: usize, col_off: usize, scale: f64) {
        if scale == 0.0 {
            return;
        }
        for (i, j, v) in m.iter() {
            self.add(i + row_off, j + col_off, scale * v);
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn into_csr(mut self) -> CsrMatrix {
        // stable, so duplicates are summed in insertion order
        self.entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in self.entries {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                row_ptr[i + 1] += 1;
                col_idx.push(j);
                values.push(v);
                last = Some((i, j));
            }
        }
        for i in 0..self.nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx,
            values,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Triplets::new(nrows, ncols).into_csr()
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Triplets::new(n, n);
        for i in 0..n {
            t.add(i, i, 1.0);
        }
        t.into_csr()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_add(x, 1.0, &mut y);
        y
    }

    /// `y += scale * A x`
    pub fn mul_vec_add(&self, x: &[f64], scale: f64, y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        for (i, yi) in y.iter_mut().enumerate().take(self.nrows) {
            let s: f64 = self.row(i).map(|(j, v)| v * x[j]).sum();
            *yi += scale * s;
        }
    }

    /// `x^T A y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        (0..self.nrows)
            .map(|i| x[i] * self.row(i).map(|(j, v)| v * y[j]).sum::<f64>())
            .sum()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Triplets::with_capacity(self.ncols, self.nrows, self.nnz());
        for (i, j, v) in self.iter() {
            t.add(j, i, v);
        }
        t.into_csr()
    }

    /// `a * self + b * other`
    pub fn lin_comb(&self, a: f64, other: &CsrMatrix, b: f64) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut row_ptr = Vec::with_capacity(self.nrows + 1);
        let mut col_idx = Vec::with_capacity(self.nnz() + other.nnz());
        let mut values = Vec::with_capacity(self.nnz() + other.nnz());
        row_ptr.push(0);
        for i in 0..self.nrows {
            let (mut p, pe) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let (mut q, qe) = (other.row_ptr[i], other.row_ptr[i + 1]);
            while p < pe || q < qe {
                let cp = if p < pe { self.col_idx[p] } else { usize::MAX };
                let cq = if q < qe { other.col_idx[q] } else { usize::MAX };
                if cp < cq {
                    col_idx.push(cp);
                    values.push(a * self.values[p]);
                    p += 1;
                } else if cq < cp {
                    col_idx.push(cq);
                    values.push(b * other.values[q]);
                    q += 1;
                } else {
                    col_idx.push(cp);
                    values.push(a * self.values[p] + b * other.values[q]);
                    p += 1;
                    q += 1;
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Copy with the flagged rows removed (left empty).
    pub fn without_rows(&self, drop: &[bool]) -> Self {
        assert_eq!(drop.len(), self.nrows);
        let mut row_ptr = Vec::with_capacity(self.nrows + 1);
        let mut col_idx = Vec::with_capacity(self.nnz());
        let mut values = Vec::with_capacity(self.nnz());
        row_ptr.push(0);
        for (i, &d) in drop.iter().enumerate() {
            if !d {
                let r = self.row_ptr[i]..self.row_ptr[i + 1];
                col_idx.extend_from_slice(&self.col_idx[r.clone()]);
                values.extend_from_slice(&self.values[r]);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Largest absolute entry of `self - other`.
    pub fn max_abs_diff(&self, other: &CsrMatrix) -> f64 {
        self.lin_comb(1.0, other, -1.0).values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Restriction to a rectangular index window.
    pub fn block(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Self {
        let mut t = Triplets::new(rows.len(), cols.len());
        for i in rows.clone() {
            for (j, v) in self.row(i) {
                if cols.contains(&j) {
                    t.add(i - rows.start, j - cols.start, v);
                }
            }
        }
        t.into_csr()
    }

    /// Coordinate text dump, one `row col value` line per stored entry.
    pub fn dump_coo(&self) -> String {
        let mut out = String::new();
        for (i, j, v) in self.iter() {
            let _ = writeln!(out, "{i} {j} {v:e}");
        }
        out
    }

    fn to_csc_parts(&self) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
        let mut col_ptr = vec![0usize; self.ncols + 1];
        for &j in &self.col_idx {
            col_ptr[j + 1] += 1;
        }
        for j in 0..self.ncols {
            col_ptr[j + 1] += col_ptr[j];
        }
        let mut next = col_ptr.clone();
        let mut row_idx = vec![0usize; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        for i in 0..self.nrows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                row_idx[next[j]] = i;
                vals[next[j]] = self.values[k];
                next[j] += 1;
            }
        }
        (col_ptr, row_idx, vals)
    }
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Clone, Debug)]
pub struct LinearSolution {
    pub x: Vec<f64>,
    /// `||Ax - b|| / ||b||` in the Euclidean norm.
    pub relative_residual: f64,
}

/// Sparse LU solver that keeps the symbolic factorization while the
/// sparsity pattern stays the same.
#[derive(Default)]
pub struct LinearSolver {
    cached: Option<(Vec<usize>, Vec<usize>, SymbolicLu<usize>)>,
}

impl LinearSolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn solve(&mut self, a: &CsrMatrix, b: &[f64]) -> Result<LinearSolution> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch(format!("matrix is {}x{}", n, a.ncols())));
        }
        if b.len() != n {
            return Err(Error::DimensionMismatch(format!("rhs has length {}, expected {n}", b.len())));
        }
        check_structure(a)?;
        let bnorm = norm2(b);
        if bnorm == 0.0 {
            return Ok(LinearSolution {
                x: vec![0.0; n],
                relative_residual: 0.0,
            });
        }
        let (col_ptr, row_idx, vals) = a.to_csc_parts();
        let reuse = matches!(&self.cached, Some((cp, ri, _)) if *cp == col_ptr && *ri == row_idx);
        let symbolic_mat = SymbolicSparseColMat::new_checked(n, n, col_ptr.clone(), None, row_idx.clone());
        if !reuse {
            let sym = SymbolicLu::try_new(symbolic_mat.as_ref())
                .map_err(|e| Error::Singular(format!("symbolic factorization failed: {e:?}")))?;
            self.cached = Some((col_ptr, row_idx, sym));
        }
        let symbolic = self.cached.as_ref().unwrap().2.clone();
        let mat = SparseColMatRef::new(symbolic_mat.as_ref(), &vals);
        let lu = Lu::try_new_with_symbolic(symbolic, mat).map_err(|e| match e {
            faer::sparse::linalg::LuError::SymbolicSingular { index } => {
                Error::Singular(format!("no pivot found at elimination step {index}"))
            }
            other => Error::Singular(format!("{other:?}")),
        })?;

        let solve = |rhs: &[f64]| -> Vec<f64> {
            let sol: Col<f64> = lu.solve(ColRef::from_slice(rhs));
            (0..n).map(|i| sol[i]).collect()
        };
        let mut x = solve(b);
        let mut residual = residual_vec(a, &x, b);
        let mut rel = norm2(&residual) / bnorm;
        // a few steps of iterative refinement
        for _ in 0..3 {
            if !rel.is_finite() || rel <= 1e-14 {
                break;
            }
            let dx = solve(&residual);
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + d).collect();
            let r_trial = residual_vec(a, &trial, b);
            let rel_trial = norm2(&r_trial) / bnorm;
            if !(rel_trial < rel) {
                break;
            }
            x = trial;
            residual = r_trial;
            rel = rel_trial;
        }
        if !rel.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular("factorization produced non-finite values".into()));
        }
        if rel > SOLVE_TOL {
            return Err(Error::InaccurateSolve(rel));
        }
        Ok(LinearSolution {
            x,
            relative_residual: rel,
        })
    }
}

fn residual_vec(a: &CsrMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    let mut r: Vec<f64> = b.iter().map(|v| -v).collect();
    a.mul_vec_add(x, 1.0, &mut r);
    // r = A x - b; refinement solves A dx = -r
    r.iter_mut().for_each(|v| *v = -*v);
    r
}

fn check_structure(a: &CsrMatrix) -> Result<()> {
    let mut col_nonzero = vec![false; a.ncols()];
    for i in 0..a.nrows() {
        let mut any = false;
        for (j, v) in a.row(i) {
            if v != 0.0 {
                any = true;
                col_nonzero[j] = true;
            }
        }
        if !any {
            return Err(Error::Singular(format!("row {i} is identically zero")));
        }
    }
    if let Some(j) = col_nonzero.iter().position(|c| !c) {
        return Err(Error::Singular(format!("column {j} is identically zero")));
    }
    Ok(())
}

/// One-shot direct solve of `A x = b`.
pub fn solve_linear(a: &CsrMatrix, b: &[f64]) -> Result<LinearSolution> {
    LinearSolver::new().solve(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_solve() {
        let a = CsrMatrix::identity(5);
        let b = [1.0, -2.0, 3.0, 0.5, 7.0];
        let s = solve_linear(&a, &b).unwrap();
        assert_eq!(s.x, b.to_vec());
    }

    #[test]
    fn poisson_tridiagonal_against_analytic_inverse() {
        let n = 10;
        let mut t = Triplets::new(n, n);
        for i in 0..n {
            t.add(i, i, 2.0);
            if i > 0 {
                t.add(i, i - 1, -1.0);
            }
            if i + 1 < n {
                t.add(i, i + 1, -1.0);
            }
        }
        let a = t.into_csr();
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin() + 1.0).collect();
        // (A^{-1})_{ij} = min(i,j) (n + 1 - max(i,j)) / (n + 1) with 1-based indices
        let exact: Vec<f64> = (1..=n)
            .map(|i| {
                (1..=n)
                    .map(|j| (i.min(j) * (n + 1 - i.max(j))) as f64 / (n + 1) as f64 * b[j - 1])
                    .sum()
            })
            .collect();
        let s = solve_linear(&a, &b).unwrap();
        for (x, e) in s.x.iter().zip(&exact) {
            assert!((x - e).abs() < 1e-12);
        }
        assert!(s.relative_residual <= SOLVE_TOL);
    }

    #[test]
    fn zero_row_is_singular() {
        let mut t = Triplets::new(3, 3);
        t.add(0, 0, 1.0);
        t.add(2, 2, 1.0);
        t.add(2, 1, 1.0);
        let err = solve_linear(&t.into_csr(), &[1.0, 1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::Singular(ref m) if m.contains("row 1")));
    }

    #[test]
    fn duplicates_are_summed() {
        let mut t = Triplets::new(2, 2);
        t.add(0, 1, 1.0);
        t.add(0, 1, 2.5);
        t.add(1, 0, -1.0);
        let m = t.into_csr();
        assert_eq!(m.get(0, 1), 3.5);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.transpose().get(1, 0), 3.5);
    }

    #[test]
    fn symbolic_reuse_across_values() {
        let mut solver = LinearSolver::new();
        for scale in [1.0, 3.0] {
            let mut t = Triplets::new(2, 2);
            t.add(0, 0, 2.0 * scale);
            t.add(0, 1, 1.0);
            t.add(1, 0, 1.0);
            t.add(1, 1, 3.0 * scale);
            let a = t.into_csr();
            let s = solver.solve(&a, &[1.0, 2.0]).unwrap();
            let r = a.mul_vec(&s.x);
            assert!((r[0] - 1.0).abs() < 1e-14 && (r[1] - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn lin_comb_matches_triplet_sum() {
        let mut x = Triplets::new(3, 4);
        let mut y = Triplets::new(3, 4);
        for (i, j, v) in [(0, 0, 1.0), (0, 3, 2.0), (2, 1, -1.0)] {
            x.add(i, j, v);
        }
        for (i, j, v) in [(0, 3, 4.0), (1, 2, 5.0), (2, 0, 1.5)] {
            y.add(i, j, v);
        }
        let (x, y) = (x.into_csr(), y.into_csr());
        let mut both = Triplets::new(3, 4);
        both.add_matrix(&x, 0, 0, 2.0);
        both.add_matrix(&y, 0, 0, -1.0);
        assert_eq!(x.lin_comb(2.0, &y, -1.0), both.into_csr());
        let cut = x.lin_comb(1.0, &y, 1.0).without_rows(&[false, true, false]);
        assert_eq!(cut.nnz(), 4);
        assert_eq!(cut.get(1, 2), 0.0);
        assert_eq!(cut.get(0, 3), 6.0);
    }
}
