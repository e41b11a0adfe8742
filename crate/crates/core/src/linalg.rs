//! Minimal dense linear algebra used by the trainer and the recovery probe:
//! row-major matrices, an SPD Cholesky solve, and a conjugate-gradient
//! fallback for systems too large to factor.

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[allow(dead_code)] // test-side constructor
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c);
            data.extend(row);
        }
        Self {
            rows: r,
            cols: c,
            data,
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `self · other`
    #[allow(dead_code)] // exercised by tests
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = out.row_mut(i);
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = other.row(k);
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn transpose_matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows);
        let mut out = Mat::zeros(self.cols, other.cols);
        for r in 0..self.rows {
            let a_row = self.row(r);
            let b_row = other.row(r);
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = out.row_mut(i);
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self · otherᵀ`
    pub fn matmul_transpose(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols);
        let mut out = Mat::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a_row = self.row(i);
            for j in 0..other.rows {
                out.set(i, j, dot(a_row, other.row(j)));
            }
        }
        out
    }

    pub fn add_to_diagonal(&mut self, v: f64) {
        assert_eq!(self.rows, self.cols);
        for i in 0..self.rows {
            self.data[i * self.cols + i] += v;
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solve `A · X = B` for SPD `A` by Cholesky factorization. `B` has one
/// column per right-hand side; `A` is consumed as workspace.
pub fn cholesky_solve(mut a: Mat, b: &Mat) -> Result<Mat> {
    assert_eq!(a.rows, a.cols);
    assert_eq!(a.rows, b.rows);
    let n = a.rows;
    // In-place lower factor.
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a.at(i, j);
            for k in 0..j {
                sum -= a.at(i, k) * a.at(j, k);
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::invalid(
                        "matrix is not positive definite; increase the ridge penalty",
                    ));
                }
                a.set(i, j, sum.sqrt());
            } else {
                a.set(i, j, sum / a.at(j, j));
            }
        }
    }
    // Forward/back substitution per column.
    let mut x = b.clone();
    for col in 0..b.cols {
        for i in 0..n {
            let mut sum = x.at(i, col);
            for k in 0..i {
                sum -= a.at(i, k) * x.at(k, col);
            }
            x.set(i, col, sum / a.at(i, i));
        }
        for i in (0..n).rev() {
            let mut sum = x.at(i, col);
            for k in i + 1..n {
                sum -= a.at(k, i) * x.at(k, col);
            }
            x.set(i, col, sum / a.at(i, i));
        }
    }
    Ok(x)
}

/// Conjugate gradients for SPD systems given only a mat-vec closure.
/// Runs at most `max_iter` iterations or until the residual norm falls
/// below `tol · ‖b‖`.
pub fn cg_solve(
    matvec: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    max_iter: usize,
    tol: f64,
) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let b_norm = dot(b, b).sqrt().max(f64::MIN_POSITIVE);
    let mut rs_old = dot(&r, &r);
    for _ in 0..max_iter {
        if rs_old.sqrt() <= tol * b_norm {
            break;
        }
        matvec(&p, &mut ap);
        let denom = dot(&p, &ap);
        if denom <= 0.0 {
            break;
        }
        let alpha = rs_old / denom;
        for ((xi, pi), (ri, api)) in x.iter_mut().zip(&p).zip(r.iter_mut().zip(&ap)) {
            *xi += alpha * pi;
            *ri -= alpha * api;
        }
        let rs_new = dot(&r, &r);
        let beta = rs_new / rs_old;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rs_old = rs_new;
    }
    x
}

/// Largest input dimension for which the normal equations are factored
/// directly; beyond it the solver falls back to conjugate gradients.
pub const DIRECT_SOLVE_LIMIT: usize = 4096;
pub const CG_MAX_ITER: usize = 500;
pub const CG_TOL: f64 = 1e-8;

/// Ridge solve `argmin_W ‖X·W − Y‖² + λ‖W‖²` for `X: n×d`, `Y: n×q`.
///
/// Uses the primal normal equations when `d` is small, the algebraically
/// identical dual form `W = Xᵀ(XXᵀ + λI)⁻¹Y` when the system is wide but
/// has few rows, and conjugate gradients when both dimensions are large.
pub fn ridge_solve(x: &Mat, y: &Mat, lambda: f64) -> Result<Mat> {
    assert_eq!(x.rows, y.rows);
    if lambda <= 0.0 {
        return Err(Error::invalid("ridge penalty must be positive"));
    }
    let (n, d) = (x.rows, x.cols);
    if d <= DIRECT_SOLVE_LIMIT && d <= n {
        let mut gram = x.transpose_matmul(x);
        gram.add_to_diagonal(lambda);
        let xty = x.transpose_matmul(y);
        return cholesky_solve(gram, &xty);
    }
    if n <= DIRECT_SOLVE_LIMIT {
        let mut gram = x.matmul_transpose(x);
        gram.add_to_diagonal(lambda);
        let alpha = cholesky_solve(gram, y)?;
        return Ok(x.transpose_matmul(&alpha));
    }
    // Both dimensions large: CG on the primal normal equations with the
    // Gram product applied implicitly.
    let mut w = Mat::zeros(d, y.cols);
    let matvec = |v: &[f64], out: &mut [f64]| {
        let mut xv = vec![0.0; n];
        for (r, slot) in xv.iter_mut().enumerate() {
            *slot = dot(x.row(r), v);
        }
        out.fill(0.0);
        for (r, &s) in xv.iter().enumerate() {
            for (o, &xc) in out.iter_mut().zip(x.row(r)) {
                *o += s * xc;
            }
        }
        for (o, &vi) in out.iter_mut().zip(v) {
            *o += lambda * vi;
        }
    };
    for col in 0..y.cols {
        let mut b = vec![0.0; d];
        for r in 0..n {
            let yv = y.at(r, col);
            for (o, &xc) in b.iter_mut().zip(x.row(r)) {
                *o += yv * xc;
            }
        }
        let sol = cg_solve(&matvec, &b, CG_MAX_ITER, CG_TOL);
        for (r, v) in sol.into_iter().enumerate() {
            w.set(r, col, v);
        }
    }
    Ok(w)
}
