//! Sparse linear algebra for the eliminated Newton systems: CSR storage,
//! conjugate gradients for the symmetric case, BiCGSTAB otherwise, both
//! under a symmetric Gauss-Seidel (SSOR) preconditioner.
//!
//! Everything here is serial and allocation-stable, so repeated solves with
//! the same sparsity produce bitwise identical iterates.

use crate::scalar::Scalar;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("row {0} has no nonzero diagonal entry")]
    MissingDiagonal(usize),
    #[error("iteration stalled: {0}")]
    Breakdown(String),
    #[error("no convergence in {iterations} iterations; residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64 },
}

#[derive(Debug, Clone)]
pub struct CsrMatrix<S> {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<S>,
}

impl<S: Scalar> CsrMatrix<S> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[S]) {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[span.clone()], &self.vals[span])
    }

    pub fn mat_vec(&self, x: &[S], y: &mut [S]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let mut acc = S::zero();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc = acc + self.vals[k] * x[self.cols[k] as usize];
            }
            y[i] = acc;
        }
    }
}

/// Row-by-row CSR assembly; rows arrive in order with ascending columns.
pub struct CsrBuilder<S> {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<S>,
}

impl<S: Scalar> CsrBuilder<S> {
    pub fn new(n: usize, nnz_estimate: usize) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        Self {
            n,
            row_ptr,
            cols: Vec::with_capacity(nnz_estimate),
            vals: Vec::with_capacity(nnz_estimate),
        }
    }

    pub fn push_row(&mut self, entries: &[(u32, S)]) {
        debug_assert!(
            entries.windows(2).all(|w| w[0].0 < w[1].0),
            "row entries must have strictly ascending columns"
        );
        for &(c, v) in entries {
            debug_assert!((c as usize) < self.n);
            self.cols.push(c);
            self.vals.push(v);
        }
        self.row_ptr.push(self.cols.len());
    }

    pub fn finish(self) -> CsrMatrix<S> {
        assert_eq!(self.row_ptr.len(), self.n + 1, "not every row was pushed");
        CsrMatrix {
            n: self.n,
            row_ptr: self.row_ptr,
            cols: self.cols,
            vals: self.vals,
        }
    }
}

/// Symmetric Gauss-Seidel preconditioner M = (D+L) D^{-1} (D+U); one
/// forward and one backward triangular sweep per application.
pub struct Ssor<S> {
    diag: Vec<S>,
}

impl<S: Scalar> Ssor<S> {
    pub fn new(a: &CsrMatrix<S>) -> Result<Self, LinalgError> {
        let mut diag = vec![S::zero(); a.n];
        for i in 0..a.n {
            let (cols, vals) = a.row(i);
            let mut found = false;
            for (c, v) in cols.iter().zip(vals) {
                if *c as usize == i {
                    diag[i] = *v;
                    found = v.abs() > S::zero();
                    break;
                }
            }
            if !found {
                return Err(LinalgError::MissingDiagonal(i));
            }
        }
        Ok(Self { diag })
    }

    /// Solves M z = r in place of z, using w as scratch.
    pub fn apply(&self, a: &CsrMatrix<S>, r: &[S], z: &mut [S], w: &mut [S]) {
        let n = a.n;
        // forward: (D+L) w = r
        for i in 0..n {
            let (cols, vals) = a.row(i);
            let mut acc = r[i];
            for (c, v) in cols.iter().zip(vals) {
                let j = *c as usize;
                if j < i {
                    acc = acc - *v * w[j];
                }
            }
            w[i] = acc / self.diag[i];
        }
        // backward: (D+U) z = D w
        for i in (0..n).rev() {
            let (cols, vals) = a.row(i);
            let mut acc = self.diag[i] * w[i];
            for (c, v) in cols.iter().zip(vals) {
                let j = *c as usize;
                if j > i {
                    acc = acc - *v * z[j];
                }
            }
            z[i] = acc / self.diag[i];
        }
    }
}

fn inf_norm<S: Scalar>(v: &[S]) -> S {
    v.iter().fold(S::zero(), |a, &x| a.max(x.abs()))
}

fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut acc = S::zero();
    for (x, y) in a.iter().zip(b) {
        acc = acc + *x * *y;
    }
    acc
}

const TRUE_RESIDUAL_PERIOD: usize = 64;

/// Preconditioned conjugate gradients; the matrix must be symmetric positive
/// definite. Stops on the absolute max-norm of the (periodically refreshed)
/// residual. Returns iterations used.
pub fn conjugate_gradient<S: Scalar>(
    a: &CsrMatrix<S>,
    b: &[S],
    x: &mut [S],
    tol: S,
    max_iter: usize,
) -> Result<usize, LinalgError> {
    let n = a.n();
    let pre = Ssor::new(a)?;
    let mut r = vec![S::zero(); n];
    let mut z = vec![S::zero(); n];
    let mut p = vec![S::zero(); n];
    let mut ap = vec![S::zero(); n];
    let mut scratch = vec![S::zero(); n];

    a.mat_vec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    if inf_norm(&r) <= tol {
        return Ok(0);
    }
    pre.apply(a, &r, &mut z, &mut scratch);
    p.copy_from_slice(&z);
    let mut rz = dot(&r, &z);

    for iter in 1..=max_iter {
        a.mat_vec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > S::zero()) {
            return Err(LinalgError::Breakdown(format!(
                "nonpositive curvature {pap:e} at iteration {iter}; matrix not positive definite"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] = x[i] + alpha * p[i];
        }
        if iter % TRUE_RESIDUAL_PERIOD == 0 {
            a.mat_vec(x, &mut r);
            for i in 0..n {
                r[i] = b[i] - r[i];
            }
        } else {
            for i in 0..n {
                r[i] = r[i] - alpha * ap[i];
            }
        }
        if inf_norm(&r) <= tol {
            return Ok(iter);
        }
        pre.apply(a, &r, &mut z, &mut scratch);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let mut r_true = vec![S::zero(); n];
    a.mat_vec(x, &mut r_true);
    for i in 0..n {
        r_true[i] = b[i] - r_true[i];
    }
    Err(LinalgError::NoConvergence {
        iterations: max_iter,
        residual: inf_norm(&r_true).to_f64().unwrap_or(f64::NAN),
    })
}

/// Preconditioned BiCGSTAB for the nonsymmetric eliminated systems.
pub fn bicgstab<S: Scalar>(
    a: &CsrMatrix<S>,
    b: &[S],
    x: &mut [S],
    tol: S,
    max_iter: usize,
) -> Result<usize, LinalgError> {
    let n = a.n();
    let pre = Ssor::new(a)?;
    let mut r = vec![S::zero(); n];
    a.mat_vec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    if inf_norm(&r) <= tol {
        return Ok(0);
    }
    let r_hat = r.clone();
    let mut rho = S::one();
    let mut alpha = S::one();
    let mut omega = S::one();
    let mut v = vec![S::zero(); n];
    let mut p = vec![S::zero(); n];
    let mut p_hat = vec![S::zero(); n];
    let mut s = vec![S::zero(); n];
    let mut s_hat = vec![S::zero(); n];
    let mut t = vec![S::zero(); n];
    let mut scratch = vec![S::zero(); n];

    for iter in 1..=max_iter {
        let rho_next = dot(&r_hat, &r);
        if rho_next.abs() < S::min_positive_value() {
            return Err(LinalgError::Breakdown(format!(
                "shadow residual orthogonal at iteration {iter}"
            )));
        }
        let beta = (rho_next / rho) * (alpha / omega);
        rho = rho_next;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        pre.apply(a, &p, &mut p_hat, &mut scratch);
        a.mat_vec(&p_hat, &mut v);
        let denom = dot(&r_hat, &v);
        if denom.abs() < S::min_positive_value() {
            return Err(LinalgError::Breakdown(format!(
                "search direction degenerate at iteration {iter}"
            )));
        }
        alpha = rho / denom;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if inf_norm(&s) <= tol {
            for i in 0..n {
                x[i] = x[i] + alpha * p_hat[i];
            }
            return Ok(iter);
        }
        pre.apply(a, &s, &mut s_hat, &mut scratch);
        a.mat_vec(&s_hat, &mut t);
        let tt = dot(&t, &t);
        if !(tt > S::zero()) {
            return Err(LinalgError::Breakdown(format!(
                "stabilization step vanished at iteration {iter}"
            )));
        }
        omega = dot(&t, &s) / tt;
        if omega.abs() < S::min_positive_value() {
            return Err(LinalgError::Breakdown(format!(
                "stabilization weight vanished at iteration {iter}"
            )));
        }
        for i in 0..n {
            x[i] = x[i] + alpha * p_hat[i] + omega * s_hat[i];
        }
        if iter % TRUE_RESIDUAL_PERIOD == 0 {
            a.mat_vec(x, &mut r);
            for i in 0..n {
                r[i] = b[i] - r[i];
            }
        } else {
            for i in 0..n {
                r[i] = s[i] - omega * t[i];
            }
        }
        if inf_norm(&r) <= tol {
            return Ok(iter);
        }
    }
    let mut r_true = vec![S::zero(); n];
    a.mat_vec(x, &mut r_true);
    for i in 0..n {
        r_true[i] = b[i] - r_true[i];
    }
    Err(LinalgError::NoConvergence {
        iterations: max_iter,
        residual: inf_norm(&r_true).to_f64().unwrap_or(f64::NAN),
    })
}
