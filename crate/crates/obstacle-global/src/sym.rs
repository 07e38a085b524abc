//! Small dense symmetric matrices with packed storage.
//!
//! Dimensions of interest are 3 and 4, so everything here is written for
//! tiny `d` and favors determinism over asymptotic cleverness: the
//! eigendecomposition is a cyclic Jacobi iteration with a fixed sweep order.

use crate::scalar::{real, Scalar};
use serde::{Deserialize, Serialize};

/// Symmetric `d x d` matrix storing the upper triangle row-major.
///
/// Entry `(i, j)` with `i <= j` lives at `i*d - i*(i-1)/2 + (j - i)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymMatrix<S> {
    dim: usize,
    upper: Vec<S>,
}

#[derive(Deserialize)]
struct SymMatrixRepr<S> {
    dim: usize,
    upper: Vec<S>,
}

impl<'de, S: Scalar + Deserialize<'de>> Deserialize<'de> for SymMatrix<S> {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let repr = SymMatrixRepr::<S>::deserialize(de)?;
        SymMatrix::from_upper(repr.dim, repr.upper)
            .map_err(|msg| serde::de::Error::custom(msg))
    }
}

pub fn packed_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

impl<S: Scalar> SymMatrix<S> {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        Self {
            dim,
            upper: vec![S::zero(); packed_len(dim)],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, S::one())
    }

    pub fn scaled_identity(dim: usize, s: S) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.set(i, i, s);
        }
        m
    }

    /// Builds from a packed upper triangle; length must be `d(d+1)/2`.
    pub fn from_upper(dim: usize, upper: Vec<S>) -> Result<Self, String> {
        if dim == 0 {
            return Err("dimension must be positive".into());
        }
        if upper.len() != packed_len(dim) {
            return Err(format!(
                "packed upper triangle for dim {} needs {} entries, got {}",
                dim,
                packed_len(dim),
                upper.len()
            ));
        }
        Ok(Self { dim, upper })
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Rank-one-sum reconstruction `sum_k values[k] v_k v_k^T`.
    pub fn from_eigen(dim: usize, values: &[S], vectors: &[Vec<S>]) -> Self {
        assert_eq!(values.len(), dim);
        assert_eq!(vectors.len(), dim);
        Self::from_fn(dim, |i, j| {
            let mut acc = S::zero();
            for k in 0..dim {
                acc = acc + values[k] * vectors[k][i] * vectors[k][j];
            }
            acc
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        i * self.dim - i * (i.wrapping_sub(1)) / 2 + (j - i)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> S {
        self.upper[self.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: S) {
        let k = self.idx(i, j);
        self.upper[k] = v;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: S) {
        let k = self.idx(i, j);
        self.upper[k] = self.upper[k] + v;
    }

    pub fn upper_mut(&mut self) -> &mut [S] {
        &mut self.upper
    }

    pub fn fill_zero(&mut self) {
        self.upper.fill(S::zero());
    }

    pub fn upper(&self) -> &[S] {
        &self.upper
    }

    pub fn to_dense(&self) -> Vec<S> {
        let d = self.dim;
        let mut out = vec![S::zero(); d * d];
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = self.get(i, j);
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let upper = self
            .upper
            .iter()
            .zip(&other.upper)
            .map(|(&a, &b)| a + b)
            .collect();
        Self { dim: self.dim, upper }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let upper = self
            .upper
            .iter()
            .zip(&other.upper)
            .map(|(&a, &b)| a - b)
            .collect();
        Self { dim: self.dim, upper }
    }

    pub fn scale(&self, s: S) -> Self {
        let upper = self.upper.iter().map(|&a| a * s).collect();
        Self { dim: self.dim, upper }
    }

    pub fn trace(&self) -> S {
        let mut t = S::zero();
        for i in 0..self.dim {
            t = t + self.get(i, i);
        }
        t
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> S {
        self.upper
            .iter()
            .fold(S::zero(), |acc, &v| acc.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> S {
        let mut acc = S::zero();
        for i in 0..self.dim {
            for j in 0..self.dim {
                let v = self.get(i, j);
                acc = acc + v * v;
            }
        }
        acc.sqrt()
    }

    pub fn mat_vec(&self, x: &[S]) -> Vec<S> {
        assert_eq!(x.len(), self.dim);
        (0..self.dim)
            .map(|i| {
                let mut acc = S::zero();
                for j in 0..self.dim {
                    acc = acc + self.get(i, j) * x[j];
                }
                acc
            })
            .collect()
    }

    /// Bilinear form `x . M x` (no 1/2 factor).
    pub fn quadratic_form(&self, x: &[S]) -> S {
        let mx = self.mat_vec(x);
        x.iter().zip(&mx).fold(S::zero(), |acc, (&a, &b)| acc + a * b)
    }

    /// Frobenius inner product `sum_ij A_ij B_ij`.
    pub fn inner(&self, other: &Self) -> S {
        assert_eq!(self.dim, other.dim);
        let mut acc = S::zero();
        for i in 0..self.dim {
            for j in 0..self.dim {
                acc = acc + self.get(i, j) * other.get(i, j);
            }
        }
        acc
    }

    /// Symmetric congruence `T M T` for symmetric `T`; the result is
    /// symmetrized entrywise to absorb roundoff.
    pub fn sandwich(&self, t: &Self) -> Self {
        assert_eq!(self.dim, t.dim);
        let d = self.dim;
        let m = self.to_dense();
        let td = t.to_dense();
        // mt = M T
        let mut mt = vec![S::zero(); d * d];
        for i in 0..d {
            for j in 0..d {
                let mut acc = S::zero();
                for k in 0..d {
                    acc = acc + m[i * d + k] * td[k * d + j];
                }
                mt[i * d + j] = acc;
            }
        }
        Self::from_fn(d, |i, j| {
            let mut a = S::zero();
            let mut b = S::zero();
            for k in 0..d {
                a = a + td[i * d + k] * mt[k * d + j];
                b = b + td[j * d + k] * mt[k * d + i];
            }
            (a + b) * real::<S>(0.5)
        })
    }

    /// Cyclic Jacobi eigendecomposition; eigenvalues ascending.
    pub fn eigen_decompose(&self) -> EigenDecomposition<S> {
        let d = self.dim;
        let mut a = self.to_dense();
        // v starts as identity; columns accumulate the rotations
        let mut v = vec![S::zero(); d * d];
        for i in 0..d {
            v[i * d + i] = S::one();
        }
        let frob = self.frobenius_norm();
        let tol = frob * S::epsilon() * real::<S>(16.0);
        for _sweep in 0..64 {
            let mut off = S::zero();
            for p in 0..d {
                for q in (p + 1)..d {
                    off = off + a[p * d + q] * a[p * d + q];
                }
            }
            if (off + off).sqrt() <= tol || off == S::zero() {
                break;
            }
            for p in 0..d {
                for q in (p + 1)..d {
                    let apq = a[p * d + q];
                    if apq.abs() <= tol * real::<S>(1e-3) {
                        continue;
                    }
                    let app = a[p * d + p];
                    let aqq = a[q * d + q];
                    let theta = (aqq - app) / (apq + apq);
                    let t = {
                        let sign = if theta >= S::zero() { S::one() } else { -S::one() };
                        sign / (theta.abs() + (theta * theta + S::one()).sqrt())
                    };
                    let c = S::one() / (t * t + S::one()).sqrt();
                    let s = t * c;
                    let tau = s / (S::one() + c);
                    a[p * d + p] = app - t * apq;
                    a[q * d + q] = aqq + t * apq;
                    a[p * d + q] = S::zero();
                    a[q * d + p] = S::zero();
                    for k in 0..d {
                        if k != p && k != q {
                            let akp = a[k * d + p];
                            let akq = a[k * d + q];
                            let np = akp - s * (akq + tau * akp);
                            let nq = akq + s * (akp - tau * akq);
                            a[k * d + p] = np;
                            a[p * d + k] = np;
                            a[k * d + q] = nq;
                            a[q * d + k] = nq;
                        }
                    }
                    for k in 0..d {
                        let vkp = v[k * d + p];
                        let vkq = v[k * d + q];
                        v[k * d + p] = vkp - s * (vkq + tau * vkp);
                        v[k * d + q] = vkq + s * (vkp - tau * vkq);
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| {
            a[i * d + i]
                .partial_cmp(&a[j * d + j])
                .expect("eigenvalues are finite")
        });
        let values: Vec<S> = order.iter().map(|&k| a[k * d + k]).collect();
        let vectors: Vec<Vec<S>> = order
            .iter()
            .map(|&k| (0..d).map(|i| v[i * d + k]).collect())
            .collect();
        EigenDecomposition { dim: d, values, vectors }
    }

    /// Largest absolute eigenvalue.
    pub fn spectral_norm(&self) -> S {
        self.eigen_decompose()
            .values
            .iter()
            .fold(S::zero(), |acc, &v| acc.max(v.abs()))
    }

    /// Applies `f` to the spectrum: `V f(Lambda) V^T`.
    pub fn spectral_map(&self, f: impl Fn(S) -> S) -> Self {
        let eig = self.eigen_decompose();
        let mapped: Vec<S> = eig.values.iter().map(|&v| f(v)).collect();
        Self::from_eigen(self.dim, &mapped, &eig.vectors)
    }

    /// Solves `M x = b`; `None` when the matrix is numerically singular
    /// relative to its largest eigenvalue.
    pub fn solve(&self, b: &[S]) -> Option<Vec<S>> {
        let eig = self.eigen_decompose();
        let top = eig
            .values
            .iter()
            .fold(S::zero(), |acc, &v| acc.max(v.abs()));
        let floor = top * S::epsilon() * real::<S>(64.0);
        let mut x = vec![S::zero(); self.dim];
        for k in 0..self.dim {
            if eig.values[k].abs() <= floor {
                return None;
            }
            let vk = &eig.vectors[k];
            let proj = vk
                .iter()
                .zip(b)
                .fold(S::zero(), |acc, (&v, &bb)| acc + v * bb);
            let w = proj / eig.values[k];
            for i in 0..self.dim {
                x[i] = x[i] + w * vk[i];
            }
        }
        Some(x)
    }
}

/// Eigendecomposition with eigenvalues ascending and unit eigenvectors.
#[derive(Debug, Clone)]
pub struct EigenDecomposition<S> {
    pub dim: usize,
    pub values: Vec<S>,
    /// `vectors[k]` is the eigenvector for `values[k]`.
    pub vectors: Vec<Vec<S>>,
}

impl<S: Scalar> EigenDecomposition<S> {
    pub fn reconstruct(&self) -> SymMatrix<S> {
        SymMatrix::from_eigen(self.dim, &self.values, &self.vectors)
    }
}
