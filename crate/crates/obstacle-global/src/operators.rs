//! Convex uniformly elliptic operators on symmetric matrices.
//!
//! Supported shapes: the trace, extremal (Pucci-type) operators, finite
//! maxima of linear operators, their log-sum-exp smoothings, and shifts
//! `M -> F(M + A) - F(A)`. Alongside evaluation the module provides the
//! derivative calculus needed by the Newton solver and the profile
//! normalization, plus sampled checks of ellipticity, convexity, and the
//! modulus of continuity of the derivative.

use crate::scalar::{real, Scalar};
use crate::sym::SymMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// One member of a max-of-linear family: `M -> trace(coeff * M) + offset`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(
    serialize = "S: Serialize",
    deserialize = "S: Deserialize<'de> + Scalar"
))]
pub struct LinearBranch<S> {
    pub coeff: SymMatrix<S>,
    pub offset: S,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[serde(bound(serialize = "S: Serialize"))]
pub enum OperatorKind<S> {
    Trace,
    Pucci {
        lower: S,
        upper: S,
    },
    MaxLinear {
        family: Vec<LinearBranch<S>>,
    },
    SmoothMax {
        family: Vec<LinearBranch<S>>,
        sharpness: S,
    },
    Shifted {
        base: Box<Operator<S>>,
        center: SymMatrix<S>,
    },
}

/// A convex uniformly elliptic operator together with its declared
/// ellipticity bound: adding a positive semidefinite `P` raises the value by
/// between `|P|/ellipticity` and `ellipticity * |P|` (spectral norm).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(
    serialize = "S: Serialize",
    deserialize = "S: Deserialize<'de> + Scalar"
))]
#[serde(try_from = "OperatorRepr<S>")]
pub struct Operator<S> {
    dim: usize,
    kind: OperatorKind<S>,
    ellipticity: S,
}

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("invalid operator parameters: {0}")]
    InvalidParameters(String),
    #[error("invalid linear family: {0}")]
    InvalidFamily(String),
    #[error("dimension mismatch: operator is {expected}-dimensional, argument is {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("nondifferentiable point encountered: {0}")]
    Kink(String),
    #[error("normalization unsupported: {0}")]
    UnsupportedNormalization(String),
}

/// Report of a nondifferentiable point: the derivative is set-valued there
/// and `extreme_points` spans the relevant corners of the subdifferential.
#[derive(Debug, Clone)]
pub struct Kink<S> {
    pub description: String,
    pub extreme_points: Vec<SymMatrix<S>>,
}

impl<S: Scalar> Kink<S> {
    /// Largest pairwise spectral distance between subdifferential corners.
    pub fn diameter(&self) -> S {
        let mut worst = S::zero();
        for i in 0..self.extreme_points.len() {
            for j in (i + 1)..self.extreme_points.len() {
                let d = self.extreme_points[i]
                    .sub(&self.extreme_points[j])
                    .spectral_norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    /// Entrywise average of the extreme points; a valid subgradient by
    /// convexity of the subdifferential.
    pub fn midpoint(&self) -> SymMatrix<S> {
        let dim = self.extreme_points[0].dim();
        let n = real::<S>(self.extreme_points.len() as f64);
        let mut acc = SymMatrix::zeros(dim);
        for p in &self.extreme_points {
            acc = acc.add(p);
        }
        acc.scale(S::one() / n)
    }
}

impl<S: Scalar> std::fmt::Display for Kink<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.description)
    }
}

impl<S: Scalar + std::fmt::Debug> std::error::Error for Kink<S> {}

fn family_spectral_range<S: Scalar>(family: &[LinearBranch<S>]) -> (S, S) {
    let mut lo = S::infinity();
    let mut hi = S::neg_infinity();
    for b in family {
        let eig = b.coeff.eigen_decompose();
        lo = lo.min(eig.values[0]);
        hi = hi.max(eig.values[eig.dim - 1]);
    }
    (lo, hi)
}

fn family_ellipticity<S: Scalar>(dim: usize, family: &[LinearBranch<S>]) -> S {
    let (lo, hi) = family_spectral_range(family);
    (real::<S>(dim as f64) * hi).max(S::one() / lo).max(S::one())
}

fn validate_family<S: Scalar>(
    dim: usize,
    family: &[LinearBranch<S>],
) -> Result<(), OperatorError> {
    if family.is_empty() {
        return Err(OperatorError::InvalidFamily("family is empty".into()));
    }
    for (k, b) in family.iter().enumerate() {
        if b.coeff.dim() != dim {
            return Err(OperatorError::InvalidFamily(format!(
                "member {k} has dimension {}, expected {dim}",
                b.coeff.dim()
            )));
        }
        let eig = b.coeff.eigen_decompose();
        if eig.values[0] <= S::zero() {
            return Err(OperatorError::InvalidFamily(format!(
                "member {k} has non-positive eigenvalue {:e}; every member must be \
                 positive definite for uniform ellipticity",
                eig.values[0].to_f64().unwrap_or(f64::NAN)
            )));
        }
    }
    Ok(())
}

impl<S: Scalar> Operator<S> {
    pub fn trace(dim: usize) -> Self {
        Self {
            dim,
            kind: OperatorKind::Trace,
            ellipticity: real::<S>(dim as f64),
        }
    }

    /// Extremal operator: upper coefficient on positive eigenvalues, lower on
    /// negative ones; requires `0 < lower <= upper`.
    pub fn pucci(dim: usize, lower: S, upper: S) -> Result<Self, OperatorError> {
        if !(lower > S::zero() && lower <= upper) {
            return Err(OperatorError::InvalidParameters(format!(
                "extremal coefficients need 0 < lower <= upper, got ({:e}, {:e})",
                lower.to_f64().unwrap_or(f64::NAN),
                upper.to_f64().unwrap_or(f64::NAN)
            )));
        }
        Ok(Self {
            dim,
            kind: OperatorKind::Pucci { lower, upper },
            ellipticity: (real::<S>(dim as f64) * upper).max(S::one() / lower),
        })
    }

    /// Skips parameter validation so checks can be pointed at deliberately
    /// broken operators (for example a concave variant with lower > upper).
    pub fn pucci_unchecked(dim: usize, lower: S, upper: S) -> Self {
        let mag = lower.abs().max(upper.abs()).max(S::one());
        let inv = if lower > S::zero() {
            S::one() / lower
        } else {
            real::<S>(1e6)
        };
        Self {
            dim,
            kind: OperatorKind::Pucci { lower, upper },
            ellipticity: (real::<S>(dim as f64) * mag).max(inv),
        }
    }

    pub fn max_linear(dim: usize, family: Vec<LinearBranch<S>>) -> Result<Self, OperatorError> {
        validate_family(dim, &family)?;
        let ellipticity = family_ellipticity(dim, &family);
        Ok(Self {
            dim,
            kind: OperatorKind::MaxLinear { family },
            ellipticity,
        })
    }

    /// Like `max_linear` but trusts the caller's ellipticity bound; used to
    /// exercise the sampled checks against a wrong declaration.
    pub fn max_linear_with_ellipticity(
        dim: usize,
        family: Vec<LinearBranch<S>>,
        ellipticity: S,
    ) -> Result<Self, OperatorError> {
        validate_family(dim, &family)?;
        Ok(Self {
            dim,
            kind: OperatorKind::MaxLinear { family },
            ellipticity,
        })
    }

    pub fn smooth_max(
        dim: usize,
        family: Vec<LinearBranch<S>>,
        sharpness: S,
    ) -> Result<Self, OperatorError> {
        if !(sharpness > S::zero()) {
            return Err(OperatorError::InvalidParameters(
                "sharpness must be positive".into(),
            ));
        }
        validate_family(dim, &family)?;
        let ellipticity = family_ellipticity(dim, &family);
        Ok(Self {
            dim,
            kind: OperatorKind::SmoothMax { family, sharpness },
            ellipticity,
        })
    }

    /// Log-sum-exp smoothing of the extremal operator restricted to its
    /// diagonal family: all 2^dim diagonal matrices with entries in
    /// {lower, upper}. Smooth everywhere, so suited to derivative-based
    /// solves and normalization.
    pub fn smoothed_extremal(
        dim: usize,
        lower: S,
        upper: S,
        sharpness: S,
    ) -> Result<Self, OperatorError> {
        if !(lower > S::zero() && lower <= upper) {
            return Err(OperatorError::InvalidParameters(
                "need 0 < lower <= upper".into(),
            ));
        }
        Self::smooth_max(dim, diagonal_extremal_family(dim, lower, upper), sharpness)
    }

    /// Shift `M -> base(M + center) - base(center)`, the operator governing
    /// the difference between a solution and its quadratic profile.
    pub fn shifted(base: Operator<S>, center: SymMatrix<S>) -> Result<Self, OperatorError> {
        if base.dim != center.dim() {
            return Err(OperatorError::DimensionMismatch {
                expected: base.dim,
                got: center.dim(),
            });
        }
        let dim = base.dim;
        let ellipticity = base.ellipticity;
        Ok(Self {
            dim,
            kind: OperatorKind::Shifted {
                base: Box::new(base),
                center,
            },
            ellipticity,
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn ellipticity(&self) -> S {
        self.ellipticity
    }

    pub fn kind(&self) -> &OperatorKind<S> {
        &self.kind
    }

    /// True exactly for the trace kind, whose derivative is constantly the
    /// identity; the solver uses this to pick a symmetric linear solver.
    pub fn is_trace(&self) -> bool {
        matches!(self.kind, OperatorKind::Trace)
    }

    pub fn eval(&self, m: &SymMatrix<S>) -> S {
        assert_eq!(
            m.dim(),
            self.dim,
            "operator dimension {} vs argument {}",
            self.dim,
            m.dim()
        );
        match &self.kind {
            OperatorKind::Trace => m.trace(),
            OperatorKind::Pucci { lower, upper } => {
                let eig = m.eigen_decompose();
                let mut acc = S::zero();
                for &lam in &eig.values {
                    if lam > S::zero() {
                        acc = acc + *upper * lam;
                    } else {
                        acc = acc + *lower * lam;
                    }
                }
                acc
            }
            OperatorKind::MaxLinear { family } => family
                .iter()
                .map(|b| b.coeff.inner(m) + b.offset)
                .fold(S::neg_infinity(), S::max),
            OperatorKind::SmoothMax { family, sharpness } => {
                let vals: Vec<S> = family.iter().map(|b| b.coeff.inner(m) + b.offset).collect();
                log_sum_exp(&vals, *sharpness)
            }
            OperatorKind::Shifted { base, center } => {
                base.eval(&m.add(center)) - base.eval(center)
            }
        }
    }

    /// Derivative in the Frobenius pairing: `F(m + d) ~ F(m) + sum_ij D_ij d_ij`.
    /// Errors at nondifferentiable points with the subdifferential corners.
    pub fn derivative(&self, m: &SymMatrix<S>) -> Result<SymMatrix<S>, Kink<S>> {
        assert_eq!(m.dim(), self.dim);
        match &self.kind {
            OperatorKind::Trace => Ok(SymMatrix::identity(self.dim)),
            OperatorKind::Pucci { lower, upper } => {
                let eig = m.eigen_decompose();
                let top = eig
                    .values
                    .iter()
                    .fold(S::zero(), |acc, &v| acc.max(v.abs()));
                let tol = real::<S>(1e-10) * (S::one() + top);
                if eig.values.iter().any(|&v| v.abs() <= tol) {
                    let coeff_hi: Vec<S> = eig
                        .values
                        .iter()
                        .map(|&v| if v >= -tol { *upper } else { *lower })
                        .collect();
                    let coeff_lo: Vec<S> = eig
                        .values
                        .iter()
                        .map(|&v| if v > tol { *upper } else { *lower })
                        .collect();
                    let hi = SymMatrix::from_eigen(self.dim, &coeff_hi, &eig.vectors);
                    let lo = SymMatrix::from_eigen(self.dim, &coeff_lo, &eig.vectors);
                    return Err(Kink {
                        description: format!(
                            "extremal operator has an eigenvalue within {:e} of zero",
                            tol.to_f64().unwrap_or(f64::NAN)
                        ),
                        extreme_points: vec![hi, lo],
                    });
                }
                let coeffs: Vec<S> = eig
                    .values
                    .iter()
                    .map(|&v| if v > S::zero() { *upper } else { *lower })
                    .collect();
                Ok(SymMatrix::from_eigen(self.dim, &coeffs, &eig.vectors))
            }
            OperatorKind::MaxLinear { family } => {
                let vals: Vec<S> = family.iter().map(|b| b.coeff.inner(m) + b.offset).collect();
                let top = vals.iter().fold(S::neg_infinity(), |a, &v| a.max(v));
                let tol = real::<S>(1e-10) * (S::one() + top.abs());
                let active: Vec<usize> = (0..vals.len())
                    .filter(|&k| top - vals[k] <= tol)
                    .collect();
                if active.len() > 1 {
                    return Err(Kink {
                        description: format!("{} linear branches tied at the maximum", active.len()),
                        extreme_points: active
                            .iter()
                            .map(|&k| family[k].coeff.clone())
                            .collect(),
                    });
                }
                Ok(family[active[0]].coeff.clone())
            }
            OperatorKind::SmoothMax { family, sharpness } => {
                let vals: Vec<S> = family.iter().map(|b| b.coeff.inner(m) + b.offset).collect();
                let w = softmax_weights(&vals, *sharpness);
                let mut acc = SymMatrix::zeros(self.dim);
                for (k, b) in family.iter().enumerate() {
                    acc = acc.add(&b.coeff.scale(w[k]));
                }
                Ok(acc)
            }
            OperatorKind::Shifted { base, center } => base.derivative(&m.add(center)),
        }
    }

    /// Derivative that never fails: at a kink it returns the midpoint of the
    /// subdifferential corners, which is all a semismooth Newton step needs.
    pub fn derivative_select(&self, m: &SymMatrix<S>) -> SymMatrix<S> {
        match self.derivative(m) {
            Ok(d) => d,
            Err(kink) => kink.midpoint(),
        }
    }

    /// In-place `derivative_select` for per-node hot loops; the smooth family
    /// path accumulates directly into `out` without temporaries.
    pub fn derivative_select_into(&self, m: &SymMatrix<S>, out: &mut SymMatrix<S>) {
        debug_assert_eq!(out.dim(), self.dim);
        match &self.kind {
            OperatorKind::Trace => {
                out.fill_zero();
                for k in 0..self.dim {
                    out.set(k, k, S::one());
                }
            }
            OperatorKind::SmoothMax { family, sharpness } => {
                let vals: Vec<S> = family.iter().map(|b| b.coeff.inner(m) + b.offset).collect();
                let w = softmax_weights(&vals, *sharpness);
                out.fill_zero();
                let dst = out.upper_mut();
                for (k, b) in family.iter().enumerate() {
                    for (d, s) in dst.iter_mut().zip(b.coeff.upper()) {
                        *d = *d + w[k] * *s;
                    }
                }
            }
            _ => {
                *out = self.derivative_select(m);
            }
        }
    }

    /// Central finite differences in matrix space, the derivative oracle.
    pub fn fd_derivative(&self, m: &SymMatrix<S>, step: S) -> SymMatrix<S> {
        SymMatrix::from_fn(self.dim, |i, j| {
            let mut up = m.clone();
            let mut dn = m.clone();
            up.set(i, j, m.get(i, j) + step);
            dn.set(i, j, m.get(i, j) - step);
            let diff = self.eval(&up) - self.eval(&dn);
            if i == j {
                diff / (step + step)
            } else {
                // the symmetric set() moved both (i,j) and (j,i)
                diff / (real::<S>(4.0) * step)
            }
        })
    }

    /// Rewrites the operator in matrix coordinates in which its derivative at
    /// `center` is the identity: returns f~ with f~(N) = F(T N T) where
    /// T = DF(center)^(-1/2), together with T and the transformed center
    /// T^(-1) center T^(-1).
    pub fn normalize(&self, center: &SymMatrix<S>) -> Result<Normalized<S>, OperatorError> {
        assert_eq!(center.dim(), self.dim);
        let deriv = self
            .derivative(center)
            .map_err(|k| OperatorError::Kink(k.to_string()))?;
        let eig = deriv.eigen_decompose();
        if eig.values[0] <= S::zero() {
            return Err(OperatorError::UnsupportedNormalization(format!(
                "derivative at the center has non-positive eigenvalue {:e}",
                eig.values[0].to_f64().unwrap_or(f64::NAN)
            )));
        }
        let transform = deriv.spectral_map(|v| S::one() / v.sqrt());
        let inv_transform = deriv.spectral_map(|v| v.sqrt());
        let new_center = center.sandwich(&inv_transform);
        let operator = match &self.kind {
            OperatorKind::Trace => self.clone(),
            OperatorKind::Pucci { lower, upper } => {
                // the derivative is upper * I only when the center is
                // positive definite; elsewhere the scaled operator leaves
                // the extremal family
                let id_dev = deriv
                    .sub(&SymMatrix::scaled_identity(self.dim, *upper))
                    .max_abs();
                if id_dev > real::<S>(1e-10) * (*upper) {
                    return Err(OperatorError::UnsupportedNormalization(
                        "extremal operator normalization needs a positive definite center"
                            .into(),
                    ));
                }
                Operator::pucci(self.dim, *lower / *upper, S::one())?
            }
            OperatorKind::MaxLinear { family } => {
                let fam = transform_family(family, &transform);
                Operator::max_linear(self.dim, fam)?
            }
            OperatorKind::SmoothMax { family, sharpness } => {
                let fam = transform_family(family, &transform);
                Operator::smooth_max(self.dim, fam, *sharpness)?
            }
            OperatorKind::Shifted { .. } => {
                return Err(OperatorError::UnsupportedNormalization(
                    "normalize the base operator before shifting".into(),
                ));
            }
        };
        let residual = operator
            .derivative_select(&new_center)
            .sub(&SymMatrix::identity(self.dim))
            .max_abs();
        Ok(Normalized {
            operator,
            transform,
            center: new_center,
            derivative_residual: residual,
        })
    }

    /// Samples the two-sided ellipticity inequality on random (M, P) pairs
    /// with P positive semidefinite of known spectral norm.
    pub fn ellipticity_check(&self, trials: usize, seed: u64) -> EllipticityReport<S> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut report = EllipticityReport {
            trials,
            violations: 0,
            worst_lower_margin: S::infinity(),
            worst_upper_margin: S::infinity(),
            notes: Vec::new(),
        };
        let lam = self.ellipticity;
        for t in 0..trials {
            let m = random_sym(&mut rng, self.dim, 1.5);
            let scale = real::<S>(10f64.powf(rng.gen_range(-3.0..0.3)));
            let p = random_psd_with_norm(&mut rng, self.dim, scale);
            let delta = self.eval(&m.add(&p)) - self.eval(&m);
            let tol = real::<S>(1e-9) * (S::one() + delta.abs() + scale);
            let lower_margin = delta - scale / lam;
            let upper_margin = lam * scale - delta;
            report.worst_lower_margin = report.worst_lower_margin.min(lower_margin);
            report.worst_upper_margin = report.worst_upper_margin.min(upper_margin);
            if lower_margin < -tol || upper_margin < -tol {
                report.violations += 1;
                if report.notes.len() < 5 {
                    report.notes.push(format!(
                        "trial {t}: increment {:e} outside [{:e}, {:e}] for |P| = {:e}",
                        delta.to_f64().unwrap_or(f64::NAN),
                        (scale / lam).to_f64().unwrap_or(f64::NAN),
                        (lam * scale).to_f64().unwrap_or(f64::NAN),
                        scale.to_f64().unwrap_or(f64::NAN)
                    ));
                }
            }
        }
        report
    }

    /// Samples midpoint convexity `F(t M + (1-t) N) <= t F(M) + (1-t) F(N)`.
    pub fn convexity_check(&self, trials: usize, seed: u64) -> ConvexityReport<S> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut report = ConvexityReport {
            trials,
            violations: 0,
            worst_excess: S::neg_infinity(),
        };
        for _ in 0..trials {
            let m = random_sym(&mut rng, self.dim, 2.0);
            let n = random_sym(&mut rng, self.dim, 2.0);
            let theta = real::<S>(rng.gen_range(0.05..0.95));
            let mix = m.scale(theta).add(&n.scale(S::one() - theta));
            let chord = theta * self.eval(&m) + (S::one() - theta) * self.eval(&n);
            let excess = self.eval(&mix) - chord;
            report.worst_excess = report.worst_excess.max(excess);
            if excess > real::<S>(1e-12) * (S::one() + chord.abs()) {
                report.violations += 1;
            }
        }
        report
    }

    /// Measures how far the derivative moves under perturbations of the
    /// center, radius by radius; the envelope is a sampled stand-in for the
    /// modulus of continuity of the derivative.
    pub fn modulus_estimate(
        &self,
        center: &SymMatrix<S>,
        radii: &[S],
        seed: u64,
    ) -> Result<ModulusEstimate<S>, OperatorError> {
        const DIRECTIONS: usize = 64;
        let base = self
            .derivative(center)
            .map_err(|k| OperatorError::Kink(k.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sorted: Vec<S> = radii.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("radii are finite"));
        let mut samples = Vec::with_capacity(sorted.len());
        for &t in &sorted {
            let mut sup = S::zero();
            for _ in 0..DIRECTIONS {
                let p = random_sym_with_spectral_norm(&mut rng, self.dim, t);
                let moved = match self.derivative(&center.add(&p)) {
                    Ok(d) => d.sub(&base).spectral_norm(),
                    Err(kink) => kink.diameter(),
                };
                sup = sup.max(moved);
            }
            samples.push((t, sup));
        }
        let mut envelope = samples.clone();
        let mut running = S::zero();
        for entry in &mut envelope {
            running = running.max(entry.1);
            entry.1 = running;
        }
        Ok(ModulusEstimate {
            center: center.clone(),
            samples,
            envelope,
        })
    }
}

/// All 2^dim diagonal matrices with entries drawn from {lower, upper}.
pub fn diagonal_extremal_family<S: Scalar>(
    dim: usize,
    lower: S,
    upper: S,
) -> Vec<LinearBranch<S>> {
    let mut family = Vec::with_capacity(1 << dim);
    for pattern in 0..(1u32 << dim) {
        let m = SymMatrix::from_fn(dim, |i, j| {
            if i != j {
                S::zero()
            } else if pattern >> i & 1 == 1 {
                upper
            } else {
                lower
            }
        });
        family.push(LinearBranch {
            coeff: m,
            offset: S::zero(),
        });
    }
    family
}

fn transform_family<S: Scalar>(
    family: &[LinearBranch<S>],
    transform: &SymMatrix<S>,
) -> Vec<LinearBranch<S>> {
    family
        .iter()
        .map(|b| LinearBranch {
            coeff: b.coeff.sandwich(transform),
            offset: b.offset,
        })
        .collect()
}

fn log_sum_exp<S: Scalar>(vals: &[S], sharpness: S) -> S {
    let top = vals.iter().fold(S::neg_infinity(), |a, &v| a.max(v));
    let mut acc = S::zero();
    for &v in vals {
        acc = acc + ((v - top) * sharpness).exp();
    }
    top + acc.ln() / sharpness
}

fn softmax_weights<S: Scalar>(vals: &[S], sharpness: S) -> Vec<S> {
    let top = vals.iter().fold(S::neg_infinity(), |a, &v| a.max(v));
    let raw: Vec<S> = vals.iter().map(|&v| ((v - top) * sharpness).exp()).collect();
    let total = raw.iter().fold(S::zero(), |a, &v| a + v);
    raw.into_iter().map(|v| v / total).collect()
}

/// Result of rewriting an operator so its derivative at the (transformed)
/// center is the identity.
#[derive(Debug, Clone)]
pub struct Normalized<S> {
    pub operator: Operator<S>,
    /// T with f~(N) = F(T N T); apply as M -> T^(-1) M T^(-1) to move
    /// arguments into the normalized frame.
    pub transform: SymMatrix<S>,
    /// The original center seen in the normalized frame.
    pub center: SymMatrix<S>,
    /// Max-abs deviation of the normalized derivative from the identity.
    pub derivative_residual: S,
}

#[derive(Debug, Clone)]
pub struct EllipticityReport<S> {
    pub trials: usize,
    pub violations: usize,
    pub worst_lower_margin: S,
    pub worst_upper_margin: S,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ConvexityReport<S> {
    pub trials: usize,
    pub violations: usize,
    pub worst_excess: S,
}

/// Sampled modulus of continuity of the derivative around a center matrix.
#[derive(Debug, Clone)]
pub struct ModulusEstimate<S> {
    pub center: SymMatrix<S>,
    /// (radius, measured sup of derivative movement at that radius).
    pub samples: Vec<(S, S)>,
    /// Running maximum over increasing radius; nondecreasing by construction.
    pub envelope: Vec<(S, S)>,
}

impl<S: Scalar> ModulusEstimate<S> {
    /// Conservative envelope lookup: the value at the smallest sampled radius
    /// >= t, or None when t exceeds every sampled radius.
    pub fn bound_at(&self, t: S) -> Option<S> {
        if t <= S::zero() {
            return Some(S::zero());
        }
        self.envelope
            .iter()
            .find(|&&(radius, _)| radius >= t)
            .map(|&(_, v)| v)
    }
}

pub(crate) fn random_sym<S: Scalar, R: Rng>(rng: &mut R, dim: usize, amplitude: f64) -> SymMatrix<S> {
    let entries: Vec<f64> = (0..dim * (dim + 1) / 2)
        .map(|_| rng.gen_range(-amplitude..amplitude))
        .collect();
    let mut k = 0;
    SymMatrix::from_fn(dim, |_, _| {
        let v = real::<S>(entries[k]);
        k += 1;
        v
    })
}

/// Random positive semidefinite matrix rescaled to exact spectral norm.
pub(crate) fn random_psd_with_norm<S: Scalar, R: Rng>(
    rng: &mut R,
    dim: usize,
    norm: S,
) -> SymMatrix<S> {
    let g: Vec<f64> = (0..dim * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let w = SymMatrix::from_fn(dim, |i, j| {
        let mut acc = 0.0;
        for k in 0..dim {
            acc += g[k * dim + i] * g[k * dim + j];
        }
        real::<S>(acc)
    });
    let top = w.spectral_norm();
    if top <= S::zero() {
        return SymMatrix::scaled_identity(dim, norm);
    }
    w.scale(norm / top)
}

fn random_sym_with_spectral_norm<S: Scalar, R: Rng>(
    rng: &mut R,
    dim: usize,
    bound: S,
) -> SymMatrix<S> {
    let m = random_sym::<S, R>(rng, dim, 1.0);
    let top = m.spectral_norm();
    if top <= S::zero() {
        return SymMatrix::zeros(dim);
    }
    let fraction = real::<S>(rng.gen_range(0.2f64..1.0));
    m.scale(bound * fraction / top)
}

// serde: deserialization rebuilds through the constructors so every decoded
// operator is validated; the stored ellipticity is recomputed, not trusted.

#[derive(Deserialize)]
#[serde(bound(deserialize = "S: Deserialize<'de> + Scalar"))]
struct OperatorRepr<S: Scalar> {
    dim: usize,
    kind: KindRepr<S>,
    #[serde(default)]
    #[allow(dead_code)]
    ellipticity: Option<f64>,
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[serde(bound(deserialize = "S: Deserialize<'de> + Scalar"))]
enum KindRepr<S: Scalar> {
    Trace,
    Pucci {
        lower: S,
        upper: S,
    },
    MaxLinear {
        family: Vec<LinearBranch<S>>,
    },
    SmoothMax {
        family: Vec<LinearBranch<S>>,
        sharpness: S,
    },
    Shifted {
        base: Box<OperatorRepr<S>>,
        center: SymMatrix<S>,
    },
}

impl<S: Scalar> TryFrom<OperatorRepr<S>> for Operator<S> {
    type Error = String;

    fn try_from(repr: OperatorRepr<S>) -> Result<Self, String> {
        let built = match repr.kind {
            KindRepr::Trace => Operator::trace(repr.dim),
            KindRepr::Pucci { lower, upper } => {
                Operator::pucci(repr.dim, lower, upper).map_err(|e| e.to_string())?
            }
            KindRepr::MaxLinear { family } => {
                Operator::max_linear(repr.dim, family).map_err(|e| e.to_string())?
            }
            KindRepr::SmoothMax { family, sharpness } => {
                Operator::smooth_max(repr.dim, family, sharpness).map_err(|e| e.to_string())?
            }
            KindRepr::Shifted { base, center } => {
                let base = Operator::try_from(*base)?;
                Operator::shifted(base, center).map_err(|e| e.to_string())?
            }
        };
        if built.dim != repr.dim {
            return Err(format!(
                "declared dimension {} does not match kind dimension {}",
                repr.dim, built.dim
            ));
        }
        Ok(built)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(entries: &[f64]) -> SymMatrix<f64> {
        SymMatrix::from_fn(entries.len(), |i, j| if i == j { entries[i] } else { 0.0 })
    }

    fn demo_family() -> Vec<LinearBranch<f64>> {
        vec![
            LinearBranch {
                coeff: SymMatrix::identity(3),
                offset: 0.0,
            },
            LinearBranch {
                coeff: diag(&[2.0, 0.5, 0.5]),
                offset: 0.0,
            },
        ]
    }

    #[test]
    fn trace_and_extremal_values_match_hand_arithmetic() {
        let tr = Operator::<f64>::trace(3);
        assert_eq!(tr.eval(&SymMatrix::identity(3)), 3.0);
        let pucci = Operator::pucci(3, 1.0, 2.0).unwrap();
        assert!((pucci.eval(&diag(&[1.0, -1.0, 0.0])) - 1.0).abs() < 1e-14);
        assert!((pucci.eval(&SymMatrix::identity(3)) - 6.0).abs() < 1e-14);
        let ml = Operator::max_linear(3, demo_family()).unwrap();
        assert!((ml.eval(&SymMatrix::identity(3)) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn smoothing_of_the_diagonal_extremal_family_at_its_unit_level() {
        // family values at I/6 are (b1+b2+b3)/6 over entries in {1,2};
        // independent scalar arithmetic for the smoothed maximum
        let op = Operator::<f64>::smoothed_extremal(3, 1.0, 2.0, 50.0).unwrap();
        let a = SymMatrix::scaled_identity(3, 1.0 / 6.0);
        let mut acc = 0.0f64;
        for pattern in 0..8u32 {
            let s: f64 = (0..3)
                .map(|i| if pattern >> i & 1 == 1 { 2.0 } else { 1.0 })
                .sum();
            acc += ((s / 6.0 - 1.0) * 50.0).exp();
        }
        let expected = 1.0 + acc.ln() / 50.0;
        assert!((op.eval(&a) - expected).abs() < 1e-14);
        assert!((op.eval(&a) - 1.0).abs() < 1e-4, "smoothing overhead is tiny");
    }

    #[test]
    fn derivatives_have_their_closed_forms() {
        let tr = Operator::<f64>::trace(3);
        let m = diag(&[0.3, -0.7, 2.0]);
        assert!(tr
            .derivative(&m)
            .unwrap()
            .sub(&SymMatrix::identity(3))
            .max_abs()
            .abs()
            < 1e-15);
        let pucci = Operator::pucci(3, 1.0, 2.0).unwrap();
        let d = pucci.derivative(&SymMatrix::identity(3)).unwrap();
        assert!(d.sub(&SymMatrix::scaled_identity(3, 2.0)).max_abs() < 1e-12);
    }

    #[test]
    fn extremal_derivative_reports_kinks_with_unit_diameter() {
        let pucci = Operator::pucci(3, 1.0, 2.0).unwrap();
        let kink = pucci.derivative(&diag(&[1.0, -1.0, 0.0])).unwrap_err();
        // flipping the zero eigenvalue between coefficients 1 and 2 moves the
        // derivative by (2-1) along that eigendirection
        assert!((kink.diameter() - 1.0).abs() < 1e-12);
        let mid = kink.midpoint();
        // midpoint carries coefficient 1.5 on the zero eigendirection (e3)
        assert!((mid.get(2, 2) - 1.5).abs() < 1e-12);
        assert!((mid.get(0, 0) - 2.0).abs() < 1e-12);
        assert!((mid.get(1, 1) - 1.0).abs() < 1e-12);
        assert!(pucci.derivative_select(&diag(&[1.0, -1.0, 0.0])).get(2, 2) == mid.get(2, 2));
    }

    #[test]
    fn tied_linear_branches_report_a_kink() {
        let ml = Operator::max_linear(3, demo_family()).unwrap();
        let kink = ml.derivative(&SymMatrix::identity(3)).unwrap_err();
        assert_eq!(kink.extreme_points.len(), 2);
        let away = diag(&[1.0, 1.0, 2.0]); // identity branch wins: 4 vs 3.5
        let d = ml.derivative(&away).unwrap();
        assert!(d.sub(&SymMatrix::identity(3)).max_abs() < 1e-14);
    }

    #[test]
    fn derivatives_agree_with_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ops: Vec<Operator<f64>> = vec![
            Operator::trace(3),
            Operator::pucci(3, 1.0, 2.0).unwrap(),
            Operator::max_linear(3, demo_family()).unwrap(),
            Operator::smoothed_extremal(3, 1.0, 2.0, 50.0).unwrap(),
            Operator::shifted(
                Operator::smoothed_extremal(3, 1.0, 2.0, 50.0).unwrap(),
                SymMatrix::scaled_identity(3, 1.0 / 6.0),
            )
            .unwrap(),
        ];
        for op in &ops {
            let mut checked = 0;
            while checked < 25 {
                let m = random_sym::<f64, _>(&mut rng, 3, 1.2);
                let exact = match op.derivative(&m) {
                    Ok(d) => d,
                    Err(_) => continue, // kink: resample
                };
                let fd = op.fd_derivative(&m, DEFAULT_FD_STEP);
                assert!(
                    exact.sub(&fd).max_abs() < 1e-5,
                    "derivative mismatch {:e}",
                    exact.sub(&fd).max_abs()
                );
                checked += 1;
            }
        }
    }

    #[test]
    fn shift_vanishes_at_zero_and_matches_the_difference() {
        let base = Operator::<f64>::smoothed_extremal(3, 1.0, 2.0, 30.0).unwrap();
        let a = SymMatrix::scaled_identity(3, 1.0 / 6.0);
        let shifted = Operator::shifted(base.clone(), a.clone()).unwrap();
        assert_eq!(shifted.eval(&SymMatrix::zeros(3)), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let m = random_sym::<f64, _>(&mut rng, 3, 2.0);
            let want = base.eval(&m.add(&a)) - base.eval(&a);
            assert!((shifted.eval(&m) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn normalization_rescales_the_extremal_operator() {
        let pucci = Operator::pucci(3, 1.0, 2.0).unwrap();
        let a = SymMatrix::scaled_identity(3, 1.0 / 6.0);
        let norm = pucci.normalize(&a).unwrap();
        match norm.operator.kind() {
            OperatorKind::Pucci { lower, upper } => {
                assert!((lower - 0.5).abs() < 1e-14);
                assert!((upper - 1.0).abs() < 1e-14);
            }
            other => panic!("unexpected kind {other:?}"),
        }
        // transform is I/sqrt(2); transformed center is 2A = I/3
        assert!(
            norm.transform
                .sub(&SymMatrix::scaled_identity(3, 1.0 / 2.0f64.sqrt()))
                .max_abs()
                < 1e-12
        );
        assert!(norm.center.sub(&SymMatrix::scaled_identity(3, 1.0 / 3.0)).max_abs() < 1e-12);
        assert!(norm.derivative_residual < 1e-10);
        // value preservation: f~(T^(-1) M T^(-1)) = F(M)
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let m = random_sym::<f64, _>(&mut rng, 3, 1.0);
            let inv = norm.transform.spectral_map(|v| 1.0 / v);
            let moved = m.sandwich(&inv);
            assert!((norm.operator.eval(&moved) - pucci.eval(&m)).abs() < 1e-11);
        }
    }

    #[test]
    fn normalization_of_the_smoothed_family_reaches_identity_derivative() {
        let op = Operator::<f64>::smoothed_extremal(3, 1.0, 2.0, 50.0).unwrap();
        let a = SymMatrix::scaled_identity(3, 1.0 / 6.0);
        let norm = op.normalize(&a).unwrap();
        assert!(norm.derivative_residual < 1e-10);
        let fd = norm.operator.fd_derivative(&norm.center, 1e-6);
        assert!(fd.sub(&SymMatrix::identity(3)).max_abs() < 1e-5);
        // trace is already normalized
        let tr = Operator::<f64>::trace(3);
        let n2 = tr.normalize(&SymMatrix::scaled_identity(3, 1.0 / 3.0)).unwrap();
        assert!(n2.transform.sub(&SymMatrix::identity(3)).max_abs() < 1e-14);
        // a shifted operator refuses normalization
        let sh = Operator::shifted(tr, SymMatrix::identity(3)).unwrap();
        assert!(sh.normalize(&SymMatrix::identity(3)).is_err());
    }

    #[test]
    fn ellipticity_holds_for_valid_operators_and_fails_for_false_declarations() {
        for op in [
            Operator::<f64>::trace(3),
            Operator::pucci(3, 1.0, 2.0).unwrap(),
            Operator::smoothed_extremal(3, 1.0, 2.0, 50.0).unwrap(),
        ] {
            let rep = op.ellipticity_check(1000, 42);
            assert_eq!(rep.violations, 0, "{:?}", rep.notes);
        }
        let lying = Operator::max_linear_with_ellipticity(
            3,
            vec![LinearBranch {
                coeff: diag(&[5.0, 1.0, 1.0]),
                offset: 0.0,
            }],
            1.6,
        )
        .unwrap();
        let rep = lying.ellipticity_check(1000, 42);
        assert!(rep.violations > 0, "inflated member must break the declared bound");
    }

    #[test]
    fn convexity_holds_and_the_concave_variant_is_caught() {
        for op in [
            Operator::<f64>::trace(3),
            Operator::pucci(3, 1.0, 2.0).unwrap(),
            Operator::max_linear(3, demo_family()).unwrap(),
            Operator::smoothed_extremal(3, 1.0, 2.0, 50.0).unwrap(),
        ] {
            let rep = op.convexity_check(1000, 7);
            assert_eq!(rep.violations, 0);
        }
        let concave = Operator::<f64>::pucci_unchecked(3, 2.0, 1.0);
        let rep = concave.convexity_check(1000, 7);
        assert!(rep.violations > 0);
    }

    #[test]
    fn monotone_in_positive_semidefinite_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for op in [
            Operator::<f64>::pucci(3, 1.0, 2.0).unwrap(),
            Operator::smoothed_extremal(3, 1.0, 2.0, 50.0).unwrap(),
        ] {
            for _ in 0..200 {
                let m = random_sym::<f64, _>(&mut rng, 3, 2.0);
                let p = random_psd_with_norm::<f64, _>(&mut rng, 3, rng.gen_range(0.01..2.0));
                assert!(op.eval(&m.add(&p)) >= op.eval(&m) - 1e-12);
            }
        }
    }

    #[test]
    fn smooth_maximum_dominates_within_the_log_family_size_envelope() {
        let fam = demo_family();
        let hard = Operator::<f64>::max_linear(3, fam.clone()).unwrap();
        let soft = Operator::smooth_max(3, fam, 25.0).unwrap();
        let gap = (2.0f64).ln() / 25.0;
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..300 {
            let m = random_sym::<f64, _>(&mut rng, 3, 2.0);
            let h = hard.eval(&m);
            let s = soft.eval(&m);
            assert!(s >= h - 1e-13);
            assert!(s <= h + gap + 1e-13);
        }
    }

    #[test]
    fn modulus_envelope_is_flat_for_linear_and_locally_flat_for_extremal() {
        let radii: Vec<f64> = vec![1e-3, 1e-2, 1e-1, 0.5];
        let tr = Operator::<f64>::trace(3);
        let est = tr.modulus_estimate(&SymMatrix::identity(3), &radii, 1).unwrap();
        for &(_, v) in &est.envelope {
            assert_eq!(v, 0.0);
        }
        // extremal derivative is locally constant while eigenvalues stay positive
        let pucci = Operator::pucci(3, 1.0, 2.0).unwrap();
        let est = pucci
            .modulus_estimate(&SymMatrix::identity(3), &radii, 1)
            .unwrap();
        for &(_, v) in &est.envelope {
            assert!(v < 1e-12);
        }
        // the smoothed family has a genuine, nondecreasing modulus
        let soft = Operator::smoothed_extremal(3, 1.0, 2.0, 50.0).unwrap();
        let a = SymMatrix::scaled_identity(3, 1.0 / 3.0);
        let est = soft.modulus_estimate(&a, &radii, 1).unwrap();
        for w in est.envelope.windows(2) {
            assert!(w[1].1 >= w[0].1);
        }
        assert_eq!(est.bound_at(0.0), Some(0.0));
        assert!(est.bound_at(5e-3).unwrap() <= est.bound_at(0.3).unwrap());
        assert!(est.bound_at(1.0).is_none());
    }

    #[test]
    fn serialization_round_trips_every_kind() {
        let ops: Vec<Operator<f64>> = vec![
            Operator::trace(3),
            Operator::pucci(4, 1.0, 2.5).unwrap(),
            Operator::max_linear(3, demo_family()).unwrap(),
            Operator::smoothed_extremal(3, 1.0, 2.0, 50.0).unwrap(),
            Operator::shifted(
                Operator::trace(3),
                SymMatrix::scaled_identity(3, 1.0 / 3.0),
            )
            .unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for op in &ops {
            let text = serde_json::to_string(op).unwrap();
            let back: Operator<f64> = serde_json::from_str(&text).unwrap();
            assert_eq!(back.dim(), op.dim());
            for _ in 0..5 {
                let m = random_sym::<f64, _>(&mut rng, op.dim(), 1.0);
                assert!((back.eval(&m) - op.eval(&m)).abs() < 1e-13);
            }
        }
        assert!(serde_json::from_str::<Operator<f64>>(
            r#"{"dim":3,"kind":{"type":"pucci","lower":2.0,"upper":1.0}}"#
        )
        .is_err());
        assert!(serde_json::from_str::<Operator<f64>>(
            r#"{"dim":3,"kind":{"type":"max_linear","family":[]}}"#
        )
        .is_err());
    }
}
