//! Quadratic polynomials `q(x) = (x-c)'A(x-c)/2 + b.(x-c) + a` and the
//! membership test for the profile class: Hessian positive definite and
//! normalized through the operator, constant nonpositive, no linear term.

use crate::operators::Operator;
use crate::scalar::{real, Scalar};
use crate::sym::SymMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(
    serialize = "S: Serialize",
    deserialize = "S: Deserialize<'de> + Scalar"
))]
#[serde(try_from = "PolyRepr<S>", into = "PolyRepr<S>")]
pub struct QuadraticPoly<S: Scalar> {
    dim: usize,
    hessian: SymMatrix<S>,
    center: Vec<S>,
    linear: Vec<S>,
    constant: S,
}

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("quadratic part is degenerate along {direction:?}; no canonical center")]
    DegenerateDirection { direction: Vec<f64> },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

#[derive(Debug, Clone, Serialize)]
#[serde(bound(serialize = "S: Serialize"))]
pub struct ConditionReport<S> {
    pub name: &'static str,
    pub value: S,
    pub tolerance: S,
    pub pass: bool,
}

/// Outcome of the profile-class membership test; `member` is the conjunction
/// of the individual conditions.
#[derive(Debug, Clone, Serialize)]
#[serde(bound(serialize = "S: Serialize"))]
pub struct MembershipVerdict<S> {
    pub member: bool,
    pub conditions: Vec<ConditionReport<S>>,
}

impl<S: Scalar> QuadraticPoly<S> {
    pub fn new(
        hessian: SymMatrix<S>,
        center: Vec<S>,
        linear: Vec<S>,
        constant: S,
    ) -> Result<Self, ProfileError> {
        let dim = hessian.dim();
        if center.len() != dim || linear.len() != dim {
            return Err(ProfileError::DimensionMismatch(format!(
                "hessian is {dim}-dimensional but center has {} and linear {} entries",
                center.len(),
                linear.len()
            )));
        }
        Ok(Self {
            dim,
            hessian,
            center,
            linear,
            constant,
        })
    }

    /// Profile form without a linear term.
    pub fn centered(hessian: SymMatrix<S>, center: Vec<S>, constant: S) -> Self {
        let dim = hessian.dim();
        assert_eq!(center.len(), dim);
        Self {
            dim,
            hessian,
            center,
            linear: vec![S::zero(); dim],
            constant,
        }
    }

    /// Isotropic profile `|x|^2 * scale / 2 + constant` centred at the origin.
    pub fn isotropic(dim: usize, scale: S, constant: S) -> Self {
        Self::centered(
            SymMatrix::scaled_identity(dim, scale),
            vec![S::zero(); dim],
            constant,
        )
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hessian(&self) -> &SymMatrix<S> {
        &self.hessian
    }

    pub fn center(&self) -> &[S] {
        &self.center
    }

    pub fn linear(&self) -> &[S] {
        &self.linear
    }

    pub fn constant(&self) -> S {
        self.constant
    }

    pub fn has_linear_term(&self) -> bool {
        self.linear.iter().any(|&v| v != S::zero())
    }

    pub fn eval(&self, x: &[S]) -> S {
        debug_assert_eq!(x.len(), self.dim);
        let d: Vec<S> = x
            .iter()
            .zip(&self.center)
            .map(|(&xi, &ci)| xi - ci)
            .collect();
        let half = real::<S>(0.5);
        let mut acc = half * self.hessian.quadratic_form(&d) + self.constant;
        for (bi, di) in self.linear.iter().zip(&d) {
            acc = acc + *bi * *di;
        }
        acc
    }

    pub fn gradient(&self, x: &[S]) -> Vec<S> {
        let d: Vec<S> = x
            .iter()
            .zip(&self.center)
            .map(|(&xi, &ci)| xi - ci)
            .collect();
        let mut g = self.hessian.mat_vec(&d);
        for (gi, bi) in g.iter_mut().zip(&self.linear) {
            *gi = *gi + *bi;
        }
        g
    }

    /// The parabolic rescaling `x -> q(s x) / s^2`: Hessian unchanged,
    /// center and linear term divided by s, constant by s^2.
    pub fn rescale(&self, s: S) -> Self {
        Self {
            dim: self.dim,
            hessian: self.hessian.clone(),
            center: self.center.iter().map(|&c| c / s).collect(),
            linear: self.linear.iter().map(|&b| b / s).collect(),
            constant: self.constant / (s * s),
        }
    }

    /// Completes the square, moving the linear term into the center. Errors
    /// when the Hessian is (near) singular, reporting its weakest
    /// eigendirection: no canonical center exists there.
    pub fn absorb_linear(&self) -> Result<Self, ProfileError> {
        if !self.has_linear_term() {
            return Ok(self.clone());
        }
        let shift = self.hessian.solve(&self.linear).ok_or_else(|| {
            let eig = self.hessian.eigen_decompose();
            ProfileError::DegenerateDirection {
                direction: eig.vectors[0]
                    .iter()
                    .map(|v| v.to_f64().unwrap_or(f64::NAN))
                    .collect(),
            }
        })?;
        // q = (d)'A(d)/2 + b.d + a with d = x - c equals
        // (d + A^{-1}b)'A(d + A^{-1}b)/2 + a - b.A^{-1}b/2
        let half = real::<S>(0.5);
        let mut dot = S::zero();
        for (bi, si) in self.linear.iter().zip(&shift) {
            dot = dot + *bi * *si;
        }
        Ok(Self {
            dim: self.dim,
            hessian: self.hessian.clone(),
            center: self
                .center
                .iter()
                .zip(&shift)
                .map(|(&c, &s)| c - s)
                .collect(),
            linear: vec![S::zero(); self.dim],
            constant: self.constant - half * dot,
            // note the sign: with y = d + A^{-1}b the center moves to c - A^{-1}b
        })
    }

    /// Smallest radius around the origin certain to contain the region where
    /// the profile is nonpositive (its prospective contact set).
    pub fn enclosing_radius_from_origin(&self) -> Result<S, ProfileError> {
        let centered = self.absorb_linear()?;
        let mut norm_sq = S::zero();
        for &c in &centered.center {
            norm_sq = norm_sq + c * c;
        }
        let dist = norm_sq.sqrt();
        let lam_min = centered.hessian.eigen_decompose().values[0];
        if centered.constant >= S::zero() || lam_min <= S::zero() {
            return Ok(dist);
        }
        let two = real::<S>(2.0);
        Ok(dist + (two * (-centered.constant) / lam_min).sqrt())
    }

    /// Membership in the profile class under `op`. Tolerance applies to the
    /// operator normalization, the residual linear term, and the slack
    /// allowed on the sign of the constant.
    pub fn membership(&self, op: &Operator<S>, tolerance: S) -> MembershipVerdict<S> {
        assert_eq!(op.dim(), self.dim);
        let norm_dev = (op.eval(&self.hessian) - S::one()).abs();
        let lam_min = self.hessian.eigen_decompose().values[0];
        let linear_size = self
            .linear
            .iter()
            .fold(S::zero(), |acc, &b| acc.max(b.abs()));
        let conditions = vec![
            ConditionReport {
                name: "operator-normalization",
                value: norm_dev,
                tolerance,
                pass: norm_dev <= tolerance,
            },
            ConditionReport {
                name: "positive-definite-hessian",
                value: lam_min,
                tolerance: S::zero(),
                pass: lam_min > S::zero(),
            },
            ConditionReport {
                name: "nonpositive-constant",
                value: self.constant,
                tolerance,
                pass: self.constant <= tolerance,
            },
            ConditionReport {
                name: "no-linear-term",
                value: linear_size,
                tolerance,
                pass: linear_size <= tolerance,
            },
        ];
        MembershipVerdict {
            member: conditions.iter().all(|c| c.pass),
            conditions,
        }
    }
}

impl<S: Scalar> std::fmt::Display for QuadraticPoly<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "quadratic(dim {}, constant {:.6}, center [",
            self.dim,
            self.constant.to_f64().unwrap_or(f64::NAN)
        )?;
        for (k, c) in self.center.iter().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{:.6}", c.to_f64().unwrap_or(f64::NAN))?;
        }
        write!(f, "])")
    }
}

#[derive(Serialize, Deserialize)]
#[serde(bound(
    serialize = "S: Serialize",
    deserialize = "S: Deserialize<'de> + Scalar"
))]
struct PolyRepr<S> {
    dim: usize,
    #[serde(rename = "A")]
    matrix: Vec<S>,
    center: Vec<S>,
    #[serde(default)]
    linear: Option<Vec<S>>,
    constant: S,
}

impl<S: Scalar> TryFrom<PolyRepr<S>> for QuadraticPoly<S> {
    type Error = String;

    fn try_from(repr: PolyRepr<S>) -> Result<Self, String> {
        let hessian = SymMatrix::from_upper(repr.dim, repr.matrix)?;
        let linear = repr.linear.unwrap_or_else(|| vec![S::zero(); repr.dim]);
        QuadraticPoly::new(hessian, repr.center, linear, repr.constant).map_err(|e| e.to_string())
    }
}

impl<S: Scalar> From<QuadraticPoly<S>> for PolyRepr<S> {
    fn from(q: QuadraticPoly<S>) -> Self {
        PolyRepr {
            dim: q.dim,
            matrix: q.hessian.upper().to_vec(),
            center: q.center,
            linear: Some(q.linear),
            constant: q.constant,
        }
    }
}
