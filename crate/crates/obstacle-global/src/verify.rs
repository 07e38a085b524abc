//! Independent checking machinery: closed-form radial references, the
//! inverse-square-root decay barrier, and randomized ordering checks.
//!
//! Everything in this module is deliberately written against closed forms or
//! brute-force sampling rather than the discretized machinery it is used to
//! check, so a bug in the solver cannot hide behind the same bug here.

use crate::sym::SymMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(
        "boundary constant {constant} has no matching contact ball in radius {radius}: \
         need {lower_bound} < constant < 0"
    )]
    BoundaryConstantOutOfRange {
        constant: f64,
        radius: f64,
        lower_bound: f64,
    },
    #[error("dimension {0} unsupported: radial references need dimension >= 3")]
    UnsupportedDim(usize),
}

/// Rotationally symmetric solution of the unit-Laplacian obstacle problem.
///
/// Outside the contact ball of radius `contact_radius` the value is
/// `r^2/(2 d) + tail_coeff * r^(2-d) + offset`; inside it is zero. The
/// coefficients follow from matching value and slope to zero at the contact
/// radius, which pins `tail_coeff = rho^d / (d (d-2))` and
/// `offset = -rho^2 / (2 (d-2))`.
#[derive(Debug, Clone, Copy)]
pub struct RadialSolution {
    pub dim: usize,
    pub contact_radius: f64,
    pub tail_coeff: f64,
    pub offset: f64,
}

impl RadialSolution {
    /// Entire-space solution with a prescribed contact ball radius.
    pub fn global(dim: usize, contact_radius: f64) -> Result<Self, OracleError> {
        if dim < 3 {
            return Err(OracleError::UnsupportedDim(dim));
        }
        assert!(contact_radius > 0.0, "contact radius must be positive");
        let d = dim as f64;
        let rho = contact_radius;
        Ok(Self {
            dim,
            contact_radius: rho,
            tail_coeff: rho.powi(dim as i32) / (d * (d - 2.0)),
            offset: -rho * rho / (2.0 * (d - 2.0)),
        })
    }

    /// Solution of the ball problem with boundary data `r^2/(2d) + a` on the
    /// sphere of radius `ball_radius`.
    ///
    /// Smooth matching at the (unknown) contact radius plus the boundary
    /// condition reduce to one scalar equation
    /// `g(rho) = rho^d R^(2-d) / (d(d-2)) - rho^2 / (2(d-2)) = a`,
    /// and `g` decreases strictly from `0` to `-R^2/(2d)` on `(0, R)`, so the
    /// root is unique and bisection cannot miss it.
    pub fn matched_to_ball(
        dim: usize,
        ball_radius: f64,
        boundary_constant: f64,
    ) -> Result<Self, OracleError> {
        if dim < 3 {
            return Err(OracleError::UnsupportedDim(dim));
        }
        assert!(ball_radius > 0.0, "ball radius must be positive");
        let d = dim as f64;
        let r = ball_radius;
        let a = boundary_constant;
        let lower_bound = -r * r / (2.0 * d);
        if !(a < 0.0 && a > lower_bound) {
            return Err(OracleError::BoundaryConstantOutOfRange {
                constant: a,
                radius: r,
                lower_bound,
            });
        }
        let g = |rho: f64| {
            rho.powi(dim as i32) * r.powf(2.0 - d) / (d * (d - 2.0))
                - rho * rho / (2.0 * (d - 2.0))
        };
        let mut lo = 0.0_f64;
        let mut hi = r;
        // invariant: g(lo) > a >= g(hi)
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > a {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON * r {
                break;
            }
        }
        let rho = 0.5 * (lo + hi);
        Ok(Self {
            dim,
            contact_radius: rho,
            tail_coeff: rho.powi(dim as i32) / (d * (d - 2.0)),
            offset: -rho * rho / (2.0 * (d - 2.0)),
        })
    }

    /// The constant `a` such that the solution equals `r^2/(2d) + a` up to the
    /// decaying tail; for the entire-space solution this is the value of the
    /// matching quadratic at the contact point.
    pub fn quadratic_constant(&self) -> f64 {
        self.offset
    }

    pub fn eval_radius(&self, r: f64) -> f64 {
        if r <= self.contact_radius {
            return 0.0;
        }
        let d = self.dim as f64;
        r * r / (2.0 * d) + self.tail_coeff * r.powf(2.0 - d) + self.offset
    }

    pub fn deriv_radius(&self, r: f64) -> f64 {
        if r <= self.contact_radius {
            return 0.0;
        }
        let d = self.dim as f64;
        r / d + (2.0 - d) * self.tail_coeff * r.powf(1.0 - d)
    }

    pub fn second_deriv_radius(&self, r: f64) -> f64 {
        if r <= self.contact_radius {
            return 0.0;
        }
        let d = self.dim as f64;
        1.0 / d + (2.0 - d) * (1.0 - d) * self.tail_coeff * r.powf(-d)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim);
        let r = x.iter().map(|&c| c * c).sum::<f64>().sqrt();
        self.eval_radius(r)
    }

    /// Difference to the pure quadratic `r^2/(2d) + offset` at radius `r`;
    /// decays like `r^(2-d)`.
    pub fn tail_at(&self, r: f64) -> f64 {
        let d = self.dim as f64;
        self.tail_coeff * r.powf(2.0 - d)
    }
}

/// Fourth-order integration of `u'' + (d-1)/r u' = 1` from the contact radius
/// with zero value and slope, used to re-derive the closed-form coefficients
/// without trusting them.
pub fn integrate_radial_ode(dim: usize, contact_radius: f64, r_end: f64, steps: usize) -> f64 {
    assert!(contact_radius > 0.0 && r_end > contact_radius && steps > 0);
    let d = dim as f64;
    let f = |r: f64, _u: f64, v: f64| 1.0 - (d - 1.0) / r * v;
    let h = (r_end - contact_radius) / steps as f64;
    let mut r = contact_radius;
    let (mut u, mut v) = (0.0_f64, 0.0_f64);
    for _ in 0..steps {
        let k1u = v;
        let k1v = f(r, u, v);
        let k2u = v + 0.5 * h * k1v;
        let k2v = f(r + 0.5 * h, u + 0.5 * h * k1u, v + 0.5 * h * k1v);
        let k3u = v + 0.5 * h * k2v;
        let k3v = f(r + 0.5 * h, u + 0.5 * h * k2u, v + 0.5 * h * k2v);
        let k4u = v + h * k3v;
        let k4v = f(r + h, u + h * k3u, v + h * k3v);
        u += h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
        v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        r += h;
    }
    u
}

/// Decaying barrier `radius^(1/2) |x|^(-1/2)` used to control how fast a
/// solution approaches its quadratic profile; its value is 1 on the sphere
/// `|x| = radius`.
///
/// Its Hessian is `(1/2) radius^(1/2) |x|^(-5/2) ((5/2) e e^T - I)` with
/// `e = x/|x|`: one positive eigenvalue `(3/4) radius^(1/2) |x|^(-5/2)` along
/// the ray and `d-1` negative ones, so every uniformly elliptic operator that
/// vanishes on zero sees it as a strict supersolution for dimension >= 3
/// once the derivative varies slowly enough near the profile Hessian.
#[derive(Debug, Clone, Copy)]
pub struct Barrier {
    pub radius: f64,
}

impl Barrier {
    pub fn new(radius: f64) -> Self {
        assert!(radius >= 1.0, "barrier radius must be at least 1");
        Self { radius }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let r = norm(x);
        assert!(r > 0.0, "barrier is singular at the origin");
        self.radius.sqrt() / r.sqrt()
    }

    pub fn value_radius(&self, r: f64) -> f64 {
        assert!(r > 0.0);
        self.radius.sqrt() / r.sqrt()
    }

    pub fn hessian(&self, x: &[f64]) -> SymMatrix<f64> {
        let d = x.len();
        let r = norm(x);
        assert!(r > 0.0, "barrier is singular at the origin");
        let k = 0.5 * self.radius.sqrt() * r.powf(-2.5);
        SymMatrix::from_fn(d, |i, j| {
            let rad = 2.5 * x[i] * x[j] / (r * r);
            let diag = if i == j { 1.0 } else { 0.0 };
            k * (rad - diag)
        })
    }

    /// Trace of the Hessian in dimension `d`, by the closed form
    /// `(1/2) radius^(1/2) r^(-5/2) (5/2 - d)`.
    pub fn laplacian_radius(&self, dim: usize, r: f64) -> f64 {
        assert!(r > 0.0);
        0.5 * self.radius.sqrt() * r.powf(-2.5) * (2.5 - dim as f64)
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|&c| c * c).sum::<f64>().sqrt()
}

pub(crate) fn norm_s<S: crate::scalar::Scalar>(x: &[S]) -> S {
    x.iter()
        .fold(S::zero(), |acc, &c| acc + c * c)
        .sqrt()
}
