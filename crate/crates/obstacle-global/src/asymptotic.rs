//! Recovery of the quadratic profile from a computed solution field.
//!
//! Two fitting stages drive the extraction: parabolic rescalings fitted on
//! dyadic annuli recover the Hessian, and a windowed fit of the remainder
//! against {1, x_i, |x - c|^(2-d)} recovers center, constant, and the decay
//! tail. The residual left after removing the fitted quadratic is binned
//! into thin shells and its log-log slope estimates the decay rate.

use crate::grid::{Grid, NodeClass};
use crate::operators::Operator;
use crate::poly::{MembershipVerdict, ProfileError, QuadraticPoly};
use crate::scalar::{real, Scalar};
use crate::sym::SymMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("fit window [{lo}, {hi}] is empty; the ball is too small relative \
             to the contact set")]
    WindowCollapsed { lo: f64, hi: f64 },
    #[error("fitted Hessian is degenerate along {direction:?}; no profile center")]
    DegenerateProfile { direction: Vec<f64> },
    #[error("only {usable} shells rise above the noise floor, {needed} needed \
             for a decay fit")]
    InsufficientShells { usable: usize, needed: usize },
    #[error("least-squares system is singular ({context})")]
    FitFailed { context: &'static str },
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

/// Hessian-scale fit of the solution on one dyadic annulus.
#[derive(Debug, Clone)]
pub struct BlowDownFit<S> {
    pub hessian: SymMatrix<S>,
    pub linear: Vec<S>,
    pub constant: S,
    pub tail_coeff: S,
    /// Max absolute misfit of the rescaled field over the annulus.
    pub fit_residual: S,
    pub nodes: usize,
}

#[derive(Debug, Clone)]
pub enum ScaleOutcome<S> {
    Fit(BlowDownFit<S>),
    /// Contact nodes reach into the annulus: the scale is too small.
    ContactTooWide { contact_radius: S },
    TooFewNodes { found: usize, needed: usize },
    SingularFit,
}

#[derive(Debug, Clone)]
pub struct ScaleFit<S> {
    pub scale: S,
    pub outcome: ScaleOutcome<S>,
}

/// Decay of the nonquadratic remainder; either a fitted log-log slope or
/// the observation that the remainder drowned in solver noise.
#[derive(Debug, Clone)]
pub enum DecayEstimate<S> {
    Fitted {
        slope: S,
        r_squared: S,
        shells_used: usize,
    },
    BelowNoiseFloor {
        max_residual: S,
    },
}

#[derive(Debug, Clone)]
pub struct ShellResidual<S> {
    pub radius: S,
    pub max_abs: S,
    pub count: usize,
}

#[derive(Debug, Clone)]
pub struct ExtractParams<S> {
    pub membership_tol: S,
    /// Solver residual tolerance; the decay noise floor sits 10x above it.
    pub residual_tol: S,
    /// Apply the finite-ball tail correction to the constant. Set when the
    /// field came from a Dirichlet construction truncated at the grid
    /// radius; leave unset for fields representing entire-space data.
    pub truncation_corrected: bool,
}

impl<S: Scalar> ExtractParams<S> {
    pub fn new() -> Self {
        Self {
            membership_tol: real::<S>(1e-8),
            residual_tol: real::<S>(1e-10),
            truncation_corrected: true,
        }
    }
}

impl<S: Scalar> Default for ExtractParams<S> {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone)]
pub struct ExtractedProfile<S: Scalar> {
    /// The recovered profile in centered form.
    pub profile: QuadraticPoly<S>,
    /// Constant before the finite-ball tail correction.
    pub constant_uncorrected: S,
    /// Coefficient of |x - c|^(2-d) in the window fit.
    pub tail_coeff: S,
    pub truncation_corrected: bool,
    /// Fit window [lo, hi] in radius.
    pub window: (S, S),
    pub contact_centroid: Vec<S>,
    pub contact_radius: S,
    pub shells: Vec<ShellResidual<S>>,
    pub decay: DecayEstimate<S>,
    pub membership: MembershipVerdict<S>,
    pub hessian_fit: BlowDownFit<S>,
}

/// Packed upper-triangle iteration order shared with `SymMatrix`.
fn upper_pairs(dim: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(dim * (dim + 1) / 2);
    for i in 0..dim {
        for j in i..dim {
            out.push((i, j));
        }
    }
    out
}

/// Least squares through the normal equations; None when singular.
fn solve_normal_equations<S: Scalar>(
    rows: impl Iterator<Item = (Vec<S>, S)>,
    m: usize,
) -> Option<(Vec<S>, usize)> {
    let mut normal = SymMatrix::zeros(m);
    let mut rhs = vec![S::zero(); m];
    let mut count = 0usize;
    for (row, value) in rows {
        debug_assert_eq!(row.len(), m);
        for i in 0..m {
            for j in i..m {
                normal.add_to(i, j, row[i] * row[j]);
            }
            rhs[i] = rhs[i] + row[i] * value;
        }
        count += 1;
    }
    let coeffs = normal.solve(&rhs)?;
    Some((coeffs, count))
}

/// Fits the parabolic rescaling v(y) = u(s y) / s^2 on the annulus
/// s/2 <= |x| <= s for each scale, against the full asymptotic basis
/// {y_i y_j, y_i, 1, |y|^(2-d)}.
pub fn blow_down<S: Scalar>(
    grid: &Grid<S>,
    field: &[S],
    contact_mask: &[bool],
    scales: &[S],
) -> Vec<ScaleFit<S>> {
    let dim = grid.dim();
    let pairs = upper_pairs(dim);
    let m = pairs.len() + dim + 2;
    let tail_pow = real::<S>(2.0 - dim as f64);
    let mut contact_radius = S::zero();
    for &id in grid.interior_nodes() {
        if contact_mask[id as usize] {
            contact_radius = contact_radius.max(grid.radius_of(id as usize));
        }
    }

    let mut out = Vec::with_capacity(scales.len());
    for &s in scales {
        let half = s * real::<S>(0.5);
        if contact_radius >= half {
            out.push(ScaleFit {
                scale: s,
                outcome: ScaleOutcome::ContactTooWide { contact_radius },
            });
            continue;
        }
        // collect annulus samples in rescaled coordinates
        let mut samples: Vec<(Vec<S>, S)> = Vec::new();
        let mut buf = [S::zero(); 4];
        for &id in grid.interior_nodes() {
            let id = id as usize;
            let r = grid.radius_of(id);
            if r < half || r > s || !field[id].is_finite() {
                continue;
            }
            grid.point_into(id, &mut buf);
            let y: Vec<S> = buf[..dim].iter().map(|&x| x / s).collect();
            let ry = r / s;
            let mut row = Vec::with_capacity(m);
            for &(i, j) in &pairs {
                row.push(y[i] * y[j]);
            }
            for &yi in &y {
                row.push(yi);
            }
            row.push(S::one());
            row.push(ry.powf(tail_pow));
            samples.push((row, field[id] / (s * s)));
        }
        let needed = 2 * m;
        if samples.len() < needed {
            out.push(ScaleFit {
                scale: s,
                outcome: ScaleOutcome::TooFewNodes {
                    found: samples.len(),
                    needed,
                },
            });
            continue;
        }
        let solved = solve_normal_equations(samples.iter().cloned(), m);
        let outcome = match solved {
            None => ScaleOutcome::SingularFit,
            Some((coeffs, count)) => {
                let mut hessian = SymMatrix::zeros(dim);
                for (k, &(i, j)) in pairs.iter().enumerate() {
                    let v = if i == j {
                        coeffs[k] + coeffs[k]
                    } else {
                        coeffs[k]
                    };
                    hessian.set(i, j, v);
                }
                let linear = coeffs[pairs.len()..pairs.len() + dim].to_vec();
                let constant = coeffs[pairs.len() + dim];
                let tail_coeff = coeffs[pairs.len() + dim + 1];
                let mut worst = S::zero();
                for (row, value) in &samples {
                    let mut pred = S::zero();
                    for (c, r) in coeffs.iter().zip(row) {
                        pred = pred + *c * *r;
                    }
                    worst = worst.max((pred - *value).abs());
                }
                ScaleOutcome::Fit(BlowDownFit {
                    hessian,
                    linear,
                    constant,
                    tail_coeff,
                    fit_residual: worst,
                    nodes: count,
                })
            }
        };
        out.push(ScaleFit { scale: s, outcome });
    }
    out
}

/// Log-log least squares over shells above the noise floor.
pub fn decay_fit<S: Scalar>(
    shells: &[ShellResidual<S>],
    noise_floor: S,
) -> Result<DecayEstimate<S>, ExtractError> {
    const NEEDED: usize = 5;
    let usable: Vec<&ShellResidual<S>> = shells
        .iter()
        .filter(|s| s.max_abs > noise_floor && s.radius > S::zero())
        .collect();
    if usable.is_empty() {
        let max_residual = shells
            .iter()
            .fold(S::zero(), |acc, s| acc.max(s.max_abs));
        return Ok(DecayEstimate::BelowNoiseFloor { max_residual });
    }
    if usable.len() < NEEDED {
        return Err(ExtractError::InsufficientShells {
            usable: usable.len(),
            needed: NEEDED,
        });
    }
    let n = real::<S>(usable.len() as f64);
    let mut sx = S::zero();
    let mut sy = S::zero();
    let mut sxx = S::zero();
    let mut sxy = S::zero();
    let mut syy = S::zero();
    for s in &usable {
        let x = s.radius.ln();
        let y = s.max_abs.ln();
        sx = sx + x;
        sy = sy + y;
        sxx = sxx + x * x;
        sxy = sxy + x * y;
        syy = syy + y * y;
    }
    let denom = n * sxx - sx * sx;
    if denom.abs() <= S::min_positive_value() {
        return Err(ExtractError::FitFailed {
            context: "decay shells are radially degenerate",
        });
    }
    let slope = (n * sxy - sx * sy) / denom;
    let ss_tot = syy - sy * sy / n;
    let intercept = (sy - slope * sx) / n;
    let mut ss_res = S::zero();
    for s in &usable {
        let pred = intercept + slope * s.radius.ln();
        let d = s.max_abs.ln() - pred;
        ss_res = ss_res + d * d;
    }
    let r_squared = if ss_tot > S::zero() {
        S::one() - ss_res / ss_tot
    } else {
        S::one()
    };
    Ok(DecayEstimate::Fitted {
        slope,
        r_squared,
        shells_used: usable.len(),
    })
}

/// Recovers the quadratic profile behind a computed solution field.
pub fn extract_profile<S: Scalar>(
    grid: &Grid<S>,
    field: &[S],
    contact_mask: &[bool],
    op: &Operator<S>,
    params: &ExtractParams<S>,
) -> Result<ExtractedProfile<S>, ExtractError> {
    let dim = grid.dim();
    let radius = grid.radius();
    let h = grid.spacing();

    // Hessian from the outermost dyadic annulus
    let fits = blow_down(grid, field, contact_mask, &[radius]);
    let hessian_fit = match fits.into_iter().next().map(|f| f.outcome) {
        Some(ScaleOutcome::Fit(fit)) => fit,
        Some(ScaleOutcome::ContactTooWide { contact_radius }) => {
            return Err(ExtractError::WindowCollapsed {
                lo: (contact_radius + contact_radius)
                    .to_f64()
                    .unwrap_or(f64::NAN),
                hi: (radius * real::<S>(0.5)).to_f64().unwrap_or(f64::NAN),
            })
        }
        Some(ScaleOutcome::TooFewNodes { .. }) | Some(ScaleOutcome::SingularFit) | None => {
            return Err(ExtractError::FitFailed {
                context: "hessian annulus fit",
            })
        }
    };
    let hessian = hessian_fit.hessian.clone();

    // contact geometry: centroid anchors the tail, circumradius the window
    let mut centroid = vec![S::zero(); dim];
    let mut contact_radius = S::zero();
    let mut n_contact = 0usize;
    let mut buf = [S::zero(); 4];
    for &id in grid.interior_nodes() {
        let id = id as usize;
        if contact_mask[id] {
            grid.point_into(id, &mut buf);
            for k in 0..dim {
                centroid[k] = centroid[k] + buf[k];
            }
            contact_radius = contact_radius.max(grid.radius_of(id));
            n_contact += 1;
        }
    }
    if n_contact > 0 {
        let inv = S::one() / real::<S>(n_contact as f64);
        for c in centroid.iter_mut() {
            *c = *c * inv;
        }
    }

    let w_lo = (contact_radius + contact_radius).max(real::<S>(4.0) * h);
    let w_hi = radius * real::<S>(0.5);
    if w_lo >= w_hi {
        return Err(ExtractError::WindowCollapsed {
            lo: w_lo.to_f64().unwrap_or(f64::NAN),
            hi: w_hi.to_f64().unwrap_or(f64::NAN),
        });
    }

    // window fit of u - x'Ax/2 against {1, x_i, |x - c|^(2-d)}
    let tail_pow = real::<S>(2.0 - dim as f64);
    let m = dim + 2;
    let half = real::<S>(0.5);
    let mut rows: Vec<(Vec<S>, S)> = Vec::new();
    for &id in grid.interior_nodes() {
        let id = id as usize;
        let r = grid.radius_of(id);
        if r < w_lo || r > w_hi || !field[id].is_finite() {
            continue;
        }
        grid.point_into(id, &mut buf);
        let x = &buf[..dim];
        let mut row = Vec::with_capacity(m);
        row.push(S::one());
        for &xi in x {
            row.push(xi);
        }
        let mut dc = S::zero();
        for k in 0..dim {
            let d = x[k] - centroid[k];
            dc = dc + d * d;
        }
        row.push(dc.sqrt().powf(tail_pow));
        let remainder = field[id] - half * hessian.quadratic_form(x);
        rows.push((row, remainder));
    }
    let (coeffs, _) = solve_normal_equations(rows.iter().cloned(), m)
        .ok_or(ExtractError::FitFailed {
            context: "window fit",
        })?;
    let c_hat = coeffs[0];
    let b_hat = &coeffs[1..1 + dim];
    let t_hat = coeffs[1 + dim];

    // complete the square: u ~ (x - xbar)'A(x - xbar)/2 + a
    let shift = hessian.solve(b_hat).ok_or_else(|| {
        let eig = hessian.eigen_decompose();
        ExtractError::DegenerateProfile {
            direction: eig.vectors[0]
                .iter()
                .map(|v| v.to_f64().unwrap_or(f64::NAN))
                .collect(),
        }
    })?;
    let x_bar: Vec<S> = shift.iter().map(|&v| -v).collect();
    let mut quad_at_center = S::zero();
    {
        let q = hessian.quadratic_form(&x_bar);
        quad_at_center = quad_at_center + half * q;
    }
    let constant_uncorrected = c_hat - quad_at_center;
    let constant = if params.truncation_corrected {
        constant_uncorrected + t_hat * radius.powf(tail_pow)
    } else {
        constant_uncorrected
    };

    // shell residuals of the uncorrected fit representation
    let shell_width = h * real::<S>(0.25);
    let mut shells: Vec<(usize, S)> = Vec::new();
    for &id in grid.interior_nodes() {
        let id = id as usize;
        let r = grid.radius_of(id);
        if r < w_lo || r > w_hi || !field[id].is_finite() {
            continue;
        }
        grid.point_into(id, &mut buf);
        let x = &buf[..dim];
        let mut pred = c_hat + half * hessian.quadratic_form(x);
        for k in 0..dim {
            pred = pred + b_hat[k] * x[k];
        }
        let resid = (field[id] - pred).abs();
        let bin = (r / shell_width).to_f64().unwrap_or(0.0).floor() as usize;
        if shells.len() <= bin {
            shells.resize(bin + 1, (0, S::zero()));
        }
        shells[bin].0 += 1;
        shells[bin].1 = shells[bin].1.max(resid);
    }
    let shells: Vec<ShellResidual<S>> = shells
        .iter()
        .enumerate()
        .filter(|(_, (count, _))| *count > 0)
        .map(|(k, &(count, max_abs))| ShellResidual {
            radius: (real::<S>(k as f64) + half) * shell_width,
            max_abs,
            count,
        })
        .collect();

    let noise_floor = real::<S>(10.0) * params.residual_tol;
    let decay = decay_fit(&shells, noise_floor)?;

    let profile = QuadraticPoly::centered(hessian, x_bar, constant);
    let membership = profile.membership(op, params.membership_tol);

    Ok(ExtractedProfile {
        profile,
        constant_uncorrected,
        tail_coeff: t_hat,
        truncation_corrected: params.truncation_corrected,
        window: (w_lo, w_hi),
        contact_centroid: centroid,
        contact_radius,
        shells,
        decay,
        membership,
        hessian_fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::RadialSolution;

    /// Synthetic entire-space radial field sampled on a grid, with the
    /// exact contact mask; bypasses the solver for speed and isolation.
    fn synthetic_radial(
        radius: f64,
        h: f64,
    ) -> (Grid<f64>, Vec<f64>, Vec<bool>, RadialSolution) {
        let grid = Grid::<f64>::new(3, radius, h).unwrap();
        let oracle = RadialSolution::global(3, 1.0).unwrap();
        let mut field = vec![f64::NAN; grid.node_count()];
        let mut mask = vec![false; grid.node_count()];
        for id in 0..grid.node_count() {
            if grid.class(id) != NodeClass::Exterior {
                let x = grid.point(id);
                field[id] = oracle.eval(&x);
                if grid.class(id) == NodeClass::Interior && field[id] <= 1e-10 {
                    mask[id] = true;
                }
            }
        }
        (grid, field, mask, oracle)
    }

    #[test]
    fn blow_down_recovers_the_hessian_at_each_usable_scale() {
        let (grid, field, mask, _) = synthetic_radial(8.0, 0.25);
        let fits = blow_down(&grid, &field, &mask, &[4.0, 8.0]);
        for fit in &fits {
            match &fit.outcome {
                ScaleOutcome::Fit(f) => {
                    let target = SymMatrix::scaled_identity(3, 1.0 / 3.0);
                    assert!(
                        f.hessian.sub(&target).max_abs() < 5e-3,
                        "hessian off by {:e} at scale {}",
                        f.hessian.sub(&target).max_abs(),
                        fit.scale
                    );
                    assert!(f.fit_residual < 1e-3);
                }
                other => panic!("scale {} unusable: {other:?}", fit.scale),
            }
        }
    }

    #[test]
    fn blow_down_rejects_scales_that_touch_the_contact_set() {
        let (grid, field, mask, _) = synthetic_radial(8.0, 0.25);
        // contact reaches radius 1, so scale 1.5 has contact past s/2
        let fits = blow_down(&grid, &field, &mask, &[1.5]);
        assert!(matches!(
            fits[0].outcome,
            ScaleOutcome::ContactTooWide { .. }
        ));
    }

    #[test]
    fn hessian_estimates_stabilize_across_dyadic_scales() {
        let (grid, field, mask, _) = synthetic_radial(8.0, 0.25);
        let fits = blow_down(&grid, &field, &mask, &[2.0, 4.0, 8.0]);
        let h: Vec<SymMatrix<f64>> = fits
            .iter()
            .map(|f| match &f.outcome {
                ScaleOutcome::Fit(fit) => fit.hessian.clone(),
                other => panic!("unusable scale: {other:?}"),
            })
            .collect();
        let d1 = h[1].sub(&h[0]).max_abs();
        let d2 = h[2].sub(&h[1]).max_abs();
        assert!(
            d2 <= (0.6 * d1).max(1e-10),
            "estimates not stabilizing: {d1:e} then {d2:e}"
        );
    }

    #[test]
    fn extraction_recovers_profile_of_an_entire_space_field() {
        let (grid, field, mask, oracle) = synthetic_radial(8.0, 0.25);
        let op = crate::operators::Operator::trace(3);
        // entire-space data: no truncation correction
        let mut params = ExtractParams::new();
        params.truncation_corrected = false;
        let got = extract_profile(&grid, &field, &mask, &op, &params).unwrap();
        let target = SymMatrix::scaled_identity(3, 1.0 / 3.0);
        assert!(got.profile.hessian().sub(&target).max_abs() < 5e-3);
        for k in 0..3 {
            assert!(got.profile.center()[k].abs() < 0.05);
        }
        // the oracle's profile constant is the quadratic offset
        assert!(
            (got.profile.constant() - oracle.quadratic_constant()).abs() < 2e-2,
            "constant {} vs {}",
            got.profile.constant(),
            oracle.quadratic_constant()
        );
        assert!(got.membership.member);
        // tail coefficient approximates the oracle's
        assert!((got.tail_coeff - oracle.tail_coeff).abs() < 0.1);
        match got.decay {
            DecayEstimate::Fitted { slope, .. } => {
                assert!(
                    (-1.4..=-0.7).contains(&slope),
                    "decay slope {slope} outside the expected band"
                );
            }
            DecayEstimate::BelowNoiseFloor { .. } => {
                panic!("synthetic field has a genuine tail")
            }
        }
    }

    #[test]
    fn truncation_correction_recenters_the_constant_of_a_ball_solve() {
        // emulate a Dirichlet-truncated field: the matched ball solution
        let radius = 8.0;
        let grid = Grid::<f64>::new(3, radius, 0.25).unwrap();
        let oracle = RadialSolution::matched_to_ball(3, radius, -0.5).unwrap();
        let mut field = vec![f64::NAN; grid.node_count()];
        let mut mask = vec![false; grid.node_count()];
        for id in 0..grid.node_count() {
            if grid.class(id) != NodeClass::Exterior {
                let x = grid.point(id);
                field[id] = oracle.eval(&x);
                if grid.class(id) == NodeClass::Interior && field[id] <= 1e-10 {
                    mask[id] = true;
                }
            }
        }
        let op = crate::operators::Operator::trace(3);
        let params = ExtractParams::new(); // truncation_corrected = true
        let got = extract_profile(&grid, &field, &mask, &op, &params).unwrap();
        // uncorrected constant is the ball offset, correction restores -1/2
        assert!(
            (got.profile.constant() + 0.5).abs() < 2e-2,
            "corrected constant {}",
            got.profile.constant()
        );
        assert!(
            (got.constant_uncorrected - oracle.offset).abs() < 2e-2,
            "uncorrected {} vs ball offset {}",
            got.constant_uncorrected,
            oracle.offset
        );
    }

    #[test]
    fn quadratic_only_field_reports_below_noise_floor() {
        let grid = Grid::<f64>::new(3, 6.0, 0.25).unwrap();
        let q = QuadraticPoly::isotropic(3, 1.0 / 3.0, 0.0);
        let mut field = grid.sample_poly(&q);
        for id in 0..grid.node_count() {
            if grid.class(id) == NodeClass::Exterior {
                field[id] = f64::NAN;
            }
        }
        // single-point contact at the origin
        let mut mask = vec![false; grid.node_count()];
        mask[grid.index(&[0, 0, 0])] = true;
        let op = crate::operators::Operator::trace(3);
        let mut params = ExtractParams::new();
        params.truncation_corrected = false;
        let got = extract_profile(&grid, &field, &mask, &op, &params).unwrap();
        match got.decay {
            DecayEstimate::BelowNoiseFloor { max_residual } => {
                assert!(max_residual < 1e-9);
            }
            DecayEstimate::Fitted { .. } => panic!("an exact quadratic has no tail"),
        }
        assert!(got.profile.hessian().sub(q.hessian()).max_abs() < 1e-9);
    }

    #[test]
    fn decay_fit_demands_enough_live_shells() {
        let shells: Vec<ShellResidual<f64>> = (0..3)
            .map(|k| ShellResidual {
                radius: 2.0 + k as f64,
                max_abs: 1e-3 / (2.0 + k as f64),
                count: 10,
            })
            .collect();
        match decay_fit(&shells, 1e-9) {
            Err(ExtractError::InsufficientShells { usable, needed }) => {
                assert_eq!(usable, 3);
                assert_eq!(needed, 5);
            }
            other => panic!("expected shell shortage, got {other:?}"),
        }
    }

    #[test]
    fn decay_fit_recovers_a_known_power_law() {
        let shells: Vec<ShellResidual<f64>> = (0..12)
            .map(|k| {
                let r = 2.0 + 0.25 * k as f64;
                ShellResidual {
                    radius: r,
                    max_abs: 0.33 * r.powf(-1.0),
                    count: 50,
                }
            })
            .collect();
        match decay_fit(&shells, 1e-9).unwrap() {
            DecayEstimate::Fitted {
                slope,
                r_squared,
                shells_used,
            } => {
                assert!((slope + 1.0).abs() < 1e-9);
                assert!(r_squared > 0.999999);
                assert_eq!(shells_used, 12);
            }
            other => panic!("expected a fit, got {other:?}"),
        }
    }

    use crate::poly::QuadraticPoly;
}
