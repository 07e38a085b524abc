//! Construction of global solutions from quadratic profiles.
//!
//! Given a profile q in the admissible class (Hessian positive definite and
//! operator-normalized, constant nonpositive, no linear term after
//! absorption), the global solution is built as the limit of obstacle
//! problems on growing balls with boundary data q. Each rung of the ladder
//! is certified against the order relations that drive the limit:
//!
//! * trapping: q <= u_R <= (x-c)'A(x-c)/2 node by node,
//! * monotonicity: u grows with the ball radius on shared nodes,
//! * contact inclusion: contact nodes sit where q is nonpositive,
//!
//! and successive rungs are compared on the half-radius ball to decide
//! whether the construction has stabilized.

use crate::grid::{Grid, GridError, NodeClass};
use crate::operators::Operator;
use crate::poly::{ProfileError, QuadraticPoly};
use crate::scalar::{real, Scalar};
use crate::solver::{
    default_contact_tol, solve_obstacle, ObstacleInstance, SolveError, SolveParams,
};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GlobalError {
    #[error("profile is not in the admissible class: {0}")]
    NotInProfileClass(String),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("rung at radius {radius}: {source}")]
    Solve {
        radius: f64,
        #[source]
        source: SolveError,
    },
    #[error("radius cap {cap} is below the first rung {needed}; raise max_radius")]
    CapTooSmall { cap: f64, needed: f64 },
    #[error(
        "certificate '{name}' failed at rung radius {rung_radius}: value {value:e} \
         below floor {floor:e} (a constant of {implied_c:.2} on h^2 would have passed)"
    )]
    CertificateViolation {
        rung_radius: f64,
        name: &'static str,
        value: f64,
        floor: f64,
        implied_c: f64,
    },
    #[error("contact set is empty on the final ball (radius {radius}); the profile's \
             contact region never materialized")]
    EmptyContact { radius: f64 },
}

#[derive(Debug, Clone)]
pub struct GlobalParams<S> {
    pub h: S,
    pub max_radius: S,
    pub continuation_tol: S,
    pub residual_tol: S,
    pub membership_tol: S,
    pub solver_max_iterations: usize,
    pub max_linear_iterations: usize,
}

impl<S: Scalar> GlobalParams<S> {
    pub fn new(h: S, max_radius: S) -> Self {
        Self {
            h,
            max_radius,
            continuation_tol: real::<S>(1e-3),
            residual_tol: real::<S>(1e-10),
            membership_tol: real::<S>(1e-8),
            solver_max_iterations: 80,
            max_linear_iterations: 50_000,
        }
    }
}

/// Floor for the pointwise certificates: roundoff slack plus one power of
/// the scheme's h^2 accuracy.
pub fn certificate_floor<S: Scalar>(h: S) -> S {
    -(real::<S>(1e-8) + h * h)
}

#[derive(Debug, Clone)]
pub struct RungCertificates<S> {
    /// min over interior of (u - q): trapping from below.
    pub trapping_lower: S,
    /// min over interior of (pure quadratic - u): trapping from above.
    pub trapping_upper: S,
    /// min over the previous rung's interior nodes of (u_new - u_prev);
    /// None on the first rung.
    pub monotonicity: Option<S>,
    /// sup |u_new - u_prev| over previous interior nodes within half the
    /// previous radius; None on the first rung.
    pub continuation_sup: Option<S>,
    /// Contact nodes where the profile is decisively positive.
    pub contact_violations: usize,
}

#[derive(Debug, Clone)]
pub struct RungSummary<S> {
    pub radius: S,
    pub iterations: usize,
    pub linear_iterations: usize,
    pub kkt_residual: S,
    pub contact_count: usize,
    pub certificates: RungCertificates<S>,
}

#[derive(Debug)]
pub struct GlobalSolution<S: Scalar> {
    /// The centered profile actually used (linear term absorbed).
    pub profile: QuadraticPoly<S>,
    pub grid: Arc<Grid<S>>,
    /// Final solution field; NaN on exterior nodes.
    pub field: Vec<S>,
    pub contact_mask: Vec<bool>,
    pub contact_count: usize,
    pub kkt_residual: S,
    pub ladder: Vec<RungSummary<S>>,
    /// True when every rung solved and the last continuation gap is within
    /// continuation_tol.
    pub converged: bool,
    pub final_continuation_sup: Option<S>,
    /// max over radial shells of shell-max(u) / (r^2 + 1): quadratic growth.
    pub growth_ratio: S,
    /// Set on the degenerate path where the profile itself is the solution
    /// (nonnegative profile, pointlike or empty contact).
    pub degenerate: bool,
    contact_tol: S,
}

impl<S: Scalar> GlobalSolution<S> {
    pub fn contact_tol(&self) -> S {
        self.contact_tol
    }

    /// Recomputes the trapping margins on the final grid from scratch:
    /// (min of u - q, min of pure quadratic - u) over interior nodes.
    pub fn check_final_trapping(&self) -> (S, S) {
        let q_field = self.grid.sample_poly(&self.profile);
        let quad = pure_quadratic(&self.profile);
        let quad_field = self.grid.sample_poly(&quad);
        let mut lower = S::infinity();
        let mut upper = S::infinity();
        for &id in self.grid.interior_nodes() {
            let id = id as usize;
            lower = lower.min(self.field[id] - q_field[id]);
            upper = upper.min(quad_field[id] - self.field[id]);
        }
        (lower, upper)
    }

    /// Recounts contact nodes where the profile is decisively positive.
    pub fn check_final_contact(&self) -> usize {
        contact_violations(
            &self.grid,
            &self.profile,
            &self.contact_mask,
            self.contact_tol,
        )
    }
}

fn pure_quadratic<S: Scalar>(profile: &QuadraticPoly<S>) -> QuadraticPoly<S> {
    QuadraticPoly::centered(
        profile.hessian().clone(),
        profile.center().to_vec(),
        S::zero(),
    )
}

fn contact_violations<S: Scalar>(
    grid: &Grid<S>,
    profile: &QuadraticPoly<S>,
    mask: &[bool],
    contact_tol: S,
) -> usize {
    let scale = profile.hessian().spectral_norm();
    let threshold = contact_tol * scale;
    let mut buf = [S::zero(); 4];
    let mut count = 0usize;
    for &id in grid.interior_nodes() {
        let id = id as usize;
        if mask[id] {
            grid.point_into(id, &mut buf);
            if profile.eval(&buf[..grid.dim()]) > threshold {
                count += 1;
            }
        }
    }
    count
}

/// The rung radii: doubling from twice the enclosing radius of the
/// profile's nonpositivity region, with the cap appended when it adds a
/// meaningful final extension.
fn ladder_radii(first: f64, cap: f64) -> Vec<f64> {
    let mut out = vec![first];
    loop {
        let next = out.last().unwrap() * 2.0;
        if next <= cap * (1.0 + 1e-12) {
            out.push(next.min(cap));
        } else {
            break;
        }
    }
    let last = *out.last().unwrap();
    if cap > last * 1.02 {
        out.push(cap);
    }
    out
}

pub fn construct_global<S: Scalar>(
    op: &Operator<S>,
    profile: &QuadraticPoly<S>,
    params: &GlobalParams<S>,
) -> Result<GlobalSolution<S>, GlobalError> {
    let verdict = profile.membership(op, params.membership_tol);
    if !verdict.member {
        let failed: Vec<String> = verdict
            .conditions
            .iter()
            .filter(|c| !c.pass)
            .map(|c| {
                format!(
                    "{} (value {:e}, tolerance {:e})",
                    c.name,
                    c.value.to_f64().unwrap_or(f64::NAN),
                    c.tolerance.to_f64().unwrap_or(f64::NAN)
                )
            })
            .collect();
        return Err(GlobalError::NotInProfileClass(failed.join("; ")));
    }
    let profile = profile.absorb_linear()?;
    let ctol = default_contact_tol(params.h);
    let a = profile.constant();

    if a > -real::<S>(1e-14) {
        return degenerate_construction(op, &profile, params, ctol);
    }

    let enclosing = profile.enclosing_radius_from_origin()?;
    let first = (real::<S>(2.0) * enclosing).to_f64().unwrap_or(f64::NAN);
    let cap = params.max_radius.to_f64().unwrap_or(f64::NAN);
    if cap < first {
        return Err(GlobalError::CapTooSmall { cap, needed: first });
    }
    let radii = ladder_radii(first, cap);

    let quad = pure_quadratic(&profile);
    let floor = certificate_floor(params.h);
    let h2 = params.h * params.h;

    let mut ladder: Vec<RungSummary<S>> = Vec::with_capacity(radii.len());
    let mut prev: Option<(Arc<Grid<S>>, Vec<S>)> = None;
    let mut final_state: Option<(Arc<Grid<S>>, crate::solver::SolveResult<S>)> = None;
    let mut final_continuation: Option<S> = None;

    for &radius in &radii {
        let r = real::<S>(radius);
        let grid = Arc::new(Grid::new(profile.dim(), r, params.h)?);
        let boundary = grid.sample_poly(&profile);
        let initial = match &prev {
            Some((prev_grid, prev_field)) => Some(extend_field(
                prev_grid,
                prev_field,
                &grid,
                &boundary,
            )),
            None => None,
        };
        let mut solve_params = SolveParams::new(params.residual_tol, params.h);
        solve_params.contact_tol = ctol;
        solve_params.max_iterations = params.solver_max_iterations;
        solve_params.max_linear_iterations = params.max_linear_iterations;
        solve_params.initial = initial;
        let instance = ObstacleInstance {
            grid: grid.clone(),
            operator: op.clone(),
            boundary,
        };
        let result = solve_obstacle(&instance, &solve_params).map_err(|source| {
            GlobalError::Solve {
                radius,
                source,
            }
        })?;

        // certificates for this rung
        let q_field = grid.sample_poly(&profile);
        let quad_field = grid.sample_poly(&quad);
        let mut trapping_lower = S::infinity();
        let mut trapping_upper = S::infinity();
        for &id in grid.interior_nodes() {
            let id = id as usize;
            trapping_lower = trapping_lower.min(result.field[id] - q_field[id]);
            trapping_upper = trapping_upper.min(quad_field[id] - result.field[id]);
        }
        let (monotonicity, continuation_sup) = match &prev {
            Some((prev_grid, prev_field)) => {
                compare_on_shared(prev_grid, prev_field, &grid, &result.field)
            }
            None => (None, None),
        };
        let violations = contact_violations(&grid, &profile, &result.contact_mask, ctol);

        let cert = RungCertificates {
            trapping_lower,
            trapping_upper,
            monotonicity,
            continuation_sup,
            contact_violations: violations,
        };
        for (name, value) in [
            ("trapping-lower", Some(trapping_lower)),
            ("trapping-upper", Some(trapping_upper)),
            ("monotonicity", monotonicity),
        ] {
            if let Some(v) = value {
                if v < floor {
                    return Err(GlobalError::CertificateViolation {
                        rung_radius: radius,
                        name,
                        value: v.to_f64().unwrap_or(f64::NAN),
                        floor: floor.to_f64().unwrap_or(f64::NAN),
                        implied_c: ((-v - real::<S>(1e-8)) / h2).to_f64().unwrap_or(f64::NAN),
                    });
                }
            }
        }
        if violations > 0 {
            return Err(GlobalError::CertificateViolation {
                rung_radius: radius,
                name: "contact-inclusion",
                value: violations as f64,
                floor: 0.0,
                implied_c: f64::NAN,
            });
        }

        ladder.push(RungSummary {
            radius: r,
            iterations: result.iterations,
            linear_iterations: result.linear_iterations,
            kkt_residual: result.kkt_residual,
            contact_count: result.contact_count,
            certificates: cert,
        });
        final_continuation = continuation_sup;
        prev = Some((grid.clone(), result.field.clone()));
        final_state = Some((grid, result));
    }

    let (grid, result) = final_state.expect("ladder has at least one rung");
    if result.contact_count == 0 {
        return Err(GlobalError::EmptyContact {
            radius: grid.radius().to_f64().unwrap_or(f64::NAN),
        });
    }
    let converged = match final_continuation {
        Some(gap) => gap <= params.continuation_tol,
        None => false,
    };
    let growth_ratio = growth_ratio(&grid, &result.field, params.h);
    Ok(GlobalSolution {
        profile,
        field: result.field,
        contact_mask: result.contact_mask,
        contact_count: result.contact_count,
        kkt_residual: result.kkt_residual,
        ladder,
        converged,
        final_continuation_sup: final_continuation,
        growth_ratio,
        degenerate: false,
        contact_tol: ctol,
        grid,
    })
}

/// Nonnegative profile: the obstacle never binds beyond the profile's own
/// zero set, and the sampled profile solves the discrete problem exactly.
fn degenerate_construction<S: Scalar>(
    op: &Operator<S>,
    profile: &QuadraticPoly<S>,
    params: &GlobalParams<S>,
    ctol: S,
) -> Result<GlobalSolution<S>, GlobalError> {
    let enclosing = profile.enclosing_radius_from_origin()?;
    let h = params.h;
    let radius = params
        .max_radius
        .max(real::<S>(2.0) * enclosing + real::<S>(4.0) * h)
        .max(real::<S>(8.0) * h);
    let grid = Arc::new(Grid::new(profile.dim(), radius, h)?);
    let field_all = grid.sample_poly(profile);
    let mut field = field_all;
    let mut contact_mask = vec![false; grid.node_count()];
    let mut contact_count = 0usize;
    for id in 0..grid.node_count() {
        match grid.class(id) {
            NodeClass::Exterior => field[id] = S::nan(),
            NodeClass::Interior => {
                if field[id] <= ctol {
                    contact_mask[id] = true;
                    contact_count += 1;
                }
            }
            NodeClass::Layer => {
                if field[id] <= ctol {
                    contact_mask[id] = true;
                }
            }
        }
    }
    let kkt = crate::solver::kkt_residual(&grid, op, &field);
    let growth_ratio = growth_ratio(&grid, &field, h);
    Ok(GlobalSolution {
        profile: profile.clone(),
        field,
        contact_mask,
        contact_count,
        kkt_residual: kkt,
        ladder: Vec::new(),
        converged: true,
        final_continuation_sup: None,
        growth_ratio,
        degenerate: true,
        contact_tol: ctol,
        grid,
    })
}

/// Warm start on a larger grid: copy values at shared lattice nodes, fall
/// back to the positive part of the boundary field elsewhere.
fn extend_field<S: Scalar>(
    prev_grid: &Grid<S>,
    prev_field: &[S],
    grid: &Grid<S>,
    boundary: &[S],
) -> Vec<S> {
    let mut out: Vec<S> = boundary.iter().map(|&v| v.max(S::zero())).collect();
    let n_prev = prev_grid.half_extent();
    let mut multi = [0i64; 4];
    for id in 0..grid.node_count() {
        grid.decode_into(id, &mut multi);
        if multi[..grid.dim()].iter().all(|&i| i.abs() <= n_prev) {
            let pid = prev_grid.index(&multi[..grid.dim()]);
            if prev_grid.class(pid) != NodeClass::Exterior {
                out[id] = prev_field[pid];
            }
        }
    }
    out
}

/// (monotonicity min, continuation sup) across rungs on shared nodes.
fn compare_on_shared<S: Scalar>(
    prev_grid: &Grid<S>,
    prev_field: &[S],
    grid: &Grid<S>,
    field: &[S],
) -> (Option<S>, Option<S>) {
    let half_prev = prev_grid.radius() * real::<S>(0.5);
    let mut mono = S::infinity();
    let mut cont = S::zero();
    let mut cont_any = false;
    let mut multi = [0i64; 4];
    for &pid in prev_grid.interior_nodes() {
        let pid = pid as usize;
        prev_grid.decode_into(pid, &mut multi);
        let id = grid.index(&multi[..grid.dim()]);
        debug_assert_ne!(grid.class(id), NodeClass::Exterior);
        let diff = field[id] - prev_field[pid];
        mono = mono.min(diff);
        if prev_grid.radius_of(pid) <= half_prev {
            cont = cont.max(diff.abs());
            cont_any = true;
        }
    }
    (
        Some(mono),
        if cont_any { Some(cont) } else { None },
    )
}

fn growth_ratio<S: Scalar>(grid: &Grid<S>, field: &[S], h: S) -> S {
    let stats = grid.shell_stats(field, h);
    let mut worst = S::zero();
    for s in &stats {
        let ratio = s.max / (s.radius_mid * s.radius_mid + S::one());
        worst = worst.max(ratio);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sym::SymMatrix;
    use crate::verify::RadialSolution;

    fn radial_profile() -> QuadraticPoly<f64> {
        QuadraticPoly::isotropic(3, 1.0 / 3.0, -0.5)
    }

    #[test]
    fn ladder_radii_double_and_append_the_cap() {
        let r = ladder_radii(3.464, 8.0);
        assert_eq!(r.len(), 3);
        assert!((r[0] - 3.464).abs() < 1e-12);
        assert!((r[1] - 6.928).abs() < 1e-12);
        assert!((r[2] - 8.0).abs() < 1e-12);
        // a cap just above the last double is not appended
        let r = ladder_radii(3.0, 6.05);
        assert_eq!(r.len(), 2);
        assert!((r[1] - 6.0).abs() < 1e-12);
        // exact power of two: no stub rung
        let r = ladder_radii(3.464, 2.0 * 3.464);
        assert_eq!(r.len(), 2);
    }

    #[test]
    fn constructs_the_radial_solution_with_certificates() {
        let op = Operator::trace(3);
        let params = GlobalParams::new(0.25, 6.928);
        let mut params = params;
        params.continuation_tol = 2e-2;
        let sol = construct_global(&op, &radial_profile(), &params).unwrap();
        assert!(sol.converged, "continuation gap {:?}", sol.final_continuation_sup);
        assert_eq!(sol.ladder.len(), 2);
        assert!(sol.contact_count > 0);
        let floor = certificate_floor(0.25);
        for rung in &sol.ladder {
            assert!(rung.certificates.trapping_lower >= floor);
            assert!(rung.certificates.trapping_upper >= floor);
            assert_eq!(rung.certificates.contact_violations, 0);
            if let Some(m) = rung.certificates.monotonicity {
                assert!(m >= floor);
            }
        }
        // final field tracks the ball oracle matched to the final radius
        let oracle = RadialSolution::matched_to_ball(3, 6.928, -0.5).unwrap();
        let mut worst = 0.0f64;
        for &id in sol.grid.interior_nodes() {
            let x = sol.grid.point(id as usize);
            worst = worst.max((sol.field[id as usize] - oracle.eval(&x)).abs());
        }
        assert!(worst < 1e-2, "deviation from oracle {worst:e}");
    }

    #[test]
    fn degenerate_profile_is_returned_exactly() {
        let op = Operator::trace(3);
        let q = QuadraticPoly::isotropic(3, 1.0 / 3.0, 0.0);
        let params = GlobalParams::new(0.25, 4.0);
        let sol = construct_global(&op, &q, &params).unwrap();
        assert!(sol.degenerate);
        assert!(sol.converged);
        assert!(sol.ladder.is_empty());
        assert!(sol.kkt_residual <= 1e-12);
        // field equals the profile on classified nodes
        for id in 0..sol.grid.node_count() {
            if sol.grid.class(id) != NodeClass::Exterior {
                let x = sol.grid.point(id);
                assert_eq!(sol.field[id], q.eval(&x));
            }
        }
    }

    #[test]
    fn rejects_profiles_outside_the_class() {
        let op = Operator::trace(3);
        let bad = QuadraticPoly::isotropic(3, 0.5, -0.5); // trace is 1.5
        let params = GlobalParams::new(0.25, 8.0);
        match construct_global(&op, &bad, &params) {
            Err(GlobalError::NotInProfileClass(msg)) => {
                assert!(msg.contains("operator-normalization"));
            }
            other => panic!("expected class rejection, got {other:?}"),
        }
    }

    #[test]
    fn rejects_a_cap_below_the_first_rung() {
        let op = Operator::trace(3);
        let params = GlobalParams::new(0.25, 2.0);
        match construct_global(&op, &radial_profile(), &params) {
            Err(GlobalError::CapTooSmall { needed, .. }) => {
                assert!((needed - 2.0 * 3.0f64.sqrt()).abs() < 1e-9);
            }
            other => panic!("expected cap rejection, got {other:?}"),
        }
    }

    #[test]
    fn off_center_profile_with_linear_term_is_recentered_and_solved() {
        let op = Operator::trace(3);
        // q(x) = |x - c|^2/6 - 1/2 written with an explicit linear term
        let c = [0.5, -0.25, 0.0];
        let q = QuadraticPoly::new(
            SymMatrix::scaled_identity(3, 1.0 / 3.0),
            vec![0.0; 3],
            c.iter().map(|&ci| -ci / 3.0).collect(),
            -0.5 + (c.iter().map(|&ci| ci * ci).sum::<f64>()) / 6.0,
        )
        .unwrap();
        let mut params = GlobalParams::new(0.25, 7.0);
        params.continuation_tol = 2e-2;
        let sol = construct_global(&op, &q, &params).unwrap();
        assert!(sol.converged);
        // recovered center matches c
        for k in 0..3 {
            assert!((sol.profile.center()[k] - c[k]).abs() < 1e-10);
        }
        // contact nodes cluster around c
        let mut centroid = [0.0f64; 3];
        let mut count = 0usize;
        for &id in sol.grid.interior_nodes() {
            if sol.contact_mask[id as usize] {
                let x = sol.grid.point(id as usize);
                for k in 0..3 {
                    centroid[k] += x[k];
                }
                count += 1;
            }
        }
        assert!(count > 0);
        for k in 0..3 {
            assert!((centroid[k] / count as f64 - c[k]).abs() < 0.2);
        }
    }

    #[test]
    fn recheck_methods_reproduce_the_stored_certificates() {
        let op = Operator::trace(3);
        let mut params = GlobalParams::new(0.25, 6.928);
        params.continuation_tol = 2e-2;
        let sol = construct_global(&op, &radial_profile(), &params).unwrap();
        let (lo, hi) = sol.check_final_trapping();
        let last = sol.ladder.last().unwrap();
        assert_eq!(lo, last.certificates.trapping_lower);
        assert_eq!(hi, last.certificates.trapping_upper);
        assert_eq!(sol.check_final_contact(), 0);
    }

    #[test]
    fn growth_ratio_is_quadratically_bounded() {
        let op = Operator::trace(3);
        let mut params = GlobalParams::new(0.25, 6.928);
        params.continuation_tol = 2e-2;
        let sol = construct_global(&op, &radial_profile(), &params).unwrap();
        // u <= |x|^2/6 everywhere, so the ratio stays below ~1/6 + slack
        assert!(sol.growth_ratio > 0.0);
        assert!(sol.growth_ratio < 0.4, "ratio {}", sol.growth_ratio);
    }
}
