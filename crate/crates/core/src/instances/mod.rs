//! Seeded instance generation, the built-in reference oracle, and
//! instance (de)serialization.
//!
//! Instances are reproducible bit-exactly from their 64-bit seed: the
//! generator draws from ChaCha8, a counter-based stream cipher RNG whose
//! output is platform-independent, in a fixed documented order.

mod kkt;
mod schema;

pub use schema::{
    instance_from_json, instance_to_json, load_instance, save_instance, SCHEMA_VERSION,
};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::drivers::{dykstra_solve, halpern_solve, StepSchedule, StopRule};
use crate::error::{BapError, Result};
use crate::geometry::{nnls, violation_delta, ConvexBody, Ellipsoid, Point, Polyhedron};
use crate::operators::{ExecMode, OperatorKind};

/// Instance family tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Ellipsoid,
    Polyhedron,
    Custom,
}

impl Family {
    pub fn label(&self) -> &'static str {
        match self {
            Family::Ellipsoid => "ellipsoid",
            Family::Polyhedron => "polyhedron",
            Family::Custom => "custom",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "ellipsoid" => Ok(Family::Ellipsoid),
            "polyhedron" => Ok(Family::Polyhedron),
            "custom" => Ok(Family::Custom),
            other => Err(BapError::InvalidArgument(format!(
                "unknown family '{other}'"
            ))),
        }
    }
}

/// Certified reference solution s* ~ P_S(anchor).
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub point: Point,
    pub certified_tol: f64,
}

/// A best-approximation problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub family: Family,
    pub bodies: Vec<ConvexBody>,
    pub anchor: Point,
    /// Rows per set for the polyhedral family.
    pub rows_per_set: Option<usize>,
    /// Ball radius parameter of the ellipsoid family.
    pub theta: Option<f64>,
    /// Spread parameter of the polyhedral family.
    pub alpha_spread: Option<f64>,
    pub seed: u64,
    pub reference: Option<Reference>,
}

impl Instance {
    pub fn num_sets(&self) -> usize {
        self.bodies.len()
    }

    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    /// Stable identifier used in benchmark output.
    pub fn id(&self) -> String {
        let mut id = format!(
            "{}-m{}-n{}",
            self.family.label(),
            self.num_sets(),
            self.dim()
        );
        if let Some(k) = self.rows_per_set {
            id.push_str(&format!("-k{k}"));
        }
        if let Some(theta) = self.theta {
            id.push_str(&format!("-theta{theta}"));
        }
        id.push_str(&format!("-s{}", self.seed));
        id
    }

    /// Hand-built instance (tests, file-based workflows).
    pub fn custom(bodies: Vec<ConvexBody>, anchor: Point, seed: u64) -> Result<Self> {
        if bodies.is_empty() {
            return Err(BapError::EmptyBodyList);
        }
        let n = anchor.len();
        for b in &bodies {
            if b.dim() != n {
                return Err(BapError::DimensionMismatch {
                    expected: n,
                    got: b.dim(),
                });
            }
        }
        Ok(Instance {
            family: Family::Custom,
            bodies,
            anchor,
            rows_per_set: None,
            theta: None,
            alpha_spread: None,
            seed,
            reference: None,
        })
    }

    /// Compute and store a reference solution if absent.
    pub fn ensure_reference(&mut self, tol: f64) -> Result<()> {
        if self.reference.is_none() {
            self.reference = Some(reference_projection(self, tol)?);
        }
        Ok(())
    }
}

fn draw_vector(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(lo..hi))
}

/// Ellipsoid family: centers and factors with entries uniform in [-1, 1],
/// shapes Q_i = A_i A_i^T + lambda_i I with lambda_i uniform in (0.1, 1.1),
/// and radii eta_i = (theta + ||y_i||) sqrt(||Q_i||_2) exactly at the bound
/// that makes every ellipsoid contain the ball of radius theta. The anchor
/// is drawn uniform in [-1, 1]^n and doubled until strictly outside every
/// ellipsoid.
///
/// Draw order per set i: center (n), factor A_i (n*n row-major), lambda_i;
/// then the anchor direction.
pub fn gen_ellipsoid_instance(m: usize, n: usize, theta: f64, seed: u64) -> Result<Instance> {
    Ok(gen_ellipsoid_with_witness(m, n, theta, seed)?.0)
}

/// As `gen_ellipsoid_instance`, also returning the construction witness
/// (the origin, center of the contained theta-ball).
pub fn gen_ellipsoid_with_witness(
    m: usize,
    n: usize,
    theta: f64,
    seed: u64,
) -> Result<(Instance, Point)> {
    if m == 0 || n == 0 {
        return Err(BapError::InvalidArgument("m and n must be positive".into()));
    }
    if !(theta > 0.0) {
        return Err(BapError::InvalidArgument("theta must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bodies = Vec::with_capacity(m);
    for _ in 0..m {
        let center = draw_vector(&mut rng, n, -1.0, 1.0);
        let factor = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let lambda = rng.random_range(0.1..1.1);
        let q = &factor * factor.transpose() + DMatrix::identity(n, n) * lambda;
        let q = (&q + q.transpose()) * 0.5;
        let spectral: f64 = q.clone().symmetric_eigen().eigenvalues.max();
        let radius = (theta + center.norm()) * spectral.sqrt();
        bodies.push(ConvexBody::Ellipsoid(Ellipsoid::new(center, q, radius)?));
    }

    let mut anchor = draw_vector(&mut rng, n, -1.0, 1.0);
    let mut guard = 0;
    loop {
        let outside_all = bodies.iter().all(|b| match b {
            ConvexBody::Ellipsoid(e) => e.residual(&anchor) > 0.0,
            _ => unreachable!(),
        });
        if outside_all {
            break;
        }
        anchor *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(BapError::InvalidArgument(
                "could not place the anchor outside the ellipsoids".into(),
            ));
        }
    }

    let instance = Instance {
        family: Family::Ellipsoid,
        bodies,
        anchor,
        rows_per_set: None,
        theta: Some(theta),
        alpha_spread: None,
        seed,
        reference: None,
    };
    Ok((instance, DVector::zeros(n)))
}

/// Polyhedral family: a shared matrix A with entries uniform in [-1, 1],
/// a common feasible point x* with entries uniform in [-1, 1], and bodies
/// U_i = {x : Ax <= Ax* + alpha xi_i} with xi_i uniform in [0, 1]^k. The
/// anchor is redrawn (with growing scale) until infeasible.
///
/// Draw order: A (k*n row-major), x* (n), then xi_i (k) per set, then the
/// anchor attempts.
pub fn gen_polyhedron_instance(
    m: usize,
    n: usize,
    k: usize,
    alpha: f64,
    seed: u64,
) -> Result<Instance> {
    Ok(gen_polyhedron_with_witness(m, n, k, alpha, seed)?.0)
}

/// As `gen_polyhedron_instance`, also returning the witness x*.
pub fn gen_polyhedron_with_witness(
    m: usize,
    n: usize,
    k: usize,
    alpha: f64,
    seed: u64,
) -> Result<(Instance, Point)> {
    if m == 0 || n == 0 || k == 0 {
        return Err(BapError::InvalidArgument("m, n, k must be positive".into()));
    }
    if !(alpha > 0.0) {
        return Err(BapError::InvalidArgument("alpha must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(k, n, |_, _| rng.random_range(-1.0..1.0));
    // Degenerate all-zero rows are vanishingly unlikely but would poison
    // the polyhedron constructor; regenerating the row keeps determinism.
    let a = {
        let mut a = a;
        for i in 0..k {
            while a.row(i).norm() == 0.0 {
                for j in 0..n {
                    a[(i, j)] = rng.random_range(-1.0..1.0);
                }
            }
        }
        a
    };
    let x_star = draw_vector(&mut rng, n, -1.0, 1.0);
    let ax_star = &a * &x_star;
    let mut bodies = Vec::with_capacity(m);
    for _ in 0..m {
        let xi = draw_vector(&mut rng, k, 0.0, 1.0);
        let rhs = &ax_star + xi * alpha;
        bodies.push(ConvexBody::Polyhedron(Polyhedron::new(a.clone(), rhs)?));
    }

    let mut anchor = None;
    for attempt in 0..200u32 {
        let scale = 2.0f64.powi((attempt / 25) as i32);
        let candidate = draw_vector(&mut rng, n, -1.0, 1.0) * scale;
        let infeasible = bodies.iter().any(|b| match b {
            ConvexBody::Polyhedron(p) => p.residual(&candidate) > 1e-9,
            _ => unreachable!(),
        });
        if infeasible {
            anchor = Some(candidate);
            break;
        }
    }
    let anchor = anchor.ok_or_else(|| {
        BapError::InvalidArgument("could not place the anchor outside the intersection".into())
    })?;

    let instance = Instance {
        family: Family::Polyhedron,
        bodies,
        anchor,
        rows_per_set: Some(k),
        theta: None,
        alpha_spread: Some(alpha),
        seed,
        reference: None,
    };
    Ok((instance, x_star))
}

/// Route A: Dykstra cycles until the violation and the cycle-to-cycle
/// movement both fall below `tol`, with two safeguards. The movement is
/// measured on the full state (iterate plus correction vectors): the
/// iterate alone can freeze for several cycles during a stall while the
/// corrections keep drifting. And a geometric extrapolation of the
/// movement sequence must indicate that the remaining error is well inside
/// the cross-validation tolerance.
fn dykstra_route(instance: &Instance, tol: f64) -> Result<Point> {
    use crate::drivers::DykstraState;
    let mut state = DykstraState::new(&instance.anchor, instance.num_sets());
    let mut prev = instance.anchor.clone();
    let mut prev_corrections = state.corrections().to_vec();
    let mut prev_movement = f64::INFINITY;
    let started = std::time::Instant::now();
    for _cycle in 0..500_000u64 {
        let current = state.cycle(&instance.bodies)?.clone();
        let mut movement = (&current - &prev).norm();
        for (old, new) in prev_corrections.iter().zip(state.corrections()) {
            movement = movement.max((old - new).norm());
        }
        if movement <= tol {
            let rho = (movement / prev_movement).min(0.999);
            let projected_error = movement * rho / (1.0 - rho);
            if (movement == 0.0 || projected_error <= 3.0 * tol)
                && violation_delta(&instance.bodies, &current)? <= tol
            {
                return Ok(current);
            }
        }
        prev_movement = movement;
        prev = current;
        prev_corrections.clone_from_slice(state.corrections());
        if started.elapsed().as_secs_f64() > 120.0 {
            break;
        }
    }
    Err(BapError::OracleFailure(
        "Dykstra route did not reach the oracle tolerance".into(),
    ))
}

/// Route B: for affine instances, one exact active-set projection onto the
/// stacked system; otherwise a short anchored-3PM feasibility run followed
/// by a KKT active-set polish.
fn independent_route(instance: &Instance, tol: f64) -> Result<Point> {
    let all_affine = instance
        .bodies
        .iter()
        .all(|b| matches!(b, ConvexBody::Halfspace(_) | ConvexBody::Polyhedron(_)));
    if all_affine {
        let stacked = stack_affine(&instance.bodies)?;
        return Ok(crate::geometry::project_polyhedron(&stacked, &instance.anchor, 1e-12)?.point);
    }

    // Bootstrap: a feasibility-stopped anchored 3PM run gets near P_S.
    let mut boot = instance.clone();
    boot.reference = None;
    let stop = StopRule::new(
        None,
        Some((1e-3 * (1.0 + instance.anchor.norm())).min(1e-2)),
        Some(2_000),
        Some(std::time::Duration::from_secs(30)),
    )?;
    let (_, trace) = halpern_solve(
        &boot,
        &OperatorKind::ThreePm,
        &StepSchedule::InvK,
        &stop,
        ExecMode::Serial,
    );
    let start = if trace.final_iterate.len() == instance.dim() {
        trace.final_iterate.clone()
    } else {
        instance.anchor.clone()
    };
    let polished = kkt::kkt_project(&instance.bodies, &instance.anchor, &start)?;
    let _ = tol;
    Ok(polished)
}

/// Stack every affine body into one polyhedron.
fn stack_affine(bodies: &[ConvexBody]) -> Result<Polyhedron> {
    let n = bodies[0].dim();
    let mut rows: Vec<f64> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    let mut count = 0;
    for body in bodies {
        match body {
            ConvexBody::Halfspace(h) => {
                rows.extend(h.normal().iter());
                rhs.push(h.offset());
                count += 1;
            }
            ConvexBody::Polyhedron(p) => {
                for i in 0..p.num_rows() {
                    rows.extend(p.rows().row(i).iter());
                    rhs.push(p.rhs()[i]);
                    count += 1;
                }
            }
            _ => return Err(BapError::OracleFailure("stacking non-affine body".into())),
        }
    }
    Polyhedron::new(
        DMatrix::from_row_slice(count, n, &rows),
        DVector::from_vec(rhs),
    )
}

/// Compute a certified reference solution by two independent routes and
/// cross-validate them: (a) Dykstra run to feasibility and stagnation at
/// tol/10, (b) an exact stacked projection (affine instances) or an
/// anchored-3PM-seeded KKT polish (ellipsoid instances). The routes must
/// agree within `tol`; route (a) is returned with
/// certified_tol = max(route gap, violation of the returned point).
pub fn reference_projection(instance: &Instance, tol: f64) -> Result<Reference> {
    if !(tol > 0.0 && tol <= 1e-6) {
        return Err(BapError::InvalidArgument(
            "oracle tolerance must be in (0, 1e-6]".into(),
        ));
    }
    let inner = tol / 10.0;
    let route_a = dykstra_route(instance, inner)?;
    let route_b = independent_route(instance, tol)?;
    let gap = (&route_a - &route_b).norm();
    if gap > tol {
        return Err(BapError::OracleDisagreement { gap, tol });
    }
    let delta = violation_delta(&instance.bodies, &route_a)?;
    Ok(Reference {
        point: route_a,
        certified_tol: gap.max(delta),
    })
}

/// Optimality certificate for affine instances: the residual of fitting
/// anchor - s* into the cone of active constraint normals (active when the
/// normalized slack is at most `active_slack_tol`). Small residuals verify
/// that anchor - s* lies in the normal cone at s*.
pub fn polyhedral_kkt_residual(
    instance: &Instance,
    reference: &Point,
    active_slack_tol: f64,
) -> Result<f64> {
    let stacked = stack_affine(&instance.bodies)?;
    let rows = stacked.rows();
    let mut active_cols: Vec<usize> = Vec::new();
    for i in 0..stacked.num_rows() {
        let slack =
            (stacked.rhs()[i] - rows.row(i).transpose().dot(reference)) / rows.row(i).norm();
        if slack <= active_slack_tol {
            active_cols.push(i);
        }
    }
    let d = &instance.anchor - reference;
    if active_cols.is_empty() {
        return Ok(d.norm());
    }
    let mut c = DMatrix::zeros(instance.dim(), active_cols.len());
    for (t, &i) in active_cols.iter().enumerate() {
        c.column_mut(t).copy_from(&rows.row(i).transpose());
    }
    let (_, residual) = nnls(&c, &d, 200)?;
    Ok(residual)
}

/// Run Dykstra as a plain feasibility/solve baseline on this instance
/// (convenience wrapper used by the benchmark layer).
pub fn dykstra_baseline(
    instance: &Instance,
    stop: &StopRule,
) -> (crate::drivers::SolveReport, crate::drivers::IterationTrace) {
    dykstra_solve(instance, stop)
}
