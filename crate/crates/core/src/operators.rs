//! The six projection-based operators driven by the anchored iteration,
//! plus the decrease-inequality certifier.
//!
//! Every operator T has Fix(T) equal to the intersection of the body list
//! and satisfies ||Tx - s||^2 <= ||x - s||^2 - c0 delta(x)^2 for every
//! feasible s, with a constant c0 that the kind reports. The product-space
//! operator works on R^{nm} and measures its violation against the product
//! set W = U_1 x ... x U_m, which is where its c0 = 1 inequality lives.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::circumcenter::circumcenter;
use crate::error::{BapError, Result};
use crate::geometry::project_polyhedron;
use crate::geometry::{
    approx_project_sublevel, distance, violation_delta, ConvexBody, DiagonalSubspace, Halfspace,
    Point, Polyhedron, SublevelProjection, PROJECTION_TOL,
};

/// Constraints whose separation at x is below this relative threshold are
/// omitted from outer approximations: the set imposes no usable halfspace
/// there and the normal direction is numerically meaningless.
const SEPARATION_SKIP: f64 = 1e-12;

/// How per-set projections inside Cimmino / 3PM / A3PM are evaluated.
/// Results are reduced in ascending set order either way, so the two modes
/// are bit-identical.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    #[default]
    Serial,
    Parallel,
}

impl ExecMode {
    fn map_indexed<T, F>(self, count: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync + Send,
    {
        match self {
            ExecMode::Serial => (0..count).map(f).collect(),
            ExecMode::Parallel => (0..count).into_par_iter().map(f).collect(),
        }
    }
}

/// Control sequence for the successive two-set circumcenter cycle.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum SccrmControl {
    /// Pairs (U_{k+1}, U_k) for k = 1..m-1.
    #[default]
    Consecutive,
    /// Explicit list of (left, right) zero-based indices; each step applies
    /// the two-set operator T_{U_right, U_left}.
    Custom(Vec<(usize, usize)>),
}

impl SccrmControl {
    fn pairs(&self, m: usize) -> Result<Vec<(usize, usize)>> {
        match self {
            SccrmControl::Consecutive => {
                if m < 2 {
                    return Err(BapError::InvalidArgument(
                        "the two-set circumcenter cycle needs at least two sets".into(),
                    ));
                }
                Ok((0..m - 1).map(|k| (k, k + 1)).collect())
            }
            SccrmControl::Custom(pairs) => {
                if pairs.is_empty() {
                    return Err(BapError::InvalidArgument("empty control sequence".into()));
                }
                for &(l, r) in pairs {
                    if l >= m || r >= m || l == r {
                        return Err(BapError::InvalidArgument(format!(
                            "control pair ({l}, {r}) out of range for {m} sets"
                        )));
                    }
                }
                Ok(pairs.clone())
            }
        }
    }
}

/// Operator selector.
#[derive(Debug, Clone, PartialEq)]
pub enum OperatorKind {
    /// Cyclic (alternating) projections P_m ... P_1.
    Map,
    /// Arithmetic average of the per-set projections.
    Cimmino,
    /// Exact projection onto the intersection of per-set supporting
    /// halfspaces.
    ThreePm,
    /// Like ThreePm with linearized per-set projections; the accuracy
    /// ratio is measured per call.
    A3pm,
    /// Successive two-set circumcenter updates over a full cycle.
    Sccrm(SccrmControl),
    /// Circumcentered reflections in the product space R^{nm}.
    CrmProduct,
}

impl OperatorKind {
    pub fn label(&self) -> &'static str {
        match self {
            OperatorKind::Map => "map",
            OperatorKind::Cimmino => "cimmino",
            OperatorKind::ThreePm => "3pm",
            OperatorKind::A3pm => "a3pm",
            OperatorKind::Sccrm(_) => "sccrm",
            OperatorKind::CrmProduct => "crm",
        }
    }

    /// True when the operator iterates in the product space R^{nm}.
    pub fn is_product_space(&self) -> bool {
        matches!(self, OperatorKind::CrmProduct)
    }

    /// Theoretical decrease constant. `measured_epsilon` feeds the
    /// linearized variant; the others ignore it.
    pub fn decrease_constant(&self, num_sets: usize, measured_epsilon: Option<f64>) -> f64 {
        match self {
            OperatorKind::Map | OperatorKind::Cimmino | OperatorKind::Sccrm(_) => {
                1.0 / num_sets as f64
            }
            OperatorKind::ThreePm | OperatorKind::CrmProduct => 1.0,
            OperatorKind::A3pm => {
                let eps = measured_epsilon.unwrap_or(0.0);
                (1.0 - eps).powi(4)
            }
        }
    }

    /// Apply the operator. For `CrmProduct` the input (and output) live in
    /// R^{nm}; all other kinds work in R^n.
    pub fn apply(
        &self,
        bodies: &[ConvexBody],
        x: &Point,
        exec: ExecMode,
    ) -> Result<OperatorEvaluation> {
        match self {
            OperatorKind::Map => apply_map(bodies, x),
            OperatorKind::Cimmino => apply_cimmino(bodies, x, exec),
            OperatorKind::ThreePm => apply_3pm(bodies, x, PROJECTION_TOL, exec),
            OperatorKind::A3pm => apply_a3pm(bodies, x, PROJECTION_TOL, exec),
            OperatorKind::Sccrm(control) => apply_sccrm_cycle(bodies, x, control),
            OperatorKind::CrmProduct => apply_crm_product(bodies, x, exec),
        }
    }
}

/// One operator application with its instrumentation.
#[derive(Debug, Clone)]
pub struct OperatorEvaluation {
    pub output: Point,
    /// Per-set projections where the operator computes them (input-point
    /// projections for Cimmino/3PM/A3PM/CRM, sweep intermediates for MAP).
    pub per_set_projections: Option<Vec<Point>>,
    /// Largest measured accuracy ratio of the linearized projections
    /// (A3PM only).
    pub measured_epsilon: Option<f64>,
    /// Set when a circumcenter call was rank-deficient.
    pub degenerate_circumcenter: bool,
}

impl OperatorEvaluation {
    fn plain(output: Point) -> Self {
        OperatorEvaluation {
            output,
            per_set_projections: None,
            measured_epsilon: None,
            degenerate_circumcenter: false,
        }
    }
}

fn require_nonempty(bodies: &[ConvexBody]) -> Result<()> {
    if bodies.is_empty() {
        return Err(BapError::EmptyBodyList);
    }
    Ok(())
}

/// Cyclic projections: P_{U_m} ... P_{U_1} x, intermediates recorded.
pub fn apply_map(bodies: &[ConvexBody], x: &Point) -> Result<OperatorEvaluation> {
    require_nonempty(bodies)?;
    let mut intermediates = Vec::with_capacity(bodies.len());
    let mut current = x.clone();
    for body in bodies {
        current = body.project(&current)?;
        intermediates.push(current.clone());
    }
    Ok(OperatorEvaluation {
        output: current,
        per_set_projections: Some(intermediates),
        measured_epsilon: None,
        degenerate_circumcenter: false,
    })
}

/// Average of the per-set projections, reduced in ascending set order.
pub fn apply_cimmino(
    bodies: &[ConvexBody],
    x: &Point,
    exec: ExecMode,
) -> Result<OperatorEvaluation> {
    require_nonempty(bodies)?;
    let projections = exec.map_indexed(bodies.len(), |i| bodies[i].project(x))?;
    let mut sum = DVector::zeros(x.len());
    for p in &projections {
        sum += p;
    }
    Ok(OperatorEvaluation {
        output: sum / bodies.len() as f64,
        per_set_projections: Some(projections),
        measured_epsilon: None,
        degenerate_circumcenter: false,
    })
}

fn supporting_halfspace(x: &Point, projection: &Point) -> Option<Halfspace> {
    let normal = x - projection;
    if normal.norm() <= SEPARATION_SKIP * (1.0 + x.norm()) {
        return None;
    }
    Some(Halfspace::new(normal.clone(), normal.dot(projection)).expect("nonzero normal"))
}

fn project_onto_outer(x: &Point, halves: Vec<Halfspace>, tol: f64) -> Result<Point> {
    if halves.is_empty() {
        return Ok(x.clone());
    }
    let outer = Polyhedron::from_halfspaces(&halves)?;
    Ok(project_polyhedron(&outer, x, tol)?.point)
}

/// Exact projection onto the outer approximation built from per-set
/// supporting halfspaces. Sets containing x contribute no halfspace.
pub fn apply_3pm(
    bodies: &[ConvexBody],
    x: &Point,
    tol: f64,
    exec: ExecMode,
) -> Result<OperatorEvaluation> {
    require_nonempty(bodies)?;
    let projections = exec.map_indexed(bodies.len(), |i| bodies[i].project(x))?;
    let halves: Vec<Halfspace> = projections
        .iter()
        .filter_map(|p| supporting_halfspace(x, p))
        .collect();
    let output = project_onto_outer(x, halves, tol)?;
    Ok(OperatorEvaluation {
        output,
        per_set_projections: Some(projections),
        measured_epsilon: None,
        degenerate_circumcenter: false,
    })
}

/// Variant of `apply_3pm` using linearized per-set projections. The outer
/// projection itself stays exact; the inexactness lives purely in the
/// halfspace construction, and the largest measured per-set ratio is
/// reported.
pub fn apply_a3pm(
    bodies: &[ConvexBody],
    x: &Point,
    tol: f64,
    exec: ExecMode,
) -> Result<OperatorEvaluation> {
    require_nonempty(bodies)?;
    let parts = exec.map_indexed(bodies.len(), |i| approx_project_sublevel(&bodies[i], x))?;
    let mut halves = Vec::new();
    let mut points = Vec::with_capacity(parts.len());
    let mut eps_max = 0.0f64;
    for part in parts {
        match part {
            SublevelProjection::Inside => points.push(x.clone()),
            SublevelProjection::Outside {
                point,
                halfspace,
                epsilon_hat,
            } => {
                if (x - &point).norm() > SEPARATION_SKIP * (1.0 + x.norm()) {
                    halves.push(halfspace);
                    eps_max = eps_max.max(epsilon_hat);
                }
                points.push(point);
            }
        }
    }
    let output = project_onto_outer(x, halves, tol)?;
    Ok(OperatorEvaluation {
        output,
        per_set_projections: Some(points),
        measured_epsilon: Some(eps_max),
        degenerate_circumcenter: false,
    })
}

/// One two-set circumcenter update T_{A,B}: move to w = Z~(Z(x)) with
/// Z = P_A P_B and Z~ the projection average, then take the circumcenter
/// of (w, R_A w, R_B w).
fn two_set_step(a: &ConvexBody, b: &ConvexBody, x: &Point) -> Result<(Point, bool)> {
    let u = a.project(&b.project(x)?)?;
    let w = (a.project(&u)? + b.project(&u)?) * 0.5;
    let ra = a.project(&w)? * 2.0 - &w;
    let rb = b.project(&w)? * 2.0 - &w;
    let circ = circumcenter(&[w.clone(), ra, rb])?;
    let degenerate = circ.is_degenerate(3);
    Ok((circ.center, degenerate))
}

/// Full cycle of two-set circumcenter updates under the given control
/// sequence.
pub fn apply_sccrm_cycle(
    bodies: &[ConvexBody],
    x: &Point,
    control: &SccrmControl,
) -> Result<OperatorEvaluation> {
    require_nonempty(bodies)?;
    let pairs = control.pairs(bodies.len())?;
    let mut current = x.clone();
    let mut degenerate = false;
    for (left, right) in pairs {
        let (next, dg) = two_set_step(&bodies[right], &bodies[left], &current)?;
        current = next;
        degenerate |= dg;
    }
    let mut eval = OperatorEvaluation::plain(current);
    eval.degenerate_circumcenter = degenerate;
    Ok(eval)
}

/// Blockwise projection onto W = U_1 x ... x U_m.
fn project_product(
    bodies: &[ConvexBody],
    z: &Point,
    exec: ExecMode,
) -> Result<(Point, Vec<Point>)> {
    let n = bodies[0].dim();
    let blocks = exec.map_indexed(bodies.len(), |i| {
        bodies[i].project(&z.rows(i * n, n).into_owned())
    })?;
    let mut out = DVector::zeros(z.len());
    for (i, b) in blocks.iter().enumerate() {
        out.rows_mut(i * n, n).copy_from(b);
    }
    Ok((out, blocks))
}

/// Circumcentered reflections for the product-space pair (W, D):
/// circ(z, R_W z, R_D R_W z). The input must lie in the diagonal D and the
/// output is verified to stay there.
pub fn apply_crm_product(
    bodies: &[ConvexBody],
    z: &Point,
    exec: ExecMode,
) -> Result<OperatorEvaluation> {
    require_nonempty(bodies)?;
    let m = bodies.len();
    let n = bodies[0].dim();
    for b in bodies {
        if b.dim() != n {
            return Err(BapError::DimensionMismatch {
                expected: n,
                got: b.dim(),
            });
        }
    }
    if z.len() != n * m {
        return Err(BapError::DimensionMismatch {
            expected: n * m,
            got: z.len(),
        });
    }
    let diag = DiagonalSubspace::new(m, n)?;
    let deviation = (z - diag.broadcast(&diag.block_average(z)?)?).norm();
    if deviation > 1e-9 * (1.0 + z.norm()) {
        return Err(BapError::NonDiagonalInput { deviation });
    }

    let (pw, blocks) = project_product(bodies, z, exec)?;
    let rw = &pw * 2.0 - z;
    let pd_rw = diag.broadcast(&diag.block_average(&rw)?)?;
    let rd_rw = &pd_rw * 2.0 - &rw;
    let circ = circumcenter(&[z.clone(), rw, rd_rw])?;
    let degenerate = circ.is_degenerate(3);
    let center = circ.center;
    let out_dev = (&center - diag.broadcast(&diag.block_average(&center)?)?).norm();
    if out_dev > 1e-8 * (1.0 + center.norm()) {
        return Err(BapError::NonDiagonalInput { deviation: out_dev });
    }
    Ok(OperatorEvaluation {
        output: center,
        per_set_projections: Some(blocks),
        measured_epsilon: None,
        degenerate_circumcenter: degenerate,
    })
}

/// Violation of the product-space pair (W, D) at a diagonal point whose
/// block is `x`: dist(z, W)^2 = sum_i dist(x, U_i)^2.
fn product_violation_sq(bodies: &[ConvexBody], x: &Point) -> Result<f64> {
    let mut sum = 0.0;
    for body in bodies {
        let d = distance(body, x)?;
        sum += d * d;
    }
    Ok(sum)
}

/// Decrease-inequality margin at (x, s):
/// ||x - s||^2 - ||Tx - s||^2 - c0 delta(x)^2, nonnegative when the
/// operator's decrease property holds there. `s` must be feasible within
/// `tol`. The product-space kind is checked in R^{nm} against its own
/// violation measure.
pub fn check_decrease(
    kind: &OperatorKind,
    bodies: &[ConvexBody],
    x: &Point,
    s: &Point,
    tol: f64,
    exec: ExecMode,
) -> Result<f64> {
    require_nonempty(bodies)?;
    let violation = violation_delta(bodies, s)?;
    if violation > tol {
        return Err(BapError::InfeasiblePoint { violation, tol });
    }

    if kind.is_product_space() {
        let m = bodies.len();
        let n = bodies[0].dim();
        let diag = DiagonalSubspace::new(m, n)?;
        let z = diag.broadcast(x)?;
        let s_bar = diag.broadcast(s)?;
        let eval = apply_crm_product(bodies, &z, exec)?;
        let delta_sq = product_violation_sq(bodies, x)?;
        let c0 = kind.decrease_constant(m, None);
        return Ok((&z - &s_bar).norm_squared()
            - (&eval.output - &s_bar).norm_squared()
            - c0 * delta_sq);
    }

    let eval = kind.apply(bodies, x, exec)?;
    let delta = violation_delta(bodies, x)?;
    let c0 = kind.decrease_constant(bodies.len(), eval.measured_epsilon);
    Ok((x - s).norm_squared() - (&eval.output - s).norm_squared() - c0 * delta * delta)
}
