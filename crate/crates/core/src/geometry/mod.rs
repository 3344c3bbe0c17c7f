//! Convex sets, exact and approximate projections, distances, and the
//! maximal constraint violation.
//!
//! All sets are closed and convex subsets of R^n. Each body exposes an
//! exact metric projection; `distance` and `violation_delta` are derived
//! from it.

mod qp;
mod sublevel;

pub use qp::{nnls, project_polyhedron, PolyhedronProjection};
pub use sublevel::{approx_project_sublevel, SublevelProjection};

use nalgebra::{DMatrix, DVector};

use crate::error::{BapError, Result};

/// A point of R^n. Entries are finite; dimension is fixed per instance.
pub type Point = DVector<f64>;

/// Absolute tolerance on a body's defining residual below which a point
/// counts as a member.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Default tolerance handed to iterative projectors (ellipsoid multiplier
/// solve, polyhedron active set).
pub const PROJECTION_TOL: f64 = 1e-12;

pub(crate) fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(BapError::DimensionMismatch { expected, got });
    }
    Ok(())
}

pub(crate) fn check_finite(v: &DVector<f64>, what: &str) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(BapError::InvalidBody(format!(
            "{what} has non-finite entries"
        )));
    }
    Ok(())
}

/// Halfspace {y : <a, y> <= b}.
#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace {
    normal: DVector<f64>,
    offset: f64,
}

impl Halfspace {
    pub fn new(normal: DVector<f64>, offset: f64) -> Result<Self> {
        check_finite(&normal, "halfspace normal")?;
        if !offset.is_finite() {
            return Err(BapError::InvalidBody(
                "halfspace offset is not finite".into(),
            ));
        }
        if normal.norm() == 0.0 {
            return Err(BapError::InvalidBody(
                "halfspace normal has zero norm".into(),
            ));
        }
        Ok(Self { normal, offset })
    }

    pub fn normal(&self) -> &DVector<f64> {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Signed residual <a, x> - b; nonpositive inside.
    pub fn residual(&self, x: &Point) -> f64 {
        self.normal.dot(x) - self.offset
    }
}

/// Projection onto a halfspace: x - max(0, <a,x> - b) / ||a||^2 * a.
pub fn project_halfspace(h: &Halfspace, x: &Point) -> Result<Point> {
    check_dims(h.normal.len(), x.len())?;
    let r = h.residual(x);
    if r <= 0.0 {
        return Ok(x.clone());
    }
    Ok(x - &h.normal * (r / h.normal.norm_squared()))
}

/// Polyhedron {y : Ay <= b} with at least one row.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyhedron {
    rows: DMatrix<f64>,
    rhs: DVector<f64>,
}

impl Polyhedron {
    pub fn new(rows: DMatrix<f64>, rhs: DVector<f64>) -> Result<Self> {
        if rows.nrows() == 0 {
            return Err(BapError::InvalidBody(
                "polyhedron needs at least one row".into(),
            ));
        }
        check_dims(rows.nrows(), rhs.len())?;
        for (i, row) in rows.row_iter().enumerate() {
            if row.iter().any(|x| !x.is_finite()) {
                return Err(BapError::InvalidBody(format!(
                    "row {i} has non-finite entries"
                )));
            }
            if row.norm() == 0.0 {
                return Err(BapError::InvalidBody(format!("row {i} has zero norm")));
            }
        }
        check_finite(&rhs, "polyhedron rhs")?;
        Ok(Self { rows, rhs })
    }

    pub fn from_halfspaces(halves: &[Halfspace]) -> Result<Self> {
        if halves.is_empty() {
            return Err(BapError::InvalidBody(
                "polyhedron needs at least one row".into(),
            ));
        }
        let n = halves[0].normal.len();
        let mut rows = DMatrix::zeros(halves.len(), n);
        let mut rhs = DVector::zeros(halves.len());
        for (i, h) in halves.iter().enumerate() {
            check_dims(n, h.normal.len())?;
            rows.row_mut(i).copy_from(&h.normal.transpose());
            rhs[i] = h.offset;
        }
        Self::new(rows, rhs)
    }

    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.rhs
    }

    pub fn num_rows(&self) -> usize {
        self.rows.nrows()
    }

    /// Largest row residual max_j (<a_j, x> - b_j); nonpositive inside.
    pub fn residual(&self, x: &Point) -> f64 {
        let ax = &self.rows * x;
        (ax - &self.rhs).max()
    }
}

/// Ellipsoid {y : (y - c)^T Q (y - c) <= eta^2} with Q symmetric positive
/// definite. The spectral decomposition of Q is computed once at
/// construction and reused by every projection.
#[derive(Debug, Clone)]
pub struct Ellipsoid {
    center: DVector<f64>,
    shape: DMatrix<f64>,
    radius: f64,
    eigvals: DVector<f64>,
    eigvecs: DMatrix<f64>,
}

impl PartialEq for Ellipsoid {
    fn eq(&self, other: &Self) -> bool {
        // The cached decomposition is derived data.
        self.center == other.center && self.shape == other.shape && self.radius == other.radius
    }
}

impl Ellipsoid {
    pub fn new(center: DVector<f64>, shape: DMatrix<f64>, radius: f64) -> Result<Self> {
        let n = center.len();
        check_finite(&center, "ellipsoid center")?;
        if shape.nrows() != n || shape.ncols() != n {
            return Err(BapError::InvalidBody(format!(
                "shape matrix is {}x{}, expected {n}x{n}",
                shape.nrows(),
                shape.ncols()
            )));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(BapError::InvalidBody(
                "ellipsoid radius must be positive".into(),
            ));
        }
        let scale = shape.amax();
        for i in 0..n {
            for j in 0..i {
                if (shape[(i, j)] - shape[(j, i)]).abs() > 1e-12 * scale.max(1.0) {
                    return Err(BapError::InvalidBody(
                        "shape matrix is not symmetric".into(),
                    ));
                }
            }
        }
        // Symmetrize exactly before decomposing so the cache is stable.
        let sym = (&shape + shape.transpose()) * 0.5;
        let eig = sym.clone().symmetric_eigen();
        let min_eig = eig.eigenvalues.min();
        if !(min_eig > 0.0) {
            return Err(BapError::InvalidBody(format!(
                "shape matrix is not positive definite (min eigenvalue {min_eig:e})"
            )));
        }
        Ok(Self {
            center,
            shape,
            radius,
            eigvals: eig.eigenvalues,
            eigvecs: eig.eigenvectors,
        })
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.shape
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigvals
    }

    /// Spectral norm of Q.
    pub fn shape_spectral_norm(&self) -> f64 {
        self.eigvals.max()
    }

    /// Defining residual (x - c)^T Q (x - c) - eta^2; nonpositive inside.
    pub fn residual(&self, x: &Point) -> f64 {
        let d = x - &self.center;
        (&self.shape * &d).dot(&d) - self.radius * self.radius
    }

    /// Gradient of the defining residual, 2 Q (x - c).
    pub fn residual_gradient(&self, x: &Point) -> DVector<f64> {
        (&self.shape * (x - &self.center)) * 2.0
    }
}

/// Projection onto an ellipsoid via the scalar multiplier equation.
///
/// With d = x - c expressed in the eigenbasis of Q (eigenvalues l_j,
/// components w_j), the projection is c + (I + mu Q)^-1 d where mu >= 0
/// solves phi(mu) = sum l_j w_j^2 / (1 + mu l_j)^2 - eta^2 = 0. phi is
/// strictly decreasing, so a doubling bracket plus safeguarded Newton
/// converges unconditionally. Stops at |phi| <= tol * eta^2.
pub fn project_ellipsoid(e: &Ellipsoid, x: &Point, tol: f64) -> Result<Point> {
    check_dims(e.center.len(), x.len())?;
    if !(tol > 0.0) {
        return Err(BapError::InvalidArgument(
            "projection tolerance must be positive".into(),
        ));
    }
    let eta2 = e.radius * e.radius;
    let d = x - &e.center;
    let w = e.eigvecs.transpose() * &d;
    let phi = |mu: f64| -> f64 {
        let mut s = 0.0;
        for j in 0..w.len() {
            let t = 1.0 + mu * e.eigvals[j];
            s += e.eigvals[j] * w[j] * w[j] / (t * t);
        }
        s - eta2
    };
    let dphi = |mu: f64| -> f64 {
        let mut s = 0.0;
        for j in 0..w.len() {
            let l = e.eigvals[j];
            let t = 1.0 + mu * l;
            s -= 2.0 * l * l * w[j] * w[j] / (t * t * t);
        }
        s
    };

    let target = tol * eta2;
    if phi(0.0) <= target {
        // Member (up to the solve tolerance): the projection is x itself.
        return Ok(x.clone());
    }

    // Bracket the root, then safeguarded Newton.
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut guard = 0;
    while phi(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(BapError::InvalidBody(
                "ellipsoid multiplier bracket diverged".into(),
            ));
        }
    }
    let mut mu = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = phi(mu);
        if f.abs() <= target {
            break;
        }
        if f > 0.0 {
            lo = mu;
        } else {
            hi = mu;
        }
        let step = f / dphi(mu);
        let newton = mu - step;
        mu = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= f64::EPSILON * (1.0 + hi) {
            break;
        }
    }

    let mut y = DVector::zeros(w.len());
    for j in 0..w.len() {
        y[j] = w[j] / (1.0 + mu * e.eigvals[j]);
    }
    Ok(&e.center + &e.eigvecs * y)
}

/// Euclidean ball {y : ||y - c|| <= r}.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    center: DVector<f64>,
    radius: f64,
}

impl Ball {
    pub fn new(center: DVector<f64>, radius: f64) -> Result<Self> {
        check_finite(&center, "ball center")?;
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(BapError::InvalidBody("ball radius must be positive".into()));
        }
        Ok(Self { center, radius })
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Residual ||x - c||^2 - r^2; nonpositive inside.
    pub fn residual(&self, x: &Point) -> f64 {
        (x - &self.center).norm_squared() - self.radius * self.radius
    }
}

pub fn project_ball(b: &Ball, x: &Point) -> Result<Point> {
    check_dims(b.center.len(), x.len())?;
    let d = x - &b.center;
    let dist = d.norm();
    if dist <= b.radius {
        return Ok(x.clone());
    }
    Ok(&b.center + d * (b.radius / dist))
}

/// Cartesian product of bodies acting blockwise on R^{n_1 + ... + n_m}.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductBody {
    blocks: Vec<ConvexBody>,
}

impl ProductBody {
    pub fn new(blocks: Vec<ConvexBody>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(BapError::InvalidBody(
                "product body needs at least one block".into(),
            ));
        }
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &[ConvexBody] {
        &self.blocks
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.dim()).sum()
    }
}

/// Diagonal subspace {(u, ..., u)} of R^{nm}: `copies` blocks of dimension
/// `block_dim`. Projection replaces every block by the block average.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalSubspace {
    copies: usize,
    block_dim: usize,
}

impl DiagonalSubspace {
    pub fn new(copies: usize, block_dim: usize) -> Result<Self> {
        if copies == 0 || block_dim == 0 {
            return Err(BapError::InvalidBody(
                "diagonal subspace needs positive dimensions".into(),
            ));
        }
        Ok(Self { copies, block_dim })
    }

    pub fn copies(&self) -> usize {
        self.copies
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    pub fn dim(&self) -> usize {
        self.copies * self.block_dim
    }

    /// Average of the blocks of z.
    pub fn block_average(&self, z: &Point) -> Result<Point> {
        check_dims(self.dim(), z.len())?;
        let n = self.block_dim;
        let mut avg = DVector::zeros(n);
        for i in 0..self.copies {
            avg += z.rows(i * n, n);
        }
        avg /= self.copies as f64;
        Ok(avg)
    }

    /// Broadcast a block to the full diagonal embedding (u, ..., u).
    pub fn broadcast(&self, u: &Point) -> Result<Point> {
        check_dims(self.block_dim, u.len())?;
        let mut z = DVector::zeros(self.dim());
        for i in 0..self.copies {
            z.rows_mut(i * self.block_dim, self.block_dim).copy_from(u);
        }
        Ok(z)
    }
}

/// A closed convex set with an exact metric projection.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvexBody {
    Halfspace(Halfspace),
    Polyhedron(Polyhedron),
    Ellipsoid(Ellipsoid),
    Ball(Ball),
    Product(ProductBody),
    Diagonal(DiagonalSubspace),
}

impl From<Halfspace> for ConvexBody {
    fn from(h: Halfspace) -> Self {
        ConvexBody::Halfspace(h)
    }
}

impl From<Polyhedron> for ConvexBody {
    fn from(p: Polyhedron) -> Self {
        ConvexBody::Polyhedron(p)
    }
}

impl From<Ellipsoid> for ConvexBody {
    fn from(e: Ellipsoid) -> Self {
        ConvexBody::Ellipsoid(e)
    }
}

impl From<Ball> for ConvexBody {
    fn from(b: Ball) -> Self {
        ConvexBody::Ball(b)
    }
}

impl ConvexBody {
    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        match self {
            ConvexBody::Halfspace(h) => h.normal.len(),
            ConvexBody::Polyhedron(p) => p.rows.ncols(),
            ConvexBody::Ellipsoid(e) => e.center.len(),
            ConvexBody::Ball(b) => b.center.len(),
            ConvexBody::Product(p) => p.dim(),
            ConvexBody::Diagonal(d) => d.dim(),
        }
    }

    /// Exact metric projection with default tolerances.
    pub fn project(&self, x: &Point) -> Result<Point> {
        match self {
            ConvexBody::Halfspace(h) => project_halfspace(h, x),
            ConvexBody::Polyhedron(p) => Ok(project_polyhedron(p, x, PROJECTION_TOL)?.point),
            ConvexBody::Ellipsoid(e) => project_ellipsoid(e, x, PROJECTION_TOL),
            ConvexBody::Ball(b) => project_ball(b, x),
            ConvexBody::Product(p) => {
                check_dims(p.dim(), x.len())?;
                let mut out = DVector::zeros(x.len());
                let mut offset = 0;
                for block in &p.blocks {
                    let nb = block.dim();
                    let piece = block.project(&x.rows(offset, nb).into_owned())?;
                    out.rows_mut(offset, nb).copy_from(&piece);
                    offset += nb;
                }
                Ok(out)
            }
            ConvexBody::Diagonal(d) => {
                let avg = d.block_average(x)?;
                d.broadcast(&avg)
            }
        }
    }

    /// True when x is a member within `MEMBERSHIP_TOL` on the defining
    /// residual (projection distance for sets without an algebraic one).
    pub fn contains(&self, x: &Point) -> Result<bool> {
        match self {
            ConvexBody::Halfspace(h) => Ok(h.residual(x) <= MEMBERSHIP_TOL),
            ConvexBody::Polyhedron(p) => Ok(p.residual(x) <= MEMBERSHIP_TOL),
            ConvexBody::Ellipsoid(e) => Ok(e.residual(x) <= MEMBERSHIP_TOL),
            ConvexBody::Ball(b) => Ok(b.residual(x) <= MEMBERSHIP_TOL),
            _ => Ok(distance(self, x)? <= MEMBERSHIP_TOL),
        }
    }
}

/// Distance from x to the body: ||x - P(x)||.
pub fn distance(body: &ConvexBody, x: &Point) -> Result<f64> {
    let p = body.project(x)?;
    Ok((x - p).norm())
}

/// Maximal constraint violation max_i dist(x, U_i).
pub fn violation_delta(bodies: &[ConvexBody], x: &Point) -> Result<f64> {
    if bodies.is_empty() {
        return Err(BapError::EmptyBodyList);
    }
    let mut worst = 0.0f64;
    for body in bodies {
        worst = worst.max(distance(body, x)?);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests;
