//! Linearized (approximate) projection onto a sublevel set {y : g(y) <= 0}.
//!
//! For a convex residual g with subgradient v at an infeasible x, the
//! point p = x - g(x)/||v||^2 v lies in the separating halfspace
//! {y : <x - p, y - p> <= 0}, which contains the body. The halfspace is
//! exact for affine residuals and an outer approximation otherwise.

use super::{check_dims, distance, ConvexBody, Halfspace, Point};
use crate::error::{BapError, Result};

/// Outcome of a linearized projection.
#[derive(Debug, Clone)]
pub enum SublevelProjection {
    /// g(x) <= 0: the point is already a member and projects to itself.
    Inside,
    /// Linearized step with its separating halfspace and the measured
    /// accuracy ratio dist(p, body) / dist(x, body).
    Outside {
        point: Point,
        halfspace: Halfspace,
        epsilon_hat: f64,
    },
}

fn residual_and_gradient(body: &ConvexBody, x: &Point) -> Result<(f64, Point)> {
    match body {
        ConvexBody::Halfspace(h) => Ok((h.residual(x), h.normal().clone())),
        ConvexBody::Polyhedron(p) => {
            let ax = p.rows() * x;
            let resid = ax - p.rhs();
            let mut best = 0usize;
            for j in 1..resid.len() {
                if resid[j] > resid[best] {
                    best = j;
                }
            }
            Ok((resid[best], p.rows().row(best).transpose().into_owned()))
        }
        ConvexBody::Ellipsoid(e) => Ok((e.residual(x), e.residual_gradient(x))),
        ConvexBody::Ball(b) => Ok((b.residual(x), (x - b.center()) * 2.0)),
        _ => Err(BapError::UnsupportedResidual),
    }
}

/// Linearized projection of `x` onto `body`.
pub fn approx_project_sublevel(body: &ConvexBody, x: &Point) -> Result<SublevelProjection> {
    check_dims(body.dim(), x.len())?;
    let (g, grad) = residual_and_gradient(body, x)?;
    if g <= 0.0 {
        return Ok(SublevelProjection::Inside);
    }
    let grad_sq = grad.norm_squared();
    if grad_sq == 0.0 {
        return Err(BapError::DegenerateSubgradient);
    }
    let p = x - &grad * (g / grad_sq);
    let normal = x - &p;
    if normal.norm() == 0.0 {
        // The step underflowed: x is a member to machine precision.
        return Ok(SublevelProjection::Inside);
    }
    let halfspace = Halfspace::new(normal.clone(), normal.dot(&p))?;
    let dist_x = distance(body, x)?;
    let epsilon_hat = if dist_x > 0.0 {
        distance(body, &p)? / dist_x
    } else {
        0.0
    };
    Ok(SublevelProjection::Outside {
        point: p,
        halfspace,
        epsilon_hat,
    })
}
