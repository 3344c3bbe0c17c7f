//! KKT-based polishing for the reference oracle.
//!
//! The best-approximation point of an intersection of smooth sublevel
//! constraints solves s - x0 + sum_i mu_i grad g_i(s) = 0 with mu >= 0,
//! g_i(s) <= 0 and complementary slackness. A primal-dual active-set loop
//! around a damped Newton solve recovers s to near machine precision once
//! a feasibility method has produced a point close to the solution.

use nalgebra::{DMatrix, DVector};

use crate::error::{BapError, Result};
use crate::geometry::{ConvexBody, Point};

/// A differentiable constraint g(s) <= 0.
pub(crate) enum SmoothConstraint {
    /// a^T s - b <= 0.
    Linear { a: DVector<f64>, b: f64 },
    /// (s - c)^T Q (s - c) - level <= 0.
    Quadratic {
        center: DVector<f64>,
        shape: DMatrix<f64>,
        level: f64,
    },
}

impl SmoothConstraint {
    fn value(&self, s: &Point) -> f64 {
        match self {
            SmoothConstraint::Linear { a, b } => a.dot(s) - b,
            SmoothConstraint::Quadratic {
                center,
                shape,
                level,
            } => {
                let d = s - center;
                (shape * &d).dot(&d) - level
            }
        }
    }

    fn gradient(&self, s: &Point) -> DVector<f64> {
        match self {
            SmoothConstraint::Linear { a, .. } => a.clone(),
            SmoothConstraint::Quadratic { center, shape, .. } => (shape * (s - center)) * 2.0,
        }
    }

    /// Typical magnitude of the residual, used to scale tolerances.
    fn scale(&self) -> f64 {
        match self {
            SmoothConstraint::Linear { a, .. } => a.norm().max(1e-12),
            SmoothConstraint::Quadratic { level, .. } => level.max(1e-12),
        }
    }

    fn add_hessian(&self, mu: f64, into: &mut DMatrix<f64>) {
        if let SmoothConstraint::Quadratic { shape, .. } = self {
            *into += shape * (2.0 * mu);
        }
    }
}

/// Flatten bodies into smooth constraints. Product and diagonal bodies are
/// not representable here.
pub(crate) fn collect_constraints(bodies: &[ConvexBody]) -> Result<Vec<SmoothConstraint>> {
    let mut cons = Vec::new();
    for body in bodies {
        match body {
            ConvexBody::Halfspace(h) => {
                cons.push(SmoothConstraint::Linear {
                    a: h.normal().clone(),
                    b: h.offset(),
                });
            }
            ConvexBody::Polyhedron(p) => {
                for i in 0..p.num_rows() {
                    cons.push(SmoothConstraint::Linear {
                        a: p.rows().row(i).transpose().into_owned(),
                        b: p.rhs()[i],
                    });
                }
            }
            ConvexBody::Ellipsoid(e) => cons.push(SmoothConstraint::Quadratic {
                center: e.center().clone(),
                shape: e.shape().clone(),
                level: e.radius() * e.radius(),
            }),
            ConvexBody::Ball(b) => cons.push(SmoothConstraint::Quadratic {
                center: b.center().clone(),
                shape: DMatrix::identity(b.center().len(), b.center().len()),
                level: b.radius() * b.radius(),
            }),
            _ => {
                return Err(BapError::OracleFailure(
                    "product-space bodies are not supported by the KKT oracle".into(),
                ))
            }
        }
    }
    Ok(cons)
}

/// Damped Newton on the equality-constrained KKT system for a fixed
/// active set. Returns the primal point and multipliers.
fn newton_on_active(
    cons: &[SmoothConstraint],
    active: &[usize],
    anchor: &Point,
    start: &Point,
    stat_tol: f64,
) -> Result<(Point, DVector<f64>)> {
    let n = anchor.len();
    let q = active.len();
    let mut s = start.clone();

    // Multiplier warm start from the stationarity least squares.
    let mut mu = if q == 0 {
        DVector::zeros(0)
    } else {
        let mut g = DMatrix::zeros(n, q);
        for (t, &i) in active.iter().enumerate() {
            g.column_mut(t).copy_from(&cons[i].gradient(&s));
        }
        let svd = g.svd(true, true);
        let eps = 1e-12 * svd.singular_values.max().max(1.0);
        let mut m = svd
            .solve(&(anchor - &s), eps)
            .unwrap_or_else(|_| DVector::zeros(q));
        m.iter_mut().for_each(|v| *v = v.max(0.0));
        m
    };

    let eval_f = |s: &Point, mu: &DVector<f64>| -> DVector<f64> {
        let mut f = DVector::zeros(n + q);
        let mut stat = s - anchor;
        for (t, &i) in active.iter().enumerate() {
            stat += cons[i].gradient(s) * mu[t];
        }
        f.rows_mut(0, n).copy_from(&stat);
        for (t, &i) in active.iter().enumerate() {
            f[n + t] = cons[i].value(s);
        }
        f
    };

    let mut f = eval_f(&s, &mu);
    for _ in 0..120 {
        let stat_norm = f.rows(0, n).norm();
        let cons_ok = active
            .iter()
            .enumerate()
            .all(|(t, &i)| f[n + t].abs() <= stat_tol * cons[i].scale().max(1.0));
        if stat_norm <= stat_tol && cons_ok {
            return Ok((s, mu));
        }

        let mut jac = DMatrix::zeros(n + q, n + q);
        let mut hess = DMatrix::identity(n, n);
        for (t, &i) in active.iter().enumerate() {
            cons[i].add_hessian(mu[t], &mut hess);
            let grad = cons[i].gradient(&s);
            jac.view_mut((0, n + t), (n, 1)).copy_from(&grad);
            jac.view_mut((n + t, 0), (1, n))
                .copy_from(&grad.transpose());
        }
        jac.view_mut((0, 0), (n, n)).copy_from(&hess);

        let rhs = -&f;
        let step = match jac.clone().lu().solve(&rhs) {
            Some(d) => d,
            None => {
                let svd = jac.svd(true, true);
                let eps = 1e-13 * svd.singular_values.max().max(1.0);
                svd.solve(&rhs, eps)
                    .map_err(|e| BapError::OracleFailure(format!("singular KKT system: {e}")))?
            }
        };

        // Backtracking on ||F||.
        let f_norm = f.norm();
        let mut t = 1.0f64;
        let mut improved = false;
        for _ in 0..30 {
            let s_try = &s + step.rows(0, n) * t;
            let mu_try = &mu + step.rows(n, q) * t;
            let f_try = eval_f(&s_try, &mu_try);
            if f_try.norm() < f_norm * (1.0 - 1e-4 * t) {
                s = s_try;
                mu = mu_try;
                f = f_try;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            return Err(BapError::OracleFailure("KKT Newton stalled".into()));
        }
    }
    Err(BapError::OracleFailure(
        "KKT Newton did not converge".into(),
    ))
}

/// Polish a near-solution of the best-approximation problem to high
/// accuracy via a primal-dual active-set loop.
pub(crate) fn kkt_project(bodies: &[ConvexBody], anchor: &Point, start: &Point) -> Result<Point> {
    let cons = collect_constraints(bodies)?;
    let n = anchor.len();
    let stat_tol = 1e-12 * (1.0 + anchor.norm());
    let mu_tol = 1e-9 * (1.0 + anchor.norm());

    // Feasible anchors project to themselves.
    if cons.iter().all(|c| c.value(anchor) <= 0.0) {
        return Ok(anchor.clone());
    }

    let mut active: Vec<usize> = (0..cons.len())
        .filter(|&i| cons[i].value(start) >= -1e-2 * cons[i].scale().max(1.0))
        .collect();
    let mut s = start.clone();

    for _ in 0..80 {
        if active.len() > 2 * n + 8 {
            return Err(BapError::OracleFailure(
                "active set grew unreasonably".into(),
            ));
        }
        let (s_new, mu) = newton_on_active(&cons, &active, anchor, &s, stat_tol)?;
        s = s_new;

        // Drop the most negative multiplier, if any.
        let mut drop = None;
        let mut worst = -mu_tol;
        for (t, &m) in mu.iter().enumerate() {
            if m < worst {
                worst = m;
                drop = Some(t);
            }
        }
        if let Some(t) = drop {
            active.remove(t);
            continue;
        }
        // Add the most violated inactive constraint, if any.
        let mut add = None;
        let mut worst = 0.0f64;
        for (i, con) in cons.iter().enumerate() {
            if active.contains(&i) {
                continue;
            }
            let v = con.value(&s) / con.scale().max(1.0);
            if v > worst.max(1e-12) {
                worst = v;
                add = Some(i);
            }
        }
        match add {
            Some(i) => active.push(i),
            None => return Ok(s),
        }
    }
    Err(BapError::OracleFailure(
        "active-set loop did not settle".into(),
    ))
}
