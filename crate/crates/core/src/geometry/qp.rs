//! Exact projection onto a polyhedron {y : Ay <= b} by a dense dual
//! active-set method, plus a small nonnegative least-squares solver.
//!
//! The projection QP has identity Hessian, so the method starts from the
//! unconstrained optimum y = x (dual feasible) and adds violated rows one
//! at a time, dropping rows whose multiplier would turn negative. Row
//! counts in this crate stay in the hundreds and dimensions at or below a
//! few hundred, so every working-set system is re-factorized densely.

use nalgebra::{DMatrix, DVector};

use super::{check_dims, Point, Polyhedron};
use crate::error::{BapError, Result};

/// Result of an exact polyhedron projection.
#[derive(Debug, Clone)]
pub struct PolyhedronProjection {
    /// The nearest point of the polyhedron.
    pub point: Point,
    /// KKT multipliers, one per row (zero for inactive rows).
    pub multipliers: DVector<f64>,
    /// Indices of rows active at the solution.
    pub active: Vec<usize>,
    /// Active-set steps taken.
    pub iterations: usize,
}

/// Solve the working-set system (A_W A_W^T) r = A_W a.
fn solve_working(rows: &DMatrix<f64>, working: &[usize], a: &DVector<f64>) -> DVector<f64> {
    let q = working.len();
    if q == 0 {
        return DVector::zeros(0);
    }
    let n = rows.ncols();
    let mut aw = DMatrix::zeros(q, n);
    for (t, &i) in working.iter().enumerate() {
        aw.row_mut(t).copy_from(&rows.row(i));
    }
    let gram = &aw * aw.transpose();
    let rhs = &aw * a;
    match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => {
            // Working rows should stay independent; fall back to the
            // pseudo-inverse if rounding made the Gram matrix borderline.
            let svd = gram.svd(true, true);
            let eps = 1e-14 * svd.singular_values.max().max(1.0);
            svd.solve(&rhs, eps).expect("svd solve")
        }
    }
}

/// Exact projection of `x` onto `p`: argmin ||y - x|| s.t. Ay <= b.
///
/// `tol` bounds the normalized feasibility residual (violation divided by
/// the row norm) and the multiplier/complementarity certificates at exit.
pub fn project_polyhedron(p: &Polyhedron, x: &Point, tol: f64) -> Result<PolyhedronProjection> {
    check_dims(p.rows().ncols(), x.len())?;
    if !(tol > 0.0) {
        return Err(BapError::InvalidArgument(
            "projection tolerance must be positive".into(),
        ));
    }
    let rows = p.rows();
    let rhs = p.rhs();
    let k = rows.nrows();
    let n = rows.ncols();
    let row_norms: Vec<f64> = (0..k).map(|i| rows.row(i).norm()).collect();

    let mut y = x.clone();
    let mut working: Vec<usize> = Vec::new();
    let mut lam: Vec<f64> = Vec::new();
    let mut steps = 0usize;
    let max_steps = 200 + 30 * (k + n);

    loop {
        // Most violated row, in distance units.
        let mut worst = tol;
        let mut pick = None;
        for i in 0..k {
            if working.contains(&i) {
                continue;
            }
            let v = (rows.row(i).transpose().dot(&y) - rhs[i]) / row_norms[i];
            if v > worst {
                worst = v;
                pick = Some(i);
            }
        }
        let Some(p_idx) = pick else {
            return finish(p, x, y, working, lam, steps, tol);
        };

        let a_p = rows.row(p_idx).transpose().into_owned();
        let mut lam_p = 0.0f64;
        let mut v = a_p.dot(&y) - rhs[p_idx];

        loop {
            steps += 1;
            if steps > max_steps {
                return Err(BapError::QpCycleLimit {
                    rows: k,
                    cols: n,
                    iterations: steps,
                });
            }
            let r = solve_working(rows, &working, &a_p);
            let mut z = a_p.clone();
            for (t, &i) in working.iter().enumerate() {
                z -= rows.row(i).transpose() * r[t];
            }
            let z_ok = z.norm_squared() > (1e-12 * row_norms[p_idx]).powi(2);

            // Longest dual step before an existing multiplier hits zero.
            let mut t_dual = f64::INFINITY;
            let mut drop_idx = None;
            for (t, &rt) in r.iter().enumerate() {
                if rt > 1e-14 {
                    let bound = lam[t] / rt;
                    if bound < t_dual {
                        t_dual = bound;
                        drop_idx = Some(t);
                    }
                }
            }

            if z_ok {
                let t_full = v / a_p.dot(&z);
                if t_dual < t_full {
                    let t = t_dual;
                    y -= &z * t;
                    for (j, l) in lam.iter_mut().enumerate() {
                        *l -= t * r[j];
                    }
                    lam_p += t;
                    v -= t * a_p.dot(&z);
                    let d = drop_idx.expect("finite dual step has a blocking row");
                    working.remove(d);
                    lam.remove(d);
                } else {
                    let t = t_full;
                    y -= &z * t;
                    for (j, l) in lam.iter_mut().enumerate() {
                        *l -= t * r[j];
                    }
                    lam_p += t;
                    working.push(p_idx);
                    lam.push(lam_p);
                    break;
                }
            } else {
                // a_p depends linearly on the working rows: progress is
                // only possible in the dual.
                if drop_idx.is_none() {
                    return Err(BapError::Infeasible);
                }
                let t = t_dual;
                for (j, l) in lam.iter_mut().enumerate() {
                    *l -= t * r[j];
                }
                lam_p += t;
                let d = drop_idx.unwrap();
                working.remove(d);
                lam.remove(d);
            }
        }
    }
}

/// Re-solve the KKT system on the final working set and certify.
fn finish(
    p: &Polyhedron,
    x: &Point,
    fallback: Point,
    mut working: Vec<usize>,
    _lam: Vec<f64>,
    steps: usize,
    tol: f64,
) -> Result<PolyhedronProjection> {
    let rows = p.rows();
    let rhs = p.rhs();
    let k = rows.nrows();

    // Polishing pass: the equality-constrained projection on the working
    // set removes drift accumulated by the incremental updates. Rows whose
    // polished multiplier goes negative are dropped and the system
    // re-solved.
    let mut y;
    let lam_polished;
    loop {
        let q = working.len();
        if q == 0 {
            y = x.clone();
            lam_polished = DVector::zeros(0);
            break;
        }
        let n = rows.ncols();
        let mut aw = DMatrix::zeros(q, n);
        let mut bw = DVector::zeros(q);
        for (t, &i) in working.iter().enumerate() {
            aw.row_mut(t).copy_from(&rows.row(i));
            bw[t] = rhs[i];
        }
        let gram = &aw * aw.transpose();
        let resid = &aw * x - bw;
        let solved = match gram.clone().cholesky() {
            Some(ch) => ch.solve(&resid),
            None => {
                let svd = gram.svd(true, true);
                let eps = 1e-14 * svd.singular_values.max().max(1.0);
                svd.solve(&resid, eps).expect("svd solve")
            }
        };
        if let Some(t) = (0..q).find(|&t| solved[t] < -tol) {
            working.remove(t);
            continue;
        }
        y = x - aw.transpose() * &solved;
        lam_polished = solved;
        break;
    }

    // Certification: feasibility over all rows; fall back to the iterated
    // point if polishing left a violated row (degenerate geometries).
    let feasible = |pt: &Point| -> bool {
        (0..k).all(|i| {
            let v = (rows.row(i).transpose().dot(pt) - rhs[i]) / rows.row(i).norm();
            v <= tol * (1.0 + pt.norm())
        })
    };
    if !feasible(&y) {
        if !feasible(&fallback) {
            return Err(BapError::QpCycleLimit {
                rows: k,
                cols: rows.ncols(),
                iterations: steps,
            });
        }
        y = fallback;
    }

    let mut multipliers = DVector::zeros(k);
    for (t, &i) in working.iter().enumerate() {
        if t < lam_polished.len() {
            multipliers[i] = lam_polished[t].max(0.0);
        }
    }
    Ok(PolyhedronProjection {
        point: y,
        multipliers,
        active: working,
        iterations: steps,
    })
}

/// Nonnegative least squares: argmin ||C v - d|| subject to v >= 0
/// (Lawson-Hanson active set). Returns the solution and the residual norm.
pub fn nnls(c: &DMatrix<f64>, d: &DVector<f64>, max_iter: usize) -> Result<(DVector<f64>, f64)> {
    let q = c.ncols();
    let mut passive = vec![false; q];
    let mut v = DVector::zeros(q);
    let scale = (c.transpose() * d).amax().max(1e-300);

    let ls_on_passive = |passive: &[bool]| -> DVector<f64> {
        let idx: Vec<usize> = (0..q).filter(|&j| passive[j]).collect();
        if idx.is_empty() {
            return DVector::zeros(q);
        }
        let sub = c.select_columns(idx.iter());
        let svd = sub.svd(true, true);
        let eps = 1e-13 * svd.singular_values.max().max(1.0);
        let s = svd.solve(d, eps).expect("svd solve");
        let mut full = DVector::zeros(q);
        for (t, &j) in idx.iter().enumerate() {
            full[j] = s[t];
        }
        full
    };

    for _ in 0..max_iter.max(3 * q + 30) {
        let w = c.transpose() * (d - c * &v);
        let mut best = 1e-10 * scale;
        let mut pick = None;
        for j in 0..q {
            if !passive[j] && w[j] > best {
                best = w[j];
                pick = Some(j);
            }
        }
        let Some(j_star) = pick else { break };
        passive[j_star] = true;

        loop {
            let s = ls_on_passive(&passive);
            let neg: Vec<usize> = (0..q).filter(|&j| passive[j] && s[j] <= 0.0).collect();
            if neg.is_empty() {
                v = s;
                break;
            }
            let mut alpha = f64::INFINITY;
            for &j in &neg {
                let denom = v[j] - s[j];
                if denom > 0.0 {
                    alpha = alpha.min(v[j] / denom);
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            v = &v + (&s - &v) * alpha;
            for j in 0..q {
                if passive[j] && v[j].abs() <= 1e-14 * (1.0 + scale) {
                    passive[j] = false;
                    v[j] = 0.0;
                }
            }
            if !passive.iter().any(|&b| b) {
                break;
            }
        }
    }
    let residual = (d - c * &v).norm();
    Ok((v, residual))
}
