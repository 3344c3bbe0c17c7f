//! Circumcenter of a finite point set within its affine hull.
//!
//! With p_0 the first point and d_j = p_j - p_0, the circumcenter is
//! p_0 + y where y solves D^T y = ||d_j||^2 / 2 within range(D). The
//! minimum-norm least-squares solution keeps the center well-defined for
//! coincident or collinear inputs, which genuinely occur inside
//! reflection-based operators when an iterate sits on one of the sets.

use nalgebra::{DMatrix, DVector};

use crate::error::{BapError, Result};
use crate::geometry::Point;

/// Singular values below this fraction of the largest are treated as zero.
const RANK_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct CircumcenterResult {
    pub center: Point,
    /// Common distance to the inputs (mean over the inputs).
    pub radius: f64,
    /// Numerical affine rank of the difference matrix.
    pub rank: usize,
    /// Max deviation of equidistance, max_i | ||c - p_i|| - radius |.
    pub residual: f64,
}

impl CircumcenterResult {
    /// True when the inputs were affinely degenerate (rank below the
    /// generic rank of the configuration).
    pub fn is_degenerate(&self, num_points: usize) -> bool {
        self.rank + 1 < num_points
    }
}

/// Circumcenter of `points` in their affine hull.
pub fn circumcenter(points: &[Point]) -> Result<CircumcenterResult> {
    if points.is_empty() {
        return Err(BapError::InvalidArgument(
            "circumcenter of an empty set".into(),
        ));
    }
    let n = points[0].len();
    for p in points {
        if p.len() != n {
            return Err(BapError::DimensionMismatch {
                expected: n,
                got: p.len(),
            });
        }
    }
    let base = &points[0];
    let q = points.len() - 1;
    if q == 0 {
        return Ok(CircumcenterResult {
            center: base.clone(),
            radius: 0.0,
            rank: 0,
            residual: 0.0,
        });
    }

    // Columns of `diffs` are the d_j; the equidistance conditions read
    // D^T y = b with b_j = ||d_j||^2 / 2 and y = center - p_0 constrained
    // to range(D). A column-pivoted QR of D gives the numerical rank from
    // the R diagonals (non-increasing under pivoting) and a stable reduced
    // least-squares solve: with D P = Q1 R1, minimize ||R1^T t - P^T b||
    // over t and set y = Q1 t.
    let mut diffs = DMatrix::zeros(n, q);
    let mut rhs = DVector::zeros(q);
    for j in 0..q {
        let d = &points[j + 1] - base;
        rhs[j] = 0.5 * d.norm_squared();
        diffs.column_mut(j).copy_from(&d);
    }
    let qr = diffs.col_piv_qr();
    let r_mat = qr.r();
    let diag_max = r_mat[(0, 0)].abs();
    let mut rank = 0usize;
    if diag_max > 0.0 {
        for i in 0..r_mat.nrows().min(q) {
            if r_mat[(i, i)].abs() > RANK_THRESHOLD * diag_max {
                rank += 1;
            }
        }
    }
    let center = if rank == 0 {
        base.clone()
    } else {
        let mut permuted = rhs.clone();
        qr.p().permute_rows(&mut permuted);
        let r1 = r_mat.rows(0, rank);
        let normal = r1 * r1.transpose();
        let t = normal
            .cholesky()
            .map(|ch| ch.solve(&(r1 * permuted)))
            .ok_or_else(|| BapError::InvalidArgument("circumcenter solve failed".into()))?;
        base + qr.q().columns(0, rank) * t
    };

    let dists: Vec<f64> = points.iter().map(|p| (&center - p).norm()).collect();
    let radius = dists.iter().sum::<f64>() / dists.len() as f64;
    let residual = dists.iter().map(|d| (d - radius).abs()).fold(0.0, f64::max);
    Ok(CircumcenterResult {
        center,
        radius,
        rank,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil;
    use nalgebra::DVector;

    fn pts(raw: &[&[f64]]) -> Vec<Point> {
        raw.iter().map(|r| DVector::from_vec(r.to_vec())).collect()
    }

    #[test]
    fn coincident_points_return_the_point() {
        let p = pts(&[&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0]]);
        let c = circumcenter(&p).unwrap();
        assert_eq!(c.center, p[0]);
        assert_eq!(c.radius, 0.0);
        assert!(c.is_degenerate(3));
    }

    #[test]
    fn two_points_give_midpoint() {
        let p = pts(&[&[0.0, 0.0], &[2.0, 4.0]]);
        let c = circumcenter(&p).unwrap();
        assert!((c.center - DVector::from_vec(vec![1.0, 2.0])).norm() < 1e-14);
    }

    #[test]
    fn right_triangle_hypotenuse_midpoint() {
        let p = pts(&[&[0.0, 0.0], &[2.0, 0.0], &[0.0, 2.0]]);
        let c = circumcenter(&p).unwrap();
        assert!((&c.center - DVector::from_vec(vec![1.0, 1.0])).norm() < 1e-12);
        assert!((c.radius - 2.0f64.sqrt()).abs() < 1e-12);
        assert!(!c.is_degenerate(3));
    }

    /// Oracle: solve, then verify pairwise equidistance directly.
    #[test]
    fn random_triples_are_equidistant() {
        let mut rng = testutil::rng(101);
        for _ in 0..200 {
            let p: Vec<Point> = (0..3)
                .map(|_| testutil::rand_point(&mut rng, 5, 2.0))
                .collect();
            let c = circumcenter(&p).unwrap();
            let d: Vec<f64> = p.iter().map(|q| (&c.center - q).norm()).collect();
            assert!((d[0] - d[1]).abs() <= 1e-9 * (1.0 + c.radius));
            assert!((d[0] - d[2]).abs() <= 1e-9 * (1.0 + c.radius));
            assert!(c.residual <= 1e-9 * (1.0 + c.radius));
        }
    }

    #[test]
    fn center_lies_in_affine_hull() {
        let mut rng = testutil::rng(103);
        for _ in 0..200 {
            let p: Vec<Point> = (0..3)
                .map(|_| testutil::rand_point(&mut rng, 6, 2.0))
                .collect();
            let c = circumcenter(&p).unwrap();
            // Least-squares fit of c - p0 in the difference span.
            let mut d = DMatrix::zeros(6, 2);
            d.column_mut(0).copy_from(&(&p[1] - &p[0]));
            d.column_mut(1).copy_from(&(&p[2] - &p[0]));
            let rhs = &c.center - &p[0];
            let svd = d.clone().svd(true, true);
            let coef = svd.solve(&rhs, 1e-14).unwrap();
            assert!((d * coef - rhs).norm() <= 1e-9);
        }
    }

    #[test]
    fn duplicate_point_leaves_center_unchanged() {
        let mut rng = testutil::rng(107);
        for _ in 0..100 {
            let mut p: Vec<Point> = (0..3)
                .map(|_| testutil::rand_point(&mut rng, 4, 2.0))
                .collect();
            let c0 = circumcenter(&p).unwrap();
            p.push(p[1].clone());
            let c1 = circumcenter(&p).unwrap();
            assert!((c0.center - c1.center).norm() <= 1e-9);
        }
    }

    #[test]
    fn rotation_translation_equivariance() {
        let mut rng = testutil::rng(109);
        for _ in 0..100 {
            let p: Vec<Point> = (0..3)
                .map(|_| testutil::rand_point(&mut rng, 4, 2.0))
                .collect();
            // Random orthogonal matrix from the QR of a random matrix.
            let m = DMatrix::from_fn(4, 4, |_, _| {
                use rand::Rng;
                rng.random_range(-1.0..1.0)
            });
            let qr = m.qr();
            let rot = qr.q();
            let shift = testutil::rand_point(&mut rng, 4, 3.0);
            let moved: Vec<Point> = p.iter().map(|x| &rot * x + &shift).collect();
            let c0 = circumcenter(&p).unwrap();
            let c1 = circumcenter(&moved).unwrap();
            assert!((&rot * c0.center + &shift - c1.center).norm() <= 1e-9);
        }
    }

    #[test]
    fn collinear_points_resolve_minimum_norm() {
        // Equidistance is infeasible for three distinct collinear points;
        // the least-squares branch must still return a finite center in
        // the affine hull and flag the rank deficiency.
        let p = pts(&[&[0.0, 0.0], &[1.0, 0.0], &[3.0, 0.0]]);
        let c = circumcenter(&p).unwrap();
        assert!(c.center.iter().all(|v| v.is_finite()));
        assert!(c.is_degenerate(3));
        assert!(c.center[1].abs() < 1e-12);
    }
}
