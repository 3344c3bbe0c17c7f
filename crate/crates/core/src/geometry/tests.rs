use nalgebra::{DMatrix, DVector};

use super::*;
use crate::testutil;

fn vec2(a: f64, b: f64) -> Point {
    DVector::from_vec(vec![a, b])
}

#[test]
fn halfspace_inside_is_fixed() {
    let h = Halfspace::new(vec2(1.0, 0.0), 0.0).unwrap();
    let x = vec2(-1.0, 5.0);
    assert_eq!(project_halfspace(&h, &x).unwrap(), x);
}

#[test]
fn halfspace_clamps_coordinate() {
    let h = Halfspace::new(vec2(1.0, 0.0), 0.0).unwrap();
    let p = project_halfspace(&h, &vec2(2.0, 3.0)).unwrap();
    assert!((p - vec2(0.0, 3.0)).norm() < 1e-15);
}

/// Oracle: dense grid minimization of ||y - x|| over feasible grid points.
#[test]
fn halfspace_diagonal_matches_grid_oracle() {
    let h = Halfspace::new(vec2(1.0, 1.0), 0.0).unwrap();
    let x = vec2(2.0, 0.0);
    let p = project_halfspace(&h, &x).unwrap();
    assert!((&p - vec2(1.0, -1.0)).norm() < 1e-12);

    let step = 1e-3;
    let mut best = f64::INFINITY;
    let mut arg = vec2(0.0, 0.0);
    let mut u = -2.0f64;
    while u <= 2.0 {
        let mut v = -2.0f64;
        while v <= 2.0 {
            if u + v <= 0.0 {
                let d = (u - 2.0).powi(2) + v * v;
                if d < best {
                    best = d;
                    arg = vec2(u, v);
                }
            }
            v += step;
        }
        u += step;
    }
    assert!((arg - p).norm() < 2.0 * step);
}

#[test]
fn ellipsoid_unit_ball_radial() {
    let e = Ellipsoid::new(vec2(0.0, 0.0), DMatrix::identity(2, 2), 1.0).unwrap();
    let p = project_ellipsoid(&e, &vec2(2.0, 0.0), 1e-12).unwrap();
    assert!((p - vec2(1.0, 0.0)).norm() < 1e-9);
}

#[test]
fn ellipsoid_axis_symmetry() {
    let q = DMatrix::from_diagonal(&vec2(1.0, 4.0));
    let e = Ellipsoid::new(vec2(0.0, 0.0), q, 1.0).unwrap();
    let p = project_ellipsoid(&e, &vec2(0.0, 2.0), 1e-12).unwrap();
    assert!((p - vec2(0.0, 0.5)).norm() < 1e-9);
}

/// Oracle: brute-force sweep over the boundary parameterization
/// (cos t, 0.5 sin t) at 1e7 samples.
#[test]
fn ellipsoid_matches_boundary_sweep() {
    let q = DMatrix::from_diagonal(&vec2(1.0, 4.0));
    let e = Ellipsoid::new(vec2(0.0, 0.0), q, 1.0).unwrap();
    let x = vec2(2.0, 1.0);
    let p = project_ellipsoid(&e, &x, 1e-14).unwrap();

    let samples = 10_000_000usize;
    let mut best = f64::INFINITY;
    let mut arg = (0.0, 0.0);
    for i in 0..samples {
        let t = 2.0 * std::f64::consts::PI * (i as f64) / (samples as f64);
        let (s, c) = t.sin_cos();
        let (u, v) = (c, 0.5 * s);
        let d = (u - x[0]).powi(2) + (v - x[1]).powi(2);
        if d < best {
            best = d;
            arg = (u, v);
        }
    }
    assert!(((p[0] - arg.0).powi(2) + (p[1] - arg.1).powi(2)).sqrt() < 1e-6);
}

#[test]
fn polyhedron_box_clamp() {
    let rows = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
    let rhs = DVector::from_vec(vec![1.0, 0.0, 1.0, 0.0]);
    let p = Polyhedron::new(rows, rhs).unwrap();
    let proj = project_polyhedron(&p, &vec2(2.0, 0.5), 1e-12).unwrap();
    assert!((proj.point - vec2(1.0, 0.5)).norm() < 1e-10);
}

#[test]
fn polyhedron_single_row_reduces_to_halfspace() {
    let mut rng = testutil::rng(11);
    for _ in 0..50 {
        let h = testutil::rand_halfspace(&mut rng, 3);
        let p = Polyhedron::from_halfspaces(std::slice::from_ref(&h)).unwrap();
        let x = testutil::rand_point(&mut rng, 3, 3.0);
        let a = project_halfspace(&h, &x).unwrap();
        let b = project_polyhedron(&p, &x, 1e-12).unwrap().point;
        assert!((a - b).norm() < 1e-10);
    }
}

#[test]
fn polyhedron_matches_active_set_enumeration() {
    let mut rng = testutil::rng(7);
    for trial in 0..100 {
        let p = testutil::rand_polyhedron(&mut rng, 2, 3);
        let x = testutil::rand_point(&mut rng, 2, 4.0);
        let proj = project_polyhedron(&p, &x, 1e-12).unwrap();
        let oracle = testutil::enumerate_polyhedron_projection(&p, &x);
        assert!(
            (&proj.point - &oracle).norm() < 1e-8,
            "trial {trial}: active-set {:?} vs oracle {:?}",
            proj.point,
            oracle
        );
    }
}

#[test]
fn polyhedron_certificates_hold() {
    let mut rng = testutil::rng(23);
    for _ in 0..60 {
        let p = testutil::rand_polyhedron(&mut rng, 6, 10);
        let x = testutil::rand_point(&mut rng, 6, 5.0);
        let proj = project_polyhedron(&p, &x, 1e-10).unwrap();
        // Feasibility, dual feasibility, complementary slackness,
        // stationarity.
        assert!(p.residual(&proj.point) <= 1e-8);
        let mut recon = proj.point.clone();
        for i in 0..p.num_rows() {
            assert!(proj.multipliers[i] >= -1e-10);
            let slack = p.rhs()[i] - p.rows().row(i).transpose().dot(&proj.point);
            assert!(proj.multipliers[i] * slack.abs() <= 1e-7);
            recon += p.rows().row(i).transpose() * proj.multipliers[i];
        }
        assert!((recon - &x).norm() <= 1e-8 * (1.0 + x.norm()));
    }
}

#[test]
fn sublevel_inside_passes() {
    let b = ConvexBody::Ball(Ball::new(vec2(0.0, 0.0), 1.0).unwrap());
    match approx_project_sublevel(&b, &vec2(0.1, 0.2)).unwrap() {
        SublevelProjection::Inside => {}
        _ => panic!("expected pass"),
    }
}

#[test]
fn sublevel_halfspace_is_exact() {
    let mut rng = testutil::rng(3);
    for _ in 0..40 {
        let h = testutil::rand_halfspace(&mut rng, 4);
        let x = testutil::rand_point(&mut rng, 4, 3.0);
        let exact = project_halfspace(&h, &x).unwrap();
        match approx_project_sublevel(&ConvexBody::Halfspace(h), &x).unwrap() {
            SublevelProjection::Inside => assert_eq!(exact, x),
            SublevelProjection::Outside {
                point, epsilon_hat, ..
            } => {
                assert!((point - exact).norm() < 1e-10);
                assert!(epsilon_hat < 1e-10);
            }
        }
    }
}

#[test]
fn sublevel_unit_disk_worked_example() {
    // g(y) = ||y||^2 - 1 at x = (2, 0): gradient (4, 0), step to (1.25, 0),
    // measured ratio 0.25 / 1.0.
    let b = ConvexBody::Ball(Ball::new(vec2(0.0, 0.0), 1.0).unwrap());
    let x = vec2(2.0, 0.0);
    match approx_project_sublevel(&b, &x).unwrap() {
        SublevelProjection::Outside {
            point,
            halfspace,
            epsilon_hat,
        } => {
            assert!((&point - vec2(1.25, 0.0)).norm() < 1e-12);
            assert!((epsilon_hat - 0.25).abs() < 1e-10);
            // Containment: the halfspace must hold on sampled boundary
            // points of the disk.
            for i in 0..100 {
                let t = 2.0 * std::f64::consts::PI * (i as f64) / 100.0;
                let s = vec2(t.cos(), t.sin());
                assert!(halfspace.residual(&s) <= 1e-9);
            }
        }
        _ => panic!("expected outside"),
    }
}

#[test]
fn sublevel_halfspace_contains_members() {
    // For 100 sampled members s of the body, <x - p, s - p> <= 1e-9.
    let mut rng = testutil::rng(17);
    for body in testutil::body_zoo(&mut rng, 3) {
        let x = testutil::rand_point(&mut rng, 3, 4.0);
        if let SublevelProjection::Outside { halfspace, .. } =
            approx_project_sublevel(&body, &x).unwrap()
        {
            for _ in 0..100 {
                let raw = testutil::rand_point(&mut rng, 3, 4.0);
                let member = body.project(&raw).unwrap();
                assert!(halfspace.residual(&member) <= 1e-9);
            }
        }
    }
}

#[test]
fn distance_examples() {
    let h = ConvexBody::Halfspace(Halfspace::new(vec2(1.0, 0.0), 0.0).unwrap());
    assert!((distance(&h, &vec2(2.0, 3.0)).unwrap() - 2.0).abs() < 1e-12);
    assert_eq!(distance(&h, &vec2(-1.0, 0.5)).unwrap(), 0.0);

    let q = DMatrix::from_diagonal(&vec2(1.0, 4.0));
    let e = ConvexBody::Ellipsoid(Ellipsoid::new(vec2(0.0, 0.0), q, 1.0).unwrap());
    assert!((distance(&e, &vec2(0.0, 2.0)).unwrap() - 1.5).abs() < 1e-9);
}

#[test]
fn violation_delta_examples() {
    let bodies = vec![
        ConvexBody::Halfspace(Halfspace::new(vec2(1.0, 0.0), 0.0).unwrap()),
        ConvexBody::Halfspace(Halfspace::new(vec2(0.0, 1.0), 0.0).unwrap()),
    ];
    assert!((violation_delta(&bodies, &vec2(1.0, 2.0)).unwrap() - 2.0).abs() < 1e-12);
    assert_eq!(violation_delta(&bodies, &vec2(-1.0, -1.0)).unwrap(), 0.0);
    assert!(matches!(
        violation_delta(&[], &vec2(0.0, 0.0)),
        Err(crate::BapError::EmptyBodyList)
    ));
}

/// Oracle: recompute each ellipsoid distance by an independent boundary
/// sweep (coarse scan plus golden-section refinement over the boundary
/// angle in 2-D).
#[test]
fn violation_delta_matches_independent_sweeps() {
    let mut rng = testutil::rng(29);
    for _ in 0..10 {
        let bodies: Vec<ConvexBody> = (0..4)
            .map(|_| ConvexBody::Ellipsoid(testutil::rand_ellipsoid(&mut rng, 2)))
            .collect();
        let x = testutil::rand_point(&mut rng, 2, 5.0);
        let delta = violation_delta(&bodies, &x).unwrap();
        let mut oracle = 0.0f64;
        for b in &bodies {
            let ConvexBody::Ellipsoid(e) = b else {
                unreachable!()
            };
            if e.residual(&x) <= 0.0 {
                continue;
            }
            oracle = oracle.max(ellipsoid_boundary_distance(e, &x));
        }
        assert!(
            (delta - oracle).abs() < 1e-6,
            "delta {delta} oracle {oracle}"
        );
    }
}

/// Distance from x to the boundary of a 2-D ellipsoid by sweeping the
/// parameterization c + sum_j (eta / sqrt(l_j)) cos/sin(t) v_j.
pub(crate) fn ellipsoid_boundary_distance(e: &Ellipsoid, x: &Point) -> f64 {
    let vs = e.shape().clone().symmetric_eigen();
    let axis = |t: f64| -> Point {
        let mut p = e.center().clone();
        let (s, c) = t.sin_cos();
        p += vs.eigenvectors.column(0) * (e.radius() / vs.eigenvalues[0].sqrt() * c);
        p += vs.eigenvectors.column(1) * (e.radius() / vs.eigenvalues[1].sqrt() * s);
        p
    };
    let dist = |t: f64| (x - axis(t)).norm();
    let coarse = 100_000usize;
    let mut best_t = 0.0;
    let mut best = f64::INFINITY;
    for i in 0..coarse {
        let t = 2.0 * std::f64::consts::PI * (i as f64) / (coarse as f64);
        let d = dist(t);
        if d < best {
            best = d;
            best_t = t;
        }
    }
    // Golden-section refinement around the coarse minimizer.
    let span = 2.0 * std::f64::consts::PI / (coarse as f64);
    let (mut a, mut b) = (best_t - span, best_t + span);
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    for _ in 0..120 {
        let c1 = b - phi * (b - a);
        let c2 = a + phi * (b - a);
        if dist(c1) < dist(c2) {
            b = c2;
        } else {
            a = c1;
        }
    }
    dist(0.5 * (a + b))
}

#[test]
fn projection_idempotence() {
    let mut rng = testutil::rng(41);
    for n in [2usize, 5, 9] {
        for body in testutil::body_zoo(&mut rng, n) {
            for _ in 0..250 {
                let x = testutil::rand_point(&mut rng, n, 6.0);
                let p = body.project(&x).unwrap();
                let pp = body.project(&p).unwrap();
                assert!(
                    (pp - &p).norm() <= 1e-10 * (1.0 + x.norm()),
                    "idempotence failed for {body:?}"
                );
            }
        }
    }
}

#[test]
fn projection_pythagorean_inequality() {
    let mut rng = testutil::rng(43);
    for body in testutil::body_zoo(&mut rng, 4) {
        for _ in 0..250 {
            let x = testutil::rand_point(&mut rng, 4, 5.0);
            let s = body
                .project(&testutil::rand_point(&mut rng, 4, 3.0))
                .unwrap();
            let p = body.project(&x).unwrap();
            let lhs = (&x - &s).norm_squared();
            let rhs = (&x - &p).norm_squared() + (&p - &s).norm_squared();
            assert!(lhs >= rhs - 1e-9);
        }
    }
}

#[test]
fn projection_nonexpansive() {
    let mut rng = testutil::rng(47);
    for body in testutil::body_zoo(&mut rng, 5) {
        for _ in 0..250 {
            let x = testutil::rand_point(&mut rng, 5, 5.0);
            let y = testutil::rand_point(&mut rng, 5, 5.0);
            let px = body.project(&x).unwrap();
            let py = body.project(&y).unwrap();
            assert!((px - py).norm() <= (&x - &y).norm() + 1e-9);
        }
    }
}

#[test]
fn violation_delta_is_one_lipschitz() {
    let mut rng = testutil::rng(53);
    let bodies = testutil::body_zoo(&mut rng, 3);
    for _ in 0..500 {
        let x = testutil::rand_point(&mut rng, 3, 5.0);
        let y = testutil::rand_point(&mut rng, 3, 5.0);
        let dx = violation_delta(&bodies, &x).unwrap();
        let dy = violation_delta(&bodies, &y).unwrap();
        assert!((dx - dy).abs() <= (&x - &y).norm() + 1e-9);
    }
}

#[test]
fn product_and_diagonal_bodies() {
    let mut rng = testutil::rng(59);
    let blocks: Vec<ConvexBody> = (0..3)
        .map(|_| testutil::body_zoo(&mut rng, 2).remove(2))
        .collect();
    let product = ConvexBody::Product(ProductBody::new(blocks.clone()).unwrap());
    let z = testutil::rand_point(&mut rng, 6, 4.0);
    let pz = product.project(&z).unwrap();
    for (i, block) in blocks.iter().enumerate() {
        let piece = block.project(&z.rows(2 * i, 2).into_owned()).unwrap();
        assert!((pz.rows(2 * i, 2) - piece).norm() < 1e-12);
    }

    let diag = DiagonalSubspace::new(3, 2).unwrap();
    let avg = diag.block_average(&z).unwrap();
    let pd = ConvexBody::Diagonal(diag.clone()).project(&z).unwrap();
    assert!((pd.rows(0, 2) - &avg).norm() < 1e-14);
    assert!((pd.rows(2, 2) - &avg).norm() < 1e-14);
    // Orthogonal projection: z - P z is orthogonal to the subspace.
    let w = diag.broadcast(&avg).unwrap();
    assert!((&z - &w).dot(&w) - (&z - &w).dot(&diag.broadcast(&avg).unwrap()) == 0.0);
}

#[test]
fn ellipsoid_rejects_bad_shapes() {
    let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.5, 1.0]);
    assert!(Ellipsoid::new(vec2(0.0, 0.0), asym, 1.0).is_err());
    let indef = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    assert!(Ellipsoid::new(vec2(0.0, 0.0), indef, 1.0).is_err());
    assert!(Halfspace::new(vec2(0.0, 0.0), 1.0).is_err());
}

#[test]
fn dimension_mismatch_is_reported() {
    let h = Halfspace::new(vec2(1.0, 0.0), 0.0).unwrap();
    let x = DVector::from_vec(vec![1.0, 2.0, 3.0]);
    assert!(matches!(
        project_halfspace(&h, &x),
        Err(crate::BapError::DimensionMismatch { .. })
    ));
}
