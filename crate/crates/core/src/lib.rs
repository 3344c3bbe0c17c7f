//! Solvers for the best approximation problem over an intersection of
//! closed convex sets: anchored (Halpern-type) iterations driven by six
//! projection-based operators, Dykstra's algorithm as the baseline, seeded
//! instance generation with a built-in reference oracle, and an analysis
//! layer for empirical convergence rates.

// Argument guards use the negated form `!(x > 0.0)` on purpose: it also
// rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod circumcenter;
pub mod cli;
pub mod drivers;
pub mod error;
pub mod geometry;
pub mod instances;
pub mod operators;

pub use error::{BapError, Result};

#[cfg(test)]
pub(crate) mod testutil {
    use nalgebra::{DMatrix, DVector};
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    use crate::geometry::{Ball, ConvexBody, Ellipsoid, Halfspace, Point, Polyhedron};

    pub fn rng(seed: u64) -> ChaCha8Rng {
        use rand::SeedableRng;
        ChaCha8Rng::seed_from_u64(seed)
    }

    pub fn rand_point(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Point {
        DVector::from_fn(n, |_, _| rng.random_range(-scale..scale))
    }

    pub fn rand_halfspace(rng: &mut ChaCha8Rng, n: usize) -> Halfspace {
        loop {
            let normal = rand_point(rng, n, 1.0);
            if normal.norm() > 0.1 {
                let offset = rng.random_range(-1.0..1.0);
                return Halfspace::new(normal, offset).unwrap();
            }
        }
    }

    pub fn rand_ellipsoid(rng: &mut ChaCha8Rng, n: usize) -> Ellipsoid {
        let center = rand_point(rng, n, 1.0);
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let lambda = rng.random_range(0.1..1.1);
        let q = &a * a.transpose() + DMatrix::identity(n, n) * lambda;
        let q = (&q + q.transpose()) * 0.5;
        let radius = rng.random_range(0.5..2.0);
        Ellipsoid::new(center, q, radius).unwrap()
    }

    /// Polyhedron guaranteed nonempty: rows pass on a random interior point.
    pub fn rand_polyhedron(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Polyhedron {
        let interior = rand_point(rng, n, 1.0);
        let mut rows = DMatrix::zeros(k, n);
        let mut rhs = DVector::zeros(k);
        for i in 0..k {
            let a = loop {
                let a = rand_point(rng, n, 1.0);
                if a.norm() > 0.1 {
                    break a;
                }
            };
            let slack = rng.random_range(0.05..1.0);
            rhs[i] = a.dot(&interior) + slack;
            rows.row_mut(i).copy_from(&a.transpose());
        }
        Polyhedron::new(rows, rhs).unwrap()
    }

    pub fn rand_ball(rng: &mut ChaCha8Rng, n: usize) -> Ball {
        Ball::new(rand_point(rng, n, 1.0), rng.random_range(0.3..2.0)).unwrap()
    }

    pub fn body_zoo(rng: &mut ChaCha8Rng, n: usize) -> Vec<ConvexBody> {
        vec![
            ConvexBody::Halfspace(rand_halfspace(rng, n)),
            ConvexBody::Polyhedron(rand_polyhedron(rng, n, 4)),
            ConvexBody::Ellipsoid(rand_ellipsoid(rng, n)),
            ConvexBody::Ball(rand_ball(rng, n)),
        ]
    }

    /// Mixed body family with a guaranteed common interior point
    /// (returned as the witness).
    pub fn intersecting_zoo(rng: &mut ChaCha8Rng, n: usize, m: usize) -> (Vec<ConvexBody>, Point) {
        let witness = rand_point(rng, n, 1.0);
        let mut bodies = Vec::with_capacity(m);
        for i in 0..m {
            let body = match i % 4 {
                0 => {
                    let a = loop {
                        let a = rand_point(rng, n, 1.0);
                        if a.norm() > 0.1 {
                            break a;
                        }
                    };
                    let slack = rng.random_range(0.05..0.8);
                    ConvexBody::Halfspace(
                        Halfspace::new(a.clone(), a.dot(&witness) + slack).unwrap(),
                    )
                }
                1 => {
                    let c = rand_point(rng, n, 1.0);
                    let r = (&c - &witness).norm() + rng.random_range(0.1..1.0);
                    ConvexBody::Ball(Ball::new(c, r).unwrap())
                }
                2 => {
                    let k = 3;
                    let mut rows = DMatrix::zeros(k, n);
                    let mut rhs = DVector::zeros(k);
                    for j in 0..k {
                        let a = loop {
                            let a = rand_point(rng, n, 1.0);
                            if a.norm() > 0.1 {
                                break a;
                            }
                        };
                        rhs[j] = a.dot(&witness) + rng.random_range(0.05..0.8);
                        rows.row_mut(j).copy_from(&a.transpose());
                    }
                    ConvexBody::Polyhedron(Polyhedron::new(rows, rhs).unwrap())
                }
                _ => {
                    let center = rand_point(rng, n, 1.0);
                    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
                    let q =
                        &a * a.transpose() + DMatrix::identity(n, n) * rng.random_range(0.1..1.1);
                    let q = (&q + q.transpose()) * 0.5;
                    let d = &witness - &center;
                    let level = (&q * &d).dot(&d);
                    let radius = (level * rng.random_range(1.1..2.0f64)).sqrt().max(0.1);
                    ConvexBody::Ellipsoid(Ellipsoid::new(center, q, radius).unwrap())
                }
            };
            bodies.push(body);
        }
        (bodies, witness)
    }

    /// Cyclic projections until the violation drops below `tol`.
    pub fn feasible_point(
        bodies: &[ConvexBody],
        start: &Point,
        tol: f64,
        max_sweeps: usize,
    ) -> Option<Point> {
        let mut x = start.clone();
        for _ in 0..max_sweeps {
            for b in bodies {
                x = b.project(&x).unwrap();
            }
            if crate::geometry::violation_delta(bodies, &x).unwrap() <= tol {
                return Some(x);
            }
        }
        None
    }

    /// Brute-force projection onto a polyhedron by enumerating every
    /// active-set candidate; independent of the active-set solver path.
    pub fn enumerate_polyhedron_projection(p: &Polyhedron, x: &Point) -> Point {
        let k = p.num_rows();
        assert!(k <= 16, "enumeration oracle limited to small systems");
        let mut best = f64::INFINITY;
        let mut arg = x.clone();
        for mask in 0..(1usize << k) {
            let idx: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
            let cand = if idx.is_empty() {
                x.clone()
            } else {
                let aw = p.rows().select_rows(idx.iter());
                let bw = DVector::from_iterator(idx.len(), idx.iter().map(|&i| p.rhs()[i]));
                let gram = &aw * aw.transpose();
                let svd = gram.svd(true, true);
                let eps = 1e-12 * svd.singular_values.max().max(1.0);
                match svd.solve(&(&aw * x - bw), eps) {
                    Ok(lam) => x - aw.transpose() * lam,
                    Err(_) => continue,
                }
            };
            if p.residual(&cand) <= 1e-9 {
                let d = (x - &cand).norm();
                if d < best {
                    best = d;
                    arg = cand;
                }
            }
        }
        arg
    }
}
