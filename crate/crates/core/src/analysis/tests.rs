use nalgebra::DVector;

use super::*;
use crate::geometry::{ConvexBody, Halfspace};
use crate::instances::Instance;

fn quadrant_instance() -> Instance {
    let bodies = vec![
        ConvexBody::Halfspace(Halfspace::new(DVector::from_vec(vec![1.0, 0.0]), 0.0).unwrap()),
        ConvexBody::Halfspace(Halfspace::new(DVector::from_vec(vec![0.0, 1.0]), 0.0).unwrap()),
    ];
    Instance::custom(bodies, DVector::from_vec(vec![1.0, 1.0]), 0).unwrap()
}

#[test]
fn holder_params_derived_quantities() {
    let p = HolderParams::new(0.5, 2.0).unwrap();
    assert!((p.lambda() - 2.0).abs() < 1e-15);
    assert!((p.p() - 1.0 / 3.0).abs() < 1e-15);
    // tau = c0 / (2 c^{2/gamma}) = 0.5 / (2 * 16).
    assert!((p.tau(0.5) - 0.5 / 32.0).abs() < 1e-15);
    assert!(HolderParams::new(0.0, 1.0).is_err());
    assert!(HolderParams::new(0.5, 0.5).is_err());
}

#[test]
fn distance_estimate_examples() {
    let instance = quadrant_instance();
    // Feasible point.
    let d = estimate_distance_to_s(&instance, &DVector::from_vec(vec![-1.0, -1.0]), 1e-7).unwrap();
    assert!(d.value <= 1e-7);
    // The anchor (1,1) is at distance sqrt(2) from the quadrant.
    let d = estimate_distance_to_s(&instance, &DVector::from_vec(vec![1.0, 1.0]), 1e-7).unwrap();
    assert!((d.value - 2.0f64.sqrt()).abs() < 1e-6);

    // Single halfspace: distance equals the body distance.
    let h = Halfspace::new(DVector::from_vec(vec![1.0, 0.0]), 0.0).unwrap();
    let single = Instance::custom(
        vec![ConvexBody::Halfspace(h)],
        DVector::from_vec(vec![2.0, 3.0]),
        0,
    )
    .unwrap();
    let d = estimate_distance_to_s(&single, &DVector::from_vec(vec![2.0, 3.0]), 1e-7).unwrap();
    assert!((d.value - 2.0).abs() < 1e-7);
}

#[test]
fn fit_rate_recovers_constructed_series() {
    let schedule = StepSchedule::InvK;
    let series: Vec<(u64, f64)> = (1..=4000)
        .map(|k| (k, 3.0 * schedule.alpha(k).sqrt()))
        .collect();
    let est = fit_rate(&series, &schedule, 0.5, 0.5).unwrap();
    assert!((est.tail_sup - 3.0).abs() < 1e-9);
    assert!((est.slope.unwrap() - 0.5).abs() < 1e-6);
}

#[test]
fn fit_rate_dominated_series_vanishes() {
    let schedule = StepSchedule::InvK;
    let series: Vec<(u64, f64)> = (1..=100_000).map(|k| (k, schedule.alpha(k))).collect();
    // e_k = alpha_k decays faster than alpha_k^{1/2}: the tail sup shrinks
    // as the tail moves out.
    let wide = fit_rate(&series, &schedule, 0.5, 0.5).unwrap();
    let narrow = fit_rate(&series, &schedule, 0.5, 0.05).unwrap();
    assert!(narrow.tail_sup < wide.tail_sup);
    assert!(narrow.tail_sup < 0.01);
}

#[test]
fn fit_rate_zero_series_reports_zero() {
    let schedule = StepSchedule::InvK;
    let series: Vec<(u64, f64)> = (1..=500).map(|k| (k, 0.0)).collect();
    let est = fit_rate(&series, &schedule, 0.5, 0.5).unwrap();
    assert_eq!(est.tail_sup, 0.0);
    assert!(est.slope.is_none());
}

#[test]
fn orderrec_identity_case() {
    // lambda = 0, tau = 1, M = 1, alpha_k = 1/k: the extremal sequence is
    // 1/k and the simulated recursion started on it stays on it.
    let r = check_orderrec(1.0, 1.0, 0.0, &StepSchedule::InvK, 100_000, 1.0).unwrap();
    assert!((r.bound - 1.0).abs() < 1e-15);
    assert!(r.extremal_max_rel_drift <= 1e-12);
    // The simulated ratio approaches the bound like 1 + O(1/k).
    assert!((r.final_ratio - 1.0).abs() < 1e-3);
    assert!(r.tail_sup_ratio <= 1.0 + 1e-3);
}

#[test]
fn orderrec_zero_start_is_dominated_by_shifted_extremal() {
    // From beta_1 = 0 the equality recursion satisfies
    // beta_{k+1} <= extremal_k (the comparison shifts by one index).
    let schedule = StepSchedule::InvK;
    let (m_const, tau, lambda) = (1.0f64, 1.0f64, 0.0f64);
    let p = 1.0 / (1.0 + lambda);
    let bound = (m_const / tau).powf(p);
    let mut beta = 0.0f64;
    for k in 1..=10_000u64 {
        let alpha = schedule.alpha(k);
        let extremal_k = bound * alpha.powf(p);
        assert!(
            beta <= extremal_k.max(bound * schedule.alpha(k.saturating_sub(1).max(1)).powf(p))
                + 1e-12
        );
        beta = alpha * m_const + beta * (1.0 - tau * beta.powf(lambda)).max(0.0);
        assert!(beta <= extremal_k + 1e-12, "k = {k}");
    }
}

#[test]
fn orderrec_large_start_converges_to_bound() {
    let r = check_orderrec(4.0, 0.5, 2.0, &StepSchedule::InvK, 2_000_000, 10.0).unwrap();
    assert!((r.bound - 2.0).abs() < 1e-12);
    assert!(
        (r.final_ratio - r.bound).abs() / r.bound < 1e-3,
        "final ratio {}",
        r.final_ratio
    );
    assert!(r.tail_sup_ratio <= r.bound * (1.0 + 1e-3));
}

#[test]
fn theorem_bounds_linear_regularity() {
    // gamma = 1 with alpha_k = 1/k: L = 1, p = 1, prefactor 1, giving
    // 2 c d0 / sqrt(c0).
    let params = HolderParams::new(1.0, 1.5).unwrap();
    let b = theorem_bounds(&params, 0.25, 2.0, &StepSchedule::InvK, 100_000).unwrap();
    assert!((b.reciprocal_difference_limsup - 1.0).abs() < 1e-9);
    let expect = 2.0 * 1.5 * 2.0 / 0.25f64.sqrt();
    assert!((b.norm_bound.unwrap() - expect).abs() < 1e-9 * expect);
    assert!((b.optimal_harmonic_mu - 1.0).abs() < 1e-15);
    assert!((b.complexity_exponent - 2.0).abs() < 1e-15);
    // Distance bound (2 c^2 d0 / c0)^1.
    let expect_d = 2.0 * 1.5f64.powi(2) * 2.0 / 0.25;
    assert!((b.distance_bound - expect_d).abs() < 1e-9 * expect_d);
}

#[test]
fn theorem_bounds_sublinear_case_and_undefined_branch() {
    let params = HolderParams::new(0.5, 1.0).unwrap();
    let b = theorem_bounds(&params, 1.0, 1.0, &StepSchedule::InvK, 10_000).unwrap();
    assert!((b.optimal_harmonic_mu - 1.5).abs() < 1e-15);
    assert!((b.complexity_exponent - 6.0).abs() < 1e-15);
    assert!(b.norm_bound.is_some());

    // Harmonic mu = 2.5 with gamma = 1 gives p L = 2.5 >= 2: undefined.
    let params = HolderParams::new(1.0, 1.0).unwrap();
    let b = theorem_bounds(
        &params,
        1.0,
        1.0,
        &StepSchedule::Harmonic { mu: 2.5 },
        10_000,
    )
    .unwrap();
    assert!(b.norm_bound.is_none());
    assert!(b.iterations_for_target(1e-2).is_none());
}

#[test]
fn probe_gamma_single_halfspace_is_exact() {
    let h = Halfspace::new(DVector::from_vec(vec![1.0, 0.5]), 0.25).unwrap();
    let instance = Instance::custom(
        vec![ConvexBody::Halfspace(h)],
        DVector::from_vec(vec![2.0, 2.0]),
        9,
    )
    .unwrap();
    let (gamma_hat, c_hat) = probe_gamma(&instance, 50).unwrap();
    assert!((gamma_hat - 1.0).abs() < 1e-6);
    assert!((c_hat - 1.0).abs() < 1e-6);
}

/// Contraction certificate: near the intersection, one operator
/// application shrinks the distance by the factor implied by the fitted
/// error-bound parameters and the operator's decrease constant.
#[test]
fn contraction_certificate_holds() {
    use crate::instances::{gen_ellipsoid_instance, gen_polyhedron_instance};
    use crate::operators::{ExecMode, OperatorKind};
    use rand::Rng;

    for instance in [
        gen_ellipsoid_instance(4, 4, 1.0, 71).unwrap(),
        gen_polyhedron_instance(3, 4, 3, 0.5, 72).unwrap(),
    ] {
        let (gamma_hat, c_hat) = probe_gamma(&instance, 50).unwrap();
        let params = HolderParams::new(gamma_hat, c_hat.max(1.0)).unwrap();
        let lambda = params.lambda();
        let mut rng = crate::testutil::rng(instance.seed ^ 0x77);
        let mut checked = 0;
        let mut attempts = 0;
        while checked < 200 && attempts < 4000 {
            attempts += 1;
            // Samples in a neighborhood of S: small shifts off feasible
            // points.
            let raw = crate::testutil::rand_point(&mut rng, instance.dim(), 2.0);
            let base = crate::testutil::feasible_point(&instance.bodies, &raw, 1e-12, 4000).unwrap();
            let dir = crate::testutil::rand_point(&mut rng, instance.dim(), 1.0);
            if dir.norm() < 1e-6 {
                continue;
            }
            let z = &base + &dir * (rng.random_range(1e-3..0.1f64) / dir.norm());
            let dist_z = estimate_distance_to_s(&instance, &z, 1e-7).unwrap().value;
            if dist_z <= 1e-9 || dist_z > 0.1 * (1.0 + instance.anchor.norm()) {
                continue;
            }
            for (kind, c0) in [
                (OperatorKind::Map, 1.0 / instance.num_sets() as f64),
                (OperatorKind::ThreePm, 1.0),
            ] {
                let tau = params.tau(c0);
                let out = kind.apply(&instance.bodies, &z, ExecMode::Serial).unwrap().output;
                let dist_t = estimate_distance_to_s(&instance, &out, 1e-7).unwrap().value;
                let bound = dist_z * (1.0 - tau * dist_z.powf(lambda));
                assert!(
                    dist_t <= bound + 1e-6,
                    "{:?}: dist(Tz) = {dist_t:e} vs bound {bound:e}",
                    kind
                );
            }
            checked += 1;
        }
        assert!(checked >= 200, "only {checked} usable samples");
    }
}
