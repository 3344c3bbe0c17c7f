//! Empirical verification of the quantitative theory: Hölder error-bound
//! parameters, tail-ratio rate estimates, the nonlinear recursion harness,
//! and the closed-form bound calculators.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::drivers::StepSchedule;
use crate::error::{BapError, Result};
use crate::geometry::{violation_delta, Point};
use crate::instances::{reference_projection, Instance};

/// Hölder error-bound parameters: dist(z, S) <= c * delta(z)^gamma near S.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderParams {
    pub gamma: f64,
    pub c: f64,
}

impl HolderParams {
    pub fn new(gamma: f64, c: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(BapError::InvalidArgument("gamma must lie in (0, 1]".into()));
        }
        if !(c >= 1.0 && c.is_finite()) {
            return Err(BapError::InvalidArgument("c must be at least 1".into()));
        }
        Ok(HolderParams { gamma, c })
    }

    /// lambda = 2 (1/gamma - 1).
    pub fn lambda(&self) -> f64 {
        2.0 * (1.0 / self.gamma - 1.0)
    }

    /// p = 1 / (1 + lambda) = gamma / (2 - gamma).
    pub fn p(&self) -> f64 {
        self.gamma / (2.0 - self.gamma)
    }

    /// tau = c0 / (2 c^{2/gamma}); lies in (0, 1] for c0 <= 1, c >= 1.
    pub fn tau(&self, c0: f64) -> f64 {
        c0 / (2.0 * self.c.powf(2.0 / self.gamma))
    }
}

/// Distance to the intersection, estimated through the reference oracle.
#[derive(Debug, Clone, Copy)]
pub struct DistanceEstimate {
    pub value: f64,
    pub certified_tol: f64,
}

/// dist(x, S) via the dual-route oracle anchored at x.
pub fn estimate_distance_to_s(
    instance: &Instance,
    x: &Point,
    tol: f64,
) -> Result<DistanceEstimate> {
    let mut probe = instance.clone();
    probe.anchor = x.clone();
    probe.reference = None;
    let reference = reference_projection(&probe, tol)?;
    Ok(DistanceEstimate {
        value: (x - &reference.point).norm(),
        certified_tol: reference.certified_tol,
    })
}

/// Tail-ratio estimate of a series against alpha_k^exponent.
#[derive(Debug, Clone)]
pub struct RateEstimate {
    pub exponent: f64,
    pub k_lo: u64,
    pub k_hi: u64,
    /// sup over the tail of series_k / alpha_k^exponent.
    pub tail_sup: f64,
    /// Least-squares slope of log(series) against log(alpha) over the tail
    /// (None when the tail is identically zero).
    pub slope: Option<f64>,
}

/// Fit the decay of `series` (pairs (k, value), k >= 1) against the
/// schedule over the trailing `tail_fraction` of iterations.
pub fn fit_rate(
    series: &[(u64, f64)],
    schedule: &StepSchedule,
    exponent: f64,
    tail_fraction: f64,
) -> Result<RateEstimate> {
    if !(exponent > 0.0) {
        return Err(BapError::InvalidArgument(
            "exponent must be positive".into(),
        ));
    }
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(BapError::InvalidArgument(
            "tail fraction must lie in (0, 1]".into(),
        ));
    }
    let k_hi = series.iter().map(|&(k, _)| k).max().unwrap_or(0);
    if k_hi == 0 {
        return Err(BapError::InvalidArgument(
            "series has no entries with k >= 1".into(),
        ));
    }
    let k_lo = ((k_hi as f64) * (1.0 - tail_fraction)).ceil().max(1.0) as u64;

    let mut tail_sup = 0.0f64;
    let mut logs: Vec<(f64, f64)> = Vec::new();
    for &(k, v) in series {
        if k < k_lo || k == 0 {
            continue;
        }
        let alpha = schedule.alpha(k);
        tail_sup = tail_sup.max(v / alpha.powf(exponent));
        if v > 0.0 {
            logs.push((alpha.ln(), v.ln()));
        }
    }
    let slope = if logs.len() >= 2 {
        let n = logs.len() as f64;
        let sx: f64 = logs.iter().map(|p| p.0).sum();
        let sy: f64 = logs.iter().map(|p| p.1).sum();
        let sxx: f64 = logs.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = logs.iter().map(|p| p.0 * p.1).sum();
        let denom = n * sxx - sx * sx;
        if denom.abs() > 1e-300 {
            Some((n * sxy - sx * sy) / denom)
        } else {
            None
        }
    } else {
        None
    };
    Ok(RateEstimate {
        exponent,
        k_lo,
        k_hi,
        tail_sup,
        slope,
    })
}

/// Report of the nonlinear recursion harness.
#[derive(Debug, Clone)]
pub struct OrderrecReport {
    /// The asymptotic bound (M/tau)^{1/(1+lambda)}.
    pub bound: f64,
    /// Max relative drift |alpha_k M - tau beta_k^{1+lambda}| / (alpha_k M)
    /// along the extremal sequence.
    pub extremal_max_rel_drift: f64,
    /// sup over the tail of beta_k / alpha_k^{1/(1+lambda)} for the
    /// simulated recursion.
    pub tail_sup_ratio: f64,
    /// Ratio at the final iteration.
    pub final_ratio: f64,
    pub horizon: u64,
}

/// Exercise the recursion beta_{k+1} <= alpha_k M + beta_k (1 - tau beta_k^lambda):
/// (a) the extremal sequence beta_k = (M/tau)^{1/(1+lambda)} alpha_k^{1/(1+lambda)}
/// must cancel the drift term exactly; (b) the recursion run as an equality
/// from `beta1` must approach the same tail ratio. Oversized starts make
/// the contraction factor negative; it is floored at zero, which collapses
/// the sequence onto the drift term after one step.
pub fn check_orderrec(
    m_const: f64,
    tau: f64,
    lambda: f64,
    schedule: &StepSchedule,
    horizon: u64,
    beta1: f64,
) -> Result<OrderrecReport> {
    if !(m_const > 0.0) {
        return Err(BapError::InvalidArgument("M must be positive".into()));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(BapError::InvalidArgument("tau must lie in (0, 1]".into()));
    }
    if !(lambda >= 0.0) {
        return Err(BapError::InvalidArgument(
            "lambda must be nonnegative".into(),
        ));
    }
    if horizon < 1_000 {
        return Err(BapError::InvalidArgument(
            "horizon must be at least 1000".into(),
        ));
    }
    if !(beta1 >= 0.0) {
        return Err(BapError::InvalidArgument(
            "beta1 must be nonnegative".into(),
        ));
    }
    let p = 1.0 / (1.0 + lambda);
    let bound = (m_const / tau).powf(p);

    let mut extremal_max_rel_drift = 0.0f64;
    for k in 1..=horizon {
        let alpha = schedule.alpha(k);
        let beta = bound * alpha.powf(p);
        let drift = alpha * m_const - tau * beta.powf(1.0 + lambda);
        extremal_max_rel_drift = extremal_max_rel_drift.max(drift.abs() / (alpha * m_const));
    }

    let mut beta = beta1;
    let mut tail_sup_ratio = 0.0f64;
    let mut final_ratio = 0.0f64;
    for k in 1..=horizon {
        let alpha = schedule.alpha(k);
        let ratio = beta / alpha.powf(p);
        if k >= horizon / 2 {
            tail_sup_ratio = tail_sup_ratio.max(ratio);
        }
        final_ratio = ratio;
        let factor = (1.0 - tau * beta.powf(lambda)).max(0.0);
        beta = alpha * m_const + beta * factor;
    }

    Ok(OrderrecReport {
        bound,
        extremal_max_rel_drift,
        tail_sup_ratio,
        final_ratio,
        horizon,
    })
}

/// Closed-form constants of the rate statements.
#[derive(Debug, Clone)]
pub struct TheoremBounds {
    /// limsup bound on dist(x_k, S) / alpha_k^{gamma/(2-gamma)}.
    pub distance_bound: f64,
    /// limsup bound on ||x_k - s*|| / alpha_k^{gamma/(4-2gamma)}; None when
    /// p L >= 2 leaves it undefined.
    pub norm_bound: Option<f64>,
    /// Measured tail limsup of 1/alpha_{k+1} - 1/alpha_k.
    pub reciprocal_difference_limsup: f64,
    /// Iteration-complexity exponent 4/gamma - 2.
    pub complexity_exponent: f64,
    /// Harmonic-family parameter 2 - gamma minimizing the asymptotic
    /// constant.
    pub optimal_harmonic_mu: f64,
}

impl TheoremBounds {
    /// Iterations predicted to reach a target norm error under
    /// alpha_k = 1/k: (bound / eps)^{4/gamma - 2}.
    pub fn iterations_for_target(&self, eps: f64) -> Option<f64> {
        self.norm_bound
            .map(|b| (b / eps).powf(self.complexity_exponent))
    }
}

/// Evaluate the rate constants for given Hölder parameters, decrease
/// constant c0, initial distance d0, and schedule.
pub fn theorem_bounds(
    params: &HolderParams,
    c0: f64,
    d0: f64,
    schedule: &StepSchedule,
    horizon: u64,
) -> Result<TheoremBounds> {
    if !(c0 > 0.0 && c0 <= 1.0) {
        return Err(BapError::InvalidArgument("c0 must lie in (0, 1]".into()));
    }
    if !(d0 >= 0.0) {
        return Err(BapError::InvalidArgument("d0 must be nonnegative".into()));
    }
    if horizon < 100 {
        return Err(BapError::InvalidArgument(
            "horizon must be at least 100".into(),
        ));
    }
    let gamma = params.gamma;
    let c = params.c;

    let mut l = f64::NEG_INFINITY;
    for k in horizon / 2..horizon {
        l = l.max(1.0 / schedule.alpha(k + 1) - 1.0 / schedule.alpha(k));
    }

    let distance_bound = (2.0 * c.powf(2.0 / gamma) * d0 / c0).powf(gamma / (2.0 - gamma));
    let p = params.p();
    let norm_bound = if p * l < 2.0 {
        let prefactor = c0.powf(-gamma / (4.0 - 2.0 * gamma)) / (2.0 - p * l).sqrt();
        Some(prefactor * (2.0 * c * d0).powf(1.0 / (2.0 - gamma)))
    } else {
        None
    };
    Ok(TheoremBounds {
        distance_bound,
        norm_bound,
        reciprocal_difference_limsup: l,
        complexity_exponent: 4.0 / gamma - 2.0,
        optimal_harmonic_mu: 2.0 - gamma,
    })
}

/// Empirical Hölder exponent fit: sample points near S, regress
/// log dist(z, S) on log delta(z), and report the clipped slope together
/// with the smallest constant making the bound hold on the samples.
pub fn probe_gamma(instance: &Instance, samples: usize) -> Result<(f64, f64)> {
    if samples < 50 {
        return Err(BapError::InvalidArgument(
            "gamma probe needs at least 50 samples".into(),
        ));
    }
    let n = instance.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(instance.seed ^ 0x67e5_a1b3_9d24_77c1);
    let scale = 1.0 + instance.anchor.norm();

    // Feasible base points: reference projections of random points.
    let num_bases = (samples / 6).clamp(4, 12);
    let mut bases: Vec<Point> = Vec::with_capacity(num_bases);
    for _ in 0..num_bases {
        let raw = Point::from_fn(n, |_, _| rng.random_range(-scale..scale));
        let mut probe = instance.clone();
        probe.anchor = raw;
        probe.reference = None;
        bases.push(reference_projection(&probe, 1e-7)?.point);
    }

    let mut logs: Vec<(f64, f64)> = Vec::new();
    let mut pairs: Vec<(f64, f64)> = Vec::new();
    let mut attempts = 0usize;
    while pairs.len() < samples && attempts < 40 * samples {
        attempts += 1;
        let base = &bases[attempts % num_bases];
        let dir = {
            let d = Point::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let norm = d.norm();
            if norm < 1e-9 {
                continue;
            }
            d / norm
        };
        // Radii log-uniform over [1e-4, 1e-1].
        let r = 10f64.powf(rng.random_range(-4.0..-1.0));
        let z = base + dir * r;
        let delta = violation_delta(&instance.bodies, &z)?;
        if delta <= 1e-12 {
            continue;
        }
        let dist = estimate_distance_to_s(instance, &z, 1e-7)?.value;
        if dist <= 1e-12 {
            continue;
        }
        logs.push((delta.ln(), dist.ln()));
        pairs.push((delta, dist));
    }
    if pairs.is_empty() {
        return Err(BapError::InvalidArgument(
            "all probe samples were feasible; cannot fit an exponent".into(),
        ));
    }

    let ns = logs.len() as f64;
    let sx: f64 = logs.iter().map(|p| p.0).sum();
    let sy: f64 = logs.iter().map(|p| p.1).sum();
    let sxx: f64 = logs.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = logs.iter().map(|p| p.0 * p.1).sum();
    let denom = ns * sxx - sx * sx;
    let slope = if denom.abs() > 1e-300 {
        (ns * sxy - sx * sy) / denom
    } else {
        1.0
    };
    let gamma_hat = slope.clamp(1e-3, 1.0);
    let c_hat = pairs
        .iter()
        .map(|&(delta, dist)| dist / delta.powf(gamma_hat))
        .fold(1.0f64, f64::max);
    Ok((gamma_hat, c_hat))
}

#[cfg(test)]
mod tests;
