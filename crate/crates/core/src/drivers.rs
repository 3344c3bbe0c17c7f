//! Anchored iteration and the Dykstra baseline: stepsize schedules with
//! validity checks, stopping rules, per-iteration traces, and solve
//! reports.

use std::time::{Duration, Instant};

use nalgebra::DVector;

use crate::error::{BapError, Result};
use crate::geometry::{violation_delta, ConvexBody, DiagonalSubspace, Point};
use crate::instances::Instance;
use crate::operators::{ExecMode, OperatorKind};

/// Stepsize rule alpha_k for the anchored update. Values are clamped into
/// (0, 1): the raw rules hit 1 at k = 1 (and for small k when mu < 1).
#[derive(Debug, Clone, PartialEq)]
pub enum StepSchedule {
    /// alpha_k = 1/k.
    InvK,
    /// alpha_k = 1/sqrt(k).
    InvSqrtK,
    /// alpha_k = 1/(mu k), mu > 0.
    Harmonic { mu: f64 },
}

const ALPHA_CLAMP: f64 = 1.0 - 1e-12;

impl StepSchedule {
    pub fn alpha(&self, k: u64) -> f64 {
        debug_assert!(k >= 1);
        let kf = k as f64;
        let raw = match self {
            StepSchedule::InvK => 1.0 / kf,
            StepSchedule::InvSqrtK => 1.0 / kf.sqrt(),
            StepSchedule::Harmonic { mu } => 1.0 / (mu * kf),
        };
        raw.min(ALPHA_CLAMP)
    }

    pub fn label(&self) -> String {
        match self {
            StepSchedule::InvK => "inv_k".into(),
            StepSchedule::InvSqrtK => "inv_sqrt_k".into(),
            StepSchedule::Harmonic { mu } => format!("harmonic:{mu}"),
        }
    }

    /// Parse "inv_k", "inv_sqrt_k", or "harmonic:<mu>".
    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "inv_k" => Ok(StepSchedule::InvK),
            "inv_sqrt_k" => Ok(StepSchedule::InvSqrtK),
            other => {
                if let Some(mu) = other.strip_prefix("harmonic:") {
                    let mu: f64 = mu
                        .parse()
                        .map_err(|_| BapError::InvalidArgument(format!("bad mu in '{other}'")))?;
                    if !(mu > 0.0 && mu.is_finite()) {
                        return Err(BapError::InvalidArgument("mu must be positive".into()));
                    }
                    Ok(StepSchedule::Harmonic { mu })
                } else {
                    Err(BapError::InvalidArgument(format!(
                        "unknown schedule '{other}' (expected inv_k, inv_sqrt_k, harmonic:<mu>)"
                    )))
                }
            }
        }
    }
}

/// Pass/fail record for one stepsize condition.
#[derive(Debug, Clone)]
pub struct ConditionReport {
    pub name: &'static str,
    pub pass: bool,
    /// Witness (k, value) on failure.
    pub witness: Option<(u64, f64)>,
    pub detail: String,
}

/// Report of the four stepsize conditions checked over a finite horizon.
#[derive(Debug, Clone)]
pub struct ScheduleValidation {
    pub horizon: u64,
    pub conditions: Vec<ConditionReport>,
}

impl ScheduleValidation {
    pub fn all_pass(&self) -> bool {
        self.conditions.iter().all(|c| c.pass)
    }
}

/// Check the schedule over k <= horizon: values in (0,1), decay toward
/// zero, tail sup of the reciprocal difference below 2, and the
/// consecutive ratio tending to one.
pub fn validate_schedule(schedule: &StepSchedule, horizon: u64) -> Result<ScheduleValidation> {
    if horizon < 100 {
        return Err(BapError::InvalidArgument(
            "validation horizon must be at least 100".into(),
        ));
    }
    let mut conditions = Vec::with_capacity(4);

    // (i) alpha_k in (0, 1).
    let mut witness = None;
    for k in 1..=horizon {
        let a = schedule.alpha(k);
        if !(a > 0.0 && a < 1.0) {
            witness = Some((k, a));
            break;
        }
    }
    conditions.push(ConditionReport {
        name: "range",
        pass: witness.is_none(),
        witness,
        detail: "alpha_k in (0,1)".into(),
    });

    // (ii) decreasing toward zero.
    let mut witness = None;
    for k in 1..horizon {
        let (a, b) = (schedule.alpha(k), schedule.alpha(k + 1));
        if b > a + 1e-15 {
            witness = Some((k, b - a));
            break;
        }
    }
    let half = schedule.alpha(horizon / 2);
    let last = schedule.alpha(horizon);
    if witness.is_none() && last > 0.9 * half {
        witness = Some((horizon, last / half));
    }
    conditions.push(ConditionReport {
        name: "decay",
        pass: witness.is_none(),
        witness,
        detail: "alpha nonincreasing and tending to zero".into(),
    });

    // (iii) tail sup of 1/alpha_{k+1} - 1/alpha_k below 2.
    let mut sup = f64::NEG_INFINITY;
    let mut sup_k = horizon / 2;
    for k in horizon / 2..horizon {
        let d = 1.0 / schedule.alpha(k + 1) - 1.0 / schedule.alpha(k);
        if d > sup {
            sup = d;
            sup_k = k;
        }
    }
    let pass = sup < 2.0;
    conditions.push(ConditionReport {
        name: "reciprocal_difference",
        pass,
        witness: if pass { None } else { Some((sup_k, sup)) },
        detail: format!("tail sup of 1/alpha_(k+1) - 1/alpha_k = {sup:.6}"),
    });

    // (iv) alpha_k / alpha_{k+1} -> 1.
    let threshold = (10.0 / horizon as f64).max(1e-2);
    let mut worst = 0.0f64;
    let mut worst_k = horizon / 2;
    for k in horizon / 2..horizon {
        let r = (schedule.alpha(k) / schedule.alpha(k + 1) - 1.0).abs();
        if r > worst {
            worst = r;
            worst_k = k;
        }
    }
    let pass = worst <= threshold;
    conditions.push(ConditionReport {
        name: "ratio",
        pass,
        witness: if pass { None } else { Some((worst_k, worst)) },
        detail: format!(
            "tail max |alpha_k/alpha_(k+1) - 1| = {worst:.2e} (threshold {threshold:.2e})"
        ),
    });

    Ok(ScheduleValidation {
        horizon,
        conditions,
    })
}

/// Stopping rule. Convergence uses the norm error against the reference
/// solution when one is present and the feasibility violation otherwise;
/// at least one of the two hard limits must be set.
#[derive(Debug, Clone)]
pub struct StopRule {
    pub err_tol: Option<f64>,
    pub feas_tol: Option<f64>,
    pub max_iters: Option<u64>,
    pub wall_limit: Option<Duration>,
}

impl StopRule {
    pub fn new(
        err_tol: Option<f64>,
        feas_tol: Option<f64>,
        max_iters: Option<u64>,
        wall_limit: Option<Duration>,
    ) -> Result<Self> {
        if max_iters.is_none() && wall_limit.is_none() {
            return Err(BapError::InvalidArgument(
                "stop rule needs an iteration or wall-clock limit".into(),
            ));
        }
        Ok(StopRule {
            err_tol,
            feas_tol,
            max_iters,
            wall_limit,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    IterLimit,
    TimeLimit,
    Error,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Converged => "CONVERGED",
            SolveStatus::IterLimit => "ITER_LIMIT",
            SolveStatus::TimeLimit => "TIME_LIMIT",
            SolveStatus::Error => "ERROR",
        };
        f.write_str(s)
    }
}

/// Scalar metrics recorded at every iteration.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub k: u64,
    /// Stepsize used to produce iterate k (0 for k = 0 and for Dykstra).
    pub alpha: f64,
    /// Maximal constraint violation of iterate k.
    pub delta: f64,
    /// Norm error against the reference solution, when known.
    pub err: Option<f64>,
    /// Cumulative wall time at the end of iteration k.
    pub time_s: f64,
    /// Measured linearization accuracy (A3PM).
    pub epsilon_hat: Option<f64>,
    pub degenerate_circumcenter: bool,
}

/// Full solve trace. Scalars are stored every iteration; full iterates are
/// thinned beyond 10^4 iterations (every ceil(k/1000)-th) to bound memory.
#[derive(Debug, Clone, Default)]
pub struct IterationTrace {
    pub rows: Vec<TraceRow>,
    pub iterates: Vec<(u64, Point)>,
    pub final_iterate: Point,
}

fn store_iterate_at(k: u64) -> bool {
    if k <= 10_000 {
        return true;
    }
    let stride = k.div_ceil(1000);
    k.is_multiple_of(stride)
}

/// Terminal summary matching the benchmark table columns.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub method: String,
    pub num_sets: usize,
    pub dim: usize,
    pub rows_per_set: Option<usize>,
    pub schedule: Option<String>,
    pub iterations: u64,
    pub wall_time_s: f64,
    pub final_err: Option<f64>,
    pub final_delta: f64,
    pub status: SolveStatus,
    pub error: Option<String>,
}

struct Monitor<'a> {
    instance: &'a Instance,
    stop: &'a StopRule,
    start: Instant,
    trace: IterationTrace,
}

enum Verdict {
    Continue,
    Stop(SolveStatus),
}

impl<'a> Monitor<'a> {
    fn new(instance: &'a Instance, stop: &'a StopRule) -> Self {
        Monitor {
            instance,
            stop,
            start: Instant::now(),
            trace: IterationTrace::default(),
        }
    }

    /// Record iterate k and decide whether to keep going.
    /// `feasibility_gate` must be true for the feasibility-mode stop to
    /// fire; solvers whose feasible iterates can still be far from the
    /// best approximation (Dykstra mid-stall) pass a stationarity signal.
    fn observe(
        &mut self,
        k: u64,
        alpha: f64,
        x: &Point,
        epsilon_hat: Option<f64>,
        degenerate: bool,
        feasibility_gate: bool,
    ) -> Result<Verdict> {
        let delta = violation_delta(&self.instance.bodies, x)?;
        let err = self
            .instance
            .reference
            .as_ref()
            .map(|r| (x - &r.point).norm());
        self.trace.rows.push(TraceRow {
            k,
            alpha,
            delta,
            err,
            time_s: self.start.elapsed().as_secs_f64(),
            epsilon_hat,
            degenerate_circumcenter: degenerate,
        });
        if store_iterate_at(k) {
            self.trace.iterates.push((k, x.clone()));
        }
        self.trace.final_iterate = x.clone();

        let converged = match (err, self.stop.err_tol) {
            (Some(e), Some(tol)) => e <= tol,
            _ => match self.stop.feas_tol {
                Some(ft) => delta <= ft && feasibility_gate,
                None => false,
            },
        };
        if converged {
            return Ok(Verdict::Stop(SolveStatus::Converged));
        }
        if let Some(max) = self.stop.max_iters {
            if k >= max {
                return Ok(Verdict::Stop(SolveStatus::IterLimit));
            }
        }
        if let Some(limit) = self.stop.wall_limit {
            if self.start.elapsed() >= limit {
                return Ok(Verdict::Stop(SolveStatus::TimeLimit));
            }
        }
        Ok(Verdict::Continue)
    }

    fn report(
        self,
        method: String,
        schedule: Option<String>,
        status: SolveStatus,
        error: Option<String>,
    ) -> (SolveReport, IterationTrace) {
        let last = self.trace.rows.last();
        let report = SolveReport {
            method,
            num_sets: self.instance.num_sets(),
            dim: self.instance.dim(),
            rows_per_set: self.instance.rows_per_set,
            schedule,
            iterations: last.map_or(0, |r| r.k),
            wall_time_s: self.start.elapsed().as_secs_f64(),
            final_err: last.and_then(|r| r.err),
            final_delta: last.map_or(f64::NAN, |r| r.delta),
            status,
            error,
        };
        (report, self.trace)
    }
}

/// Anchored iteration x_{k+1} = alpha_k x_0 + (1 - alpha_k) T(x_k).
///
/// Iterate 0 is the anchor itself; iterate k is produced by k operator
/// applications, blending with alpha_k. The product-space operator is
/// embedded at z_0 = (x_0, ..., x_0) and its iterates are reported through
/// the block average.
pub fn halpern_solve(
    instance: &Instance,
    kind: &OperatorKind,
    schedule: &StepSchedule,
    stop: &StopRule,
    exec: ExecMode,
) -> (SolveReport, IterationTrace) {
    let method = format!("halpern_{}", kind.label());
    let mut monitor = Monitor::new(instance, stop);

    let product_diag = if kind.is_product_space() {
        match DiagonalSubspace::new(instance.num_sets(), instance.dim()) {
            Ok(d) => Some(d),
            Err(e) => {
                return monitor.report(
                    method,
                    Some(schedule.label()),
                    SolveStatus::Error,
                    Some(e.to_string()),
                );
            }
        }
    } else {
        None
    };

    match monitor.observe(0, 0.0, &instance.anchor, None, false, true) {
        Ok(Verdict::Stop(status)) => {
            return monitor.report(method, Some(schedule.label()), status, None);
        }
        Ok(Verdict::Continue) => {}
        Err(e) => {
            return monitor.report(
                method,
                Some(schedule.label()),
                SolveStatus::Error,
                Some(e.to_string()),
            );
        }
    }

    // For the product-space operator the iterate z_k stays in the diagonal
    // D (the operator maps D into D and the blend preserves it), so it is
    // represented by its block x_k and re-embedded each step. This keeps
    // the diagonal contract exact instead of accumulating rounding drift
    // across iterations.
    let step = |x: &Point| -> Result<(Point, Option<f64>, bool)> {
        match &product_diag {
            Some(diag) => {
                let eval = kind.apply(&instance.bodies, &diag.broadcast(x)?, exec)?;
                Ok((
                    diag.block_average(&eval.output)?,
                    eval.measured_epsilon,
                    eval.degenerate_circumcenter,
                ))
            }
            None => {
                let eval = kind.apply(&instance.bodies, x, exec)?;
                Ok((
                    eval.output,
                    eval.measured_epsilon,
                    eval.degenerate_circumcenter,
                ))
            }
        }
    };

    let mut x = instance.anchor.clone();
    let mut k = 0u64;
    loop {
        k += 1;
        let alpha = schedule.alpha(k);
        let (t_of_x, epsilon_hat, degenerate) = match step(&x) {
            Ok(parts) => parts,
            Err(e) => {
                return monitor.report(
                    method,
                    Some(schedule.label()),
                    SolveStatus::Error,
                    Some(e.to_string()),
                );
            }
        };
        x = &instance.anchor * alpha + t_of_x * (1.0 - alpha);
        match monitor.observe(k, alpha, &x, epsilon_hat, degenerate, true) {
            Ok(Verdict::Continue) => {}
            Ok(Verdict::Stop(status)) => {
                return monitor.report(method, Some(schedule.label()), status, None);
            }
            Err(e) => {
                return monitor.report(
                    method,
                    Some(schedule.label()),
                    SolveStatus::Error,
                    Some(e.to_string()),
                );
            }
        }
    }
}

/// Dykstra's cyclic correction recursion.
///
/// Corrections start at zero, so the first cycle coincides with one sweep
/// of cyclic projections.
#[derive(Debug, Clone)]
pub struct DykstraState {
    current: Point,
    corrections: Vec<Point>,
}

impl DykstraState {
    pub fn new(anchor: &Point, num_sets: usize) -> Self {
        DykstraState {
            current: anchor.clone(),
            corrections: vec![DVector::zeros(anchor.len()); num_sets],
        }
    }

    /// One full cycle over all sets; returns the cycle endpoint.
    pub fn cycle(&mut self, bodies: &[ConvexBody]) -> Result<&Point> {
        for (i, body) in bodies.iter().enumerate() {
            let shifted = &self.current - &self.corrections[i];
            let projected = body.project(&shifted)?;
            self.corrections[i] = &projected - &shifted;
            self.current = projected;
        }
        Ok(&self.current)
    }

    pub fn current(&self) -> &Point {
        &self.current
    }

    pub fn corrections(&self) -> &[Point] {
        &self.corrections
    }
}

/// Dykstra's algorithm with the same stopping semantics as the anchored
/// solver; one reported iteration is one full cycle over all sets.
pub fn dykstra_solve(instance: &Instance, stop: &StopRule) -> (SolveReport, IterationTrace) {
    let method = "dykstra".to_string();
    let mut monitor = Monitor::new(instance, stop);
    match monitor.observe(0, 0.0, &instance.anchor, None, false, true) {
        Ok(Verdict::Stop(status)) => return monitor.report(method, None, status, None),
        Ok(Verdict::Continue) => {}
        Err(e) => return monitor.report(method, None, SolveStatus::Error, Some(e.to_string())),
    }

    let mut state = DykstraState::new(&instance.anchor, instance.num_sets());
    let mut prev_x = instance.anchor.clone();
    let mut prev_corrections = state.corrections().to_vec();
    let mut k = 0u64;
    loop {
        k += 1;
        let x = match state.cycle(&instance.bodies) {
            Ok(x) => x.clone(),
            Err(e) => return monitor.report(method, None, SolveStatus::Error, Some(e.to_string())),
        };
        // Feasible cycle endpoints occur long before convergence (the
        // iterate can sit feasible through a stall while the corrections
        // keep drifting), so the feasibility-mode stop additionally
        // requires the full state to be stationary at the same tolerance.
        let mut movement = (&x - &prev_x).norm();
        for (old, new) in prev_corrections.iter().zip(state.corrections()) {
            movement = movement.max((old - new).norm());
        }
        prev_x = x.clone();
        prev_corrections.clone_from_slice(state.corrections());
        let stationary = stop.feas_tol.is_none_or(|ft| movement <= ft);
        match monitor.observe(k, 0.0, &x, None, false, stationary) {
            Ok(Verdict::Continue) => {}
            Ok(Verdict::Stop(status)) => return monitor.report(method, None, status, None),
            Err(e) => return monitor.report(method, None, SolveStatus::Error, Some(e.to_string())),
        }
    }
}
