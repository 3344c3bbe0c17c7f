//! Benchmark runner, single-solve and rate-analysis entry points, and the
//! CSV writers behind the `bap` binary.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::mpsc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    estimate_distance_to_s, fit_rate, probe_gamma, theorem_bounds, HolderParams,
};
use crate::drivers::{
    dykstra_solve, halpern_solve, validate_schedule, IterationTrace, ScheduleValidation,
    SolveReport, SolveStatus, StepSchedule, StopRule,
};
use crate::error::{BapError, Result};
use crate::instances::{
    gen_ellipsoid_instance, gen_polyhedron_instance, load_instance, Family, Instance,
};
use crate::operators::{ExecMode, OperatorKind, SccrmControl};

/// Benchmark CSV schema, v1. Column set and order are frozen; tests pin
/// this string.
pub const BENCH_CSV_HEADER: &str =
    "method,family,m,n,k,theta,schedule,seed,iterations,wall_time_s,final_err,final_delta,status";

/// Trace CSV schema, v1.
pub const TRACE_CSV_HEADER: &str = "k,alpha,delta,err,time_s";

/// Rate-report CSV schema, v1.
pub const RATES_CSV_HEADER: &str =
    "instance,method,series,exponent,tail_sup,theoretical_bound,slope";

pub const PLAN_VERSION: u32 = 1;

/// A solving method: one of the anchored operators or the Dykstra
/// baseline.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Halpern(OperatorKind),
    Dykstra,
}

impl Method {
    pub fn parse(name: &str) -> Result<Method> {
        Ok(match name {
            "halpern_map" => Method::Halpern(OperatorKind::Map),
            "halpern_cimmino" => Method::Halpern(OperatorKind::Cimmino),
            "halpern_3pm" => Method::Halpern(OperatorKind::ThreePm),
            "halpern_a3pm" => Method::Halpern(OperatorKind::A3pm),
            "halpern_sccrm" => Method::Halpern(OperatorKind::Sccrm(SccrmControl::Consecutive)),
            "halpern_crm" => Method::Halpern(OperatorKind::CrmProduct),
            "dykstra" => Method::Dykstra,
            other => {
                return Err(BapError::InvalidArgument(format!(
                    "unknown method '{other}' (expected halpern_map, halpern_cimmino, halpern_3pm, \
                     halpern_a3pm, halpern_sccrm, halpern_crm, dykstra)"
                )))
            }
        })
    }

    pub fn label(&self) -> String {
        match self {
            Method::Halpern(kind) => format!("halpern_{}", kind.label()),
            Method::Dykstra => "dykstra".into(),
        }
    }

    /// Dykstra has no stepsize schedule.
    pub fn uses_schedule(&self) -> bool {
        matches!(self, Method::Halpern(_))
    }
}

/// One instance cell of a benchmark grid.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PlanCell {
    pub family: String,
    pub m: usize,
    pub n: usize,
    pub k: Option<usize>,
    pub theta: Option<f64>,
    pub alpha_spread: Option<f64>,
    pub seed: u64,
}

/// Declarative benchmark: cells x methods x schedules, all seeds explicit.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BenchmarkPlan {
    pub version: u32,
    pub err_tol: f64,
    pub feas_tol: f64,
    pub max_iters: u64,
    pub time_limit_s: f64,
    pub oracle_tol: f64,
    /// Write 0.000 in the wall-time column; lets byte-level reproducibility
    /// checks cover the full file.
    pub redact_timing: bool,
    pub methods: Vec<String>,
    pub schedules: Vec<String>,
    pub cells: Vec<PlanCell>,
}

pub const ALL_METHODS: [&str; 7] = [
    "halpern_a3pm",
    "halpern_3pm",
    "halpern_map",
    "halpern_cimmino",
    "halpern_sccrm",
    "halpern_crm",
    "dykstra",
];

impl BenchmarkPlan {
    pub fn validate(&self) -> Result<()> {
        if self.version != PLAN_VERSION {
            return Err(BapError::SchemaVersion {
                expected: PLAN_VERSION,
                got: self.version,
            });
        }
        if !(self.err_tol > 0.0) || !(self.feas_tol > 0.0) {
            return Err(BapError::InvalidArgument(
                "plan tolerances must be positive".into(),
            ));
        }
        for m in &self.methods {
            Method::parse(m)?;
        }
        for s in &self.schedules {
            StepSchedule::parse(s)?;
        }
        for cell in &self.cells {
            let family = Family::parse(&cell.family)?;
            match family {
                Family::Ellipsoid if cell.theta.is_none() => {
                    return Err(BapError::InvalidArgument(
                        "ellipsoid cell needs theta".into(),
                    ))
                }
                Family::Polyhedron if cell.k.is_none() || cell.alpha_spread.is_none() => {
                    return Err(BapError::InvalidArgument(
                        "polyhedron cell needs k and alpha_spread".into(),
                    ))
                }
                Family::Custom => {
                    return Err(BapError::InvalidArgument(
                        "benchmark cells must be generated families".into(),
                    ))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Grid shaped like the ellipsoid benchmark tables: four (m, n) cells
    /// at the given theta, both standard schedules, all methods.
    pub fn ellipsoid_preset(theta: f64, time_limit_s: f64) -> BenchmarkPlan {
        let cells = [(10, 10), (20, 10), (20, 20), (20, 100)]
            .iter()
            .enumerate()
            .map(|(i, &(m, n))| PlanCell {
                family: "ellipsoid".into(),
                m,
                n,
                k: None,
                theta: Some(theta),
                alpha_spread: None,
                seed: 1001 + i as u64,
            })
            .collect();
        BenchmarkPlan {
            version: PLAN_VERSION,
            err_tol: 1e-2,
            feas_tol: 1e-8,
            max_iters: 1_000_000,
            time_limit_s,
            oracle_tol: 1e-6,
            redact_timing: false,
            methods: ALL_METHODS.iter().map(|s| s.to_string()).collect(),
            schedules: vec!["inv_k".into(), "inv_sqrt_k".into()],
            cells,
        }
    }

    /// Grid shaped like the polyhedral benchmark table.
    pub fn polyhedron_preset(alpha_spread: f64, time_limit_s: f64) -> BenchmarkPlan {
        let cells = [
            (100, 100, 20),
            (20, 20, 20),
            (10, 10, 3),
            (10, 10, 5),
            (10, 10, 10),
            (10, 10, 20),
        ]
        .iter()
        .enumerate()
        .map(|(i, &(m, n, k))| PlanCell {
            family: "polyhedron".into(),
            m,
            n,
            k: Some(k),
            theta: None,
            alpha_spread: Some(alpha_spread),
            seed: 2001 + i as u64,
        })
        .collect();
        BenchmarkPlan {
            version: PLAN_VERSION,
            err_tol: 1e-2,
            feas_tol: 1e-8,
            max_iters: 1_000_000,
            time_limit_s,
            oracle_tol: 1e-6,
            redact_timing: false,
            methods: ALL_METHODS.iter().map(|s| s.to_string()).collect(),
            schedules: vec!["inv_k".into()],
            cells,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<BenchmarkPlan> {
        let text = std::fs::read_to_string(path)?;
        let plan: BenchmarkPlan = serde_json::from_str(&text)?;
        plan.validate()?;
        Ok(plan)
    }
}

fn generate_cell(cell: &PlanCell) -> Result<Instance> {
    match Family::parse(&cell.family)? {
        Family::Ellipsoid => {
            gen_ellipsoid_instance(cell.m, cell.n, cell.theta.expect("validated"), cell.seed)
        }
        Family::Polyhedron => gen_polyhedron_instance(
            cell.m,
            cell.n,
            cell.k.expect("validated"),
            cell.alpha_spread.expect("validated"),
            cell.seed,
        ),
        Family::Custom => unreachable!("rejected by validate"),
    }
}

fn fmt_opt_f64(v: Option<f64>) -> String {
    match v {
        Some(v) if v.is_finite() => format!("{v}"),
        _ => String::new(),
    }
}

fn fmt_opt_usize(v: Option<usize>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn bench_row(
    cell: &PlanCell,
    method_label: &str,
    schedule_label: &str,
    report: Option<&SolveReport>,
    redact_timing: bool,
) -> String {
    match report {
        Some(r) => {
            let wall = if redact_timing {
                "0.000".into()
            } else {
                format!("{:.3}", r.wall_time_s)
            };
            format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                method_label,
                cell.family,
                cell.m,
                cell.n,
                fmt_opt_usize(cell.k),
                fmt_opt_f64(cell.theta),
                schedule_label,
                cell.seed,
                r.iterations,
                wall,
                fmt_opt_f64(r.final_err),
                fmt_opt_f64(if r.final_delta.is_finite() {
                    Some(r.final_delta)
                } else {
                    None
                }),
                r.status
            )
        }
        None => format!(
            "{},{},{},{},{},{},{},{},0,0.000,,,{}",
            method_label,
            cell.family,
            cell.m,
            cell.n,
            fmt_opt_usize(cell.k),
            fmt_opt_f64(cell.theta),
            schedule_label,
            cell.seed,
            SolveStatus::Error
        ),
    }
}

fn run_method(
    instance: &Instance,
    method: &Method,
    schedule: &StepSchedule,
    stop: &StopRule,
    exec: ExecMode,
) -> SolveReport {
    match method {
        Method::Halpern(kind) => halpern_solve(instance, kind, schedule, stop, exec).0,
        Method::Dykstra => dykstra_solve(instance, stop).0,
    }
}

/// Execute a benchmark plan, streaming CSV rows to `out` in deterministic
/// (cell, method, schedule) order. Cells are prepared and solved on a
/// worker pool of `threads` threads (0 = rayon default); per-set
/// projections run in parallel exactly when more than one thread is
/// available, and iteration counts are independent of the thread count.
pub fn cmd_bench(plan: &BenchmarkPlan, out_path: &Path, threads: usize) -> Result<()> {
    plan.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| BapError::InvalidArgument(format!("thread pool: {e}")))?;
    let exec = if pool.current_num_threads() > 1 {
        ExecMode::Parallel
    } else {
        ExecMode::Serial
    };

    // Instances and references, one per cell.
    let prepared: Vec<Result<Instance>> = pool.install(|| {
        use rayon::prelude::*;
        plan.cells
            .par_iter()
            .map(|cell| {
                let mut instance = generate_cell(cell)?;
                instance.ensure_reference(plan.oracle_tol)?;
                Ok(instance)
            })
            .collect()
    });

    // Flattened task list in output order.
    struct Task<'a> {
        ord: usize,
        cell: &'a PlanCell,
        instance: &'a Result<Instance>,
        method: Method,
        method_label: String,
        schedule: Option<StepSchedule>,
        schedule_label: String,
    }
    let mut tasks: Vec<Task> = Vec::new();
    for (ci, cell) in plan.cells.iter().enumerate() {
        for method_name in &plan.methods {
            let method = Method::parse(method_name)?;
            if method.uses_schedule() {
                for schedule_name in &plan.schedules {
                    tasks.push(Task {
                        ord: tasks.len(),
                        cell,
                        instance: &prepared[ci],
                        method: method.clone(),
                        method_label: method_name.clone(),
                        schedule: Some(StepSchedule::parse(schedule_name)?),
                        schedule_label: schedule_name.clone(),
                    });
                }
            } else {
                tasks.push(Task {
                    ord: tasks.len(),
                    cell,
                    instance: &prepared[ci],
                    method: method.clone(),
                    method_label: method_name.clone(),
                    schedule: None,
                    schedule_label: "-".into(),
                });
            }
        }
    }

    let stop = StopRule::new(
        Some(plan.err_tol),
        Some(plan.feas_tol),
        Some(plan.max_iters),
        Some(Duration::from_secs_f64(plan.time_limit_s)),
    )?;

    let mut file = std::fs::File::create(out_path)?;
    writeln!(file, "{BENCH_CSV_HEADER}")?;

    let (tx, rx) = mpsc::channel::<(usize, String)>();
    let total = tasks.len();
    let writer = std::thread::spawn(move || -> std::io::Result<std::fs::File> {
        // Buffer out-of-order completions, flush the contiguous prefix.
        let mut pending: BTreeMap<usize, String> = BTreeMap::new();
        let mut next = 0usize;
        for (ord, row) in rx {
            pending.insert(ord, row);
            while let Some(row) = pending.remove(&next) {
                writeln!(file, "{row}")?;
                file.flush()?;
                next += 1;
            }
        }
        debug_assert_eq!(next, total);
        Ok(file)
    });

    pool.install(|| {
        use rayon::prelude::*;
        tasks.par_iter().for_each_with(tx, |tx, task| {
            let row = match task.instance {
                Ok(instance) => {
                    let schedule = task.schedule.clone().unwrap_or(StepSchedule::InvK);
                    let report = run_method(instance, &task.method, &schedule, &stop, exec);
                    bench_row(
                        task.cell,
                        &task.method_label,
                        &task.schedule_label,
                        Some(&report),
                        plan.redact_timing,
                    )
                }
                Err(_) => bench_row(
                    task.cell,
                    &task.method_label,
                    &task.schedule_label,
                    None,
                    plan.redact_timing,
                ),
            };
            // The writer thread outlives all senders.
            let _ = tx.send((task.ord, row));
        });
    });

    writer
        .join()
        .map_err(|_| BapError::InvalidArgument("benchmark writer thread panicked".into()))??;
    Ok(())
}

/// Options for a single solve.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub err_tol: f64,
    pub feas_tol: f64,
    pub max_iters: u64,
    pub time_limit_s: f64,
    pub threads: usize,
    /// Compute (and use) a reference solution when the file has none.
    pub ensure_reference: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            err_tol: 1e-2,
            feas_tol: 1e-8,
            max_iters: 1_000_000,
            time_limit_s: 60.0,
            threads: 1,
            ensure_reference: false,
        }
    }
}

/// Solve one instance file; optionally dump the full trace as CSV.
pub fn cmd_solve(
    instance_path: &Path,
    method: &Method,
    schedule: &StepSchedule,
    options: &SolveOptions,
    trace_path: Option<&Path>,
) -> Result<SolveReport> {
    let mut instance = load_instance(instance_path)?;
    if options.ensure_reference {
        instance.ensure_reference(1e-6)?;
    }
    let stop = StopRule::new(
        Some(options.err_tol),
        Some(options.feas_tol),
        Some(options.max_iters),
        Some(Duration::from_secs_f64(options.time_limit_s)),
    )?;
    let exec = if options.threads == 1 {
        ExecMode::Serial
    } else {
        ExecMode::Parallel
    };
    let (report, trace) = match method {
        Method::Halpern(kind) => {
            if options.threads > 1 || options.threads == 0 {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(options.threads)
                    .build()
                    .map_err(|e| BapError::InvalidArgument(format!("thread pool: {e}")))?;
                pool.install(|| halpern_solve(&instance, kind, schedule, &stop, exec))
            } else {
                halpern_solve(&instance, kind, schedule, &stop, exec)
            }
        }
        Method::Dykstra => dykstra_solve(&instance, &stop),
    };
    if let Some(path) = trace_path {
        write_trace_csv(&trace, path)?;
    }
    Ok(report)
}

pub fn write_trace_csv(trace: &IterationTrace, path: &Path) -> Result<()> {
    let mut out = String::from(TRACE_CSV_HEADER);
    out.push('\n');
    for row in &trace.rows {
        out.push_str(&format!(
            "{},{},{},{},{:.6}\n",
            row.k,
            row.alpha,
            row.delta,
            fmt_opt_f64(row.err),
            row.time_s
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Rate verification on one instance: run to a fixed horizon ignoring the
/// error stop, probe the Hölder exponent, and report tail ratios for the
/// feasibility-distance and norm-error series next to the closed-form
/// bounds.
pub fn cmd_rates(
    instance_path: &Path,
    method: &Method,
    schedule: &StepSchedule,
    horizon: u64,
    out_path: &Path,
) -> Result<()> {
    if horizon < 100 {
        return Err(BapError::InvalidArgument(
            "rate horizon must be at least 100".into(),
        ));
    }
    let instance = load_instance(instance_path)?;
    if instance.reference.is_none() {
        return Err(BapError::InvalidArgument(
            "rate analysis needs an instance with a reference solution".into(),
        ));
    }
    let rows = rate_rows(&instance, method, schedule, horizon)?;
    let mut out = String::from(RATES_CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row);
        out.push('\n');
    }
    std::fs::write(out_path, out)?;
    Ok(())
}

/// Build the rate-report rows (shared with tests).
pub fn rate_rows(
    instance: &Instance,
    method: &Method,
    schedule: &StepSchedule,
    horizon: u64,
) -> Result<Vec<String>> {
    let stop = StopRule::new(None, None, Some(horizon), None)?;
    let (report, trace) = match method {
        Method::Halpern(kind) => halpern_solve(instance, kind, schedule, &stop, ExecMode::Serial),
        Method::Dykstra => dykstra_solve(instance, &stop),
    };
    if report.status == SolveStatus::Error {
        return Err(BapError::InvalidArgument(format!(
            "rate run failed: {}",
            report.error.unwrap_or_default()
        )));
    }

    let (gamma_hat, c_hat) = probe_gamma(instance, 50)?;
    let e_dist = gamma_hat / (2.0 - gamma_hat);
    let e_norm = gamma_hat / (4.0 - 2.0 * gamma_hat);

    // Norm-error series from every recorded iteration.
    let err_series: Vec<(u64, f64)> = trace
        .rows
        .iter()
        .filter(|r| r.k >= 1)
        .filter_map(|r| r.err.map(|e| (r.k, e)))
        .collect();
    let err_fit = fit_rate(&err_series, schedule, e_norm, 0.5)?;

    // Distance series at log-spaced iterations (the oracle is expensive).
    let mut dist_series: Vec<(u64, f64)> = Vec::new();
    let targets: Vec<u64> = {
        let mut t = Vec::new();
        let mut k = 1.0f64;
        while (k as u64) <= horizon {
            t.push(k as u64);
            k = (k * 1.35).max(k + 1.0);
        }
        t
    };
    for &target in &targets {
        if let Some((k, x)) = trace
            .iterates
            .iter()
            .min_by_key(|(k, _)| k.abs_diff(target))
        {
            if *k >= 1 && dist_series.last().is_none_or(|(prev, _)| prev != k) {
                let d = estimate_distance_to_s(instance, x, 1e-7)?;
                dist_series.push((*k, d.value));
            }
        }
    }
    let dist_fit = fit_rate(&dist_series, schedule, e_dist, 0.5)?;

    let params = HolderParams::new(gamma_hat, c_hat.max(1.0))?;
    let c0 = match method {
        Method::Halpern(kind) => {
            let eps = trace
                .rows
                .iter()
                .filter_map(|r| r.epsilon_hat)
                .fold(0.0f64, f64::max);
            kind.decrease_constant(instance.num_sets(), Some(eps))
                .min(1.0)
        }
        Method::Dykstra => 1.0,
    };
    let d0 = estimate_distance_to_s(instance, &instance.anchor, 1e-7)?.value;
    let bounds = theorem_bounds(&params, c0, d0, schedule, horizon.max(1000))?;

    let id = instance.id();
    let label = method.label();
    Ok(vec![
        format!(
            "{id},{label},norm_err,{e_norm},{},{},{}",
            err_fit.tail_sup,
            fmt_opt_f64(bounds.norm_bound),
            fmt_opt_f64(err_fit.slope)
        ),
        format!(
            "{id},{label},dist_to_s,{e_dist},{},{},{}",
            dist_fit.tail_sup,
            fmt_opt_f64(Some(bounds.distance_bound)),
            fmt_opt_f64(dist_fit.slope)
        ),
    ])
}

/// Schedule validation as a printable report.
pub fn cmd_schedule(schedule: &StepSchedule, horizon: u64) -> Result<(ScheduleValidation, String)> {
    let v = validate_schedule(schedule, horizon)?;
    let mut out = String::new();
    out.push_str(&format!(
        "schedule {} over horizon {}\n",
        schedule.label(),
        horizon
    ));
    for c in &v.conditions {
        let mark = if c.pass { "pass" } else { "FAIL" };
        out.push_str(&format!("  [{mark}] {}: {}", c.name, c.detail));
        if let Some((k, value)) = c.witness {
            out.push_str(&format!(" (witness k = {k}, value = {value:.6})"));
        }
        out.push('\n');
    }
    Ok((v, out))
}

#[cfg(test)]
mod tests;
