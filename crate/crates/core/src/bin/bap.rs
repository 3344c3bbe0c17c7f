//! Command-line benchmark runner and solver front end.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use bap_core::cli::{
    cmd_bench, cmd_rates, cmd_schedule, cmd_solve, BenchmarkPlan, Method, SolveOptions,
};
use bap_core::drivers::StepSchedule;
use bap_core::instances::{gen_ellipsoid_instance, gen_polyhedron_instance, save_instance};

#[derive(Parser)]
#[command(
    name = "bap",
    version,
    about = "Best-approximation solvers over convex intersections"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Ellipsoid,
    Polyhedron,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    HalpernMap,
    HalpernCimmino,
    Halpern3pm,
    HalpernA3pm,
    HalpernSccrm,
    HalpernCrm,
    Dykstra,
}

impl MethodArg {
    fn to_method(self) -> Method {
        let name = match self {
            MethodArg::HalpernMap => "halpern_map",
            MethodArg::HalpernCimmino => "halpern_cimmino",
            MethodArg::Halpern3pm => "halpern_3pm",
            MethodArg::HalpernA3pm => "halpern_a3pm",
            MethodArg::HalpernSccrm => "halpern_sccrm",
            MethodArg::HalpernCrm => "halpern_crm",
            MethodArg::Dykstra => "dykstra",
        };
        Method::parse(name).expect("static method names")
    }
}

#[derive(Args)]
struct GenArgs {
    /// Instance family.
    #[arg(long, value_enum)]
    family: FamilyArg,
    /// Number of sets.
    #[arg(long)]
    m: usize,
    /// Ambient dimension.
    #[arg(long)]
    n: usize,
    /// Rows per polyhedron.
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Contained-ball radius (ellipsoid family).
    #[arg(long, default_value_t = 1.0)]
    theta: f64,
    /// Right-hand-side spread (polyhedron family).
    #[arg(long, default_value_t = 0.5)]
    alpha_spread: f64,
    /// Generator seed.
    #[arg(long)]
    seed: u64,
    /// Also compute and store a certified reference solution.
    #[arg(long)]
    reference: bool,
    /// Output JSON path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    /// Instance JSON file.
    instance: PathBuf,
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Stepsize schedule: inv_k, inv_sqrt_k, or harmonic:<mu>.
    #[arg(long, default_value = "inv_k")]
    alpha: String,
    /// Norm-error stopping tolerance (needs a reference solution).
    #[arg(long, default_value_t = 1e-2)]
    eps: f64,
    /// Feasibility stopping tolerance (without a reference solution).
    #[arg(long, default_value_t = 1e-8)]
    feas_tol: f64,
    #[arg(long, default_value_t = 1_000_000)]
    max_iters: u64,
    /// Wall-clock limit in seconds.
    #[arg(long, default_value_t = 60.0)]
    time_limit: f64,
    /// Worker threads for per-set projections (0 = all cores).
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Compute a reference solution if the file has none.
    #[arg(long)]
    reference: bool,
    /// Write the full iteration trace to this CSV file.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Plan JSON file.
    #[arg(long)]
    plan: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Args)]
struct PlanArgs {
    /// Preset grid: ellipsoid tables or the polyhedral table.
    #[arg(long, value_enum)]
    preset: PlanPreset,
    /// Contained-ball radius for the ellipsoid presets.
    #[arg(long, default_value_t = 1.0)]
    theta: f64,
    /// Spread for the polyhedral preset.
    #[arg(long, default_value_t = 0.5)]
    alpha_spread: f64,
    /// Per-cell wall limit in seconds.
    #[arg(long, default_value_t = 60.0)]
    time_limit: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlanPreset {
    Ellipsoid,
    Polyhedron,
}

#[derive(Args)]
struct RatesArgs {
    /// Instance JSON file (must carry a reference solution).
    instance: PathBuf,
    #[arg(long, value_enum)]
    method: MethodArg,
    #[arg(long, default_value = "inv_k")]
    alpha: String,
    /// Iterations to run, ignoring the error stop.
    #[arg(long, default_value_t = 100_000)]
    horizon: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScheduleArgs {
    /// Schedule to validate.
    #[arg(long)]
    alpha: String,
    #[arg(long, default_value_t = 100_000)]
    horizon: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded instance file.
    Gen(GenArgs),
    /// Solve one instance and print the report.
    Solve(SolveArgs),
    /// Run a benchmark plan to CSV.
    Bench(BenchArgs),
    /// Write a preset benchmark plan.
    Plan(PlanArgs),
    /// Convergence-rate verification on one instance.
    Rates(RatesArgs),
    /// Check a stepsize schedule against the validity conditions.
    Schedule(ScheduleArgs),
}

fn run() -> bap_core::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Gen(args) => {
            let mut instance = match args.family {
                FamilyArg::Ellipsoid => {
                    gen_ellipsoid_instance(args.m, args.n, args.theta, args.seed)?
                }
                FamilyArg::Polyhedron => {
                    gen_polyhedron_instance(args.m, args.n, args.k, args.alpha_spread, args.seed)?
                }
            };
            if args.reference {
                instance.ensure_reference(1e-6)?;
            }
            save_instance(&instance, &args.out)?;
            println!("wrote {} ({})", args.out.display(), instance.id());
            Ok(())
        }
        Command::Solve(args) => {
            let schedule = StepSchedule::parse(&args.alpha)?;
            let options = SolveOptions {
                err_tol: args.eps,
                feas_tol: args.feas_tol,
                max_iters: args.max_iters,
                time_limit_s: args.time_limit,
                threads: args.threads,
                ensure_reference: args.reference,
            };
            let report = cmd_solve(
                &args.instance,
                &args.method.to_method(),
                &schedule,
                &options,
                args.trace.as_deref(),
            )?;
            println!(
                "method={} status={} iterations={} wall_time_s={:.3} final_err={} final_delta={:e}",
                report.method,
                report.status,
                report.iterations,
                report.wall_time_s,
                report.final_err.map_or("-".into(), |e| format!("{e:e}")),
                report.final_delta,
            );
            Ok(())
        }
        Command::Bench(args) => {
            let plan = BenchmarkPlan::load(&args.plan)?;
            cmd_bench(&plan, &args.out, args.threads)?;
            println!("wrote {}", args.out.display());
            Ok(())
        }
        Command::Plan(args) => {
            let plan = match args.preset {
                PlanPreset::Ellipsoid => {
                    BenchmarkPlan::ellipsoid_preset(args.theta, args.time_limit)
                }
                PlanPreset::Polyhedron => {
                    BenchmarkPlan::polyhedron_preset(args.alpha_spread, args.time_limit)
                }
            };
            plan.save(&args.out)?;
            println!("wrote {}", args.out.display());
            Ok(())
        }
        Command::Rates(args) => {
            let schedule = StepSchedule::parse(&args.alpha)?;
            cmd_rates(
                &args.instance,
                &args.method.to_method(),
                &schedule,
                args.horizon,
                &args.out,
            )?;
            println!("wrote {}", args.out.display());
            Ok(())
        }
        Command::Schedule(args) => {
            let schedule = StepSchedule::parse(&args.alpha)?;
            let (validation, text) = cmd_schedule(&schedule, args.horizon)?;
            print!("{text}");
            if !validation.all_pass() {
                return Err(bap_core::BapError::InvalidArgument(
                    "schedule failed validation".into(),
                ));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
