use super::*;
use crate::instances::save_instance;

fn smoke_plan() -> BenchmarkPlan {
    BenchmarkPlan {
        version: PLAN_VERSION,
        err_tol: 1e-2,
        feas_tol: 1e-8,
        max_iters: 5_000,
        time_limit_s: 30.0,
        oracle_tol: 1e-6,
        redact_timing: true,
        methods: vec![
            "halpern_cimmino".into(),
            "halpern_sccrm".into(),
            "dykstra".into(),
        ],
        schedules: vec!["inv_k".into()],
        cells: vec![
            PlanCell {
                family: "ellipsoid".into(),
                m: 4,
                n: 4,
                k: None,
                theta: Some(1.0),
                alpha_spread: None,
                seed: 11,
            },
            PlanCell {
                family: "polyhedron".into(),
                m: 3,
                n: 3,
                k: Some(3),
                theta: None,
                alpha_spread: Some(0.5),
                seed: 12,
            },
        ],
    }
}

#[test]
fn method_parsing() {
    assert!(Method::parse("halpern_map").is_ok());
    assert!(Method::parse("dykstra").is_ok());
    assert!(Method::parse("gradient_descent").is_err());
    assert_eq!(Method::parse("halpern_crm").unwrap().label(), "halpern_crm");
}

#[test]
fn plan_validation_catches_mistakes() {
    let mut plan = smoke_plan();
    plan.methods.push("bogus".into());
    assert!(plan.validate().is_err());

    let mut plan = smoke_plan();
    plan.cells[0].theta = None;
    assert!(plan.validate().is_err());

    let mut plan = smoke_plan();
    plan.version = 2;
    assert!(matches!(
        plan.validate(),
        Err(BapError::SchemaVersion { .. })
    ));
}

#[test]
fn plan_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plan.json");
    let plan = smoke_plan();
    plan.save(&path).unwrap();
    assert_eq!(BenchmarkPlan::load(&path).unwrap(), plan);
}

#[test]
fn empty_plan_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.csv");
    let mut plan = smoke_plan();
    plan.cells.clear();
    cmd_bench(&plan, &out, 1).unwrap();
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text, format!("{BENCH_CSV_HEADER}\n"));
}

#[test]
fn bench_output_is_deterministic_across_threads() {
    let dir = tempfile::tempdir().unwrap();
    let plan = smoke_plan();
    let mut outputs = Vec::new();
    for (i, threads) in [1usize, 4, 1].iter().enumerate() {
        let out = dir.path().join(format!("bench{i}.csv"));
        cmd_bench(&plan, &out, *threads).unwrap();
        outputs.push(std::fs::read_to_string(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1], "threads 1 vs 4");
    assert_eq!(outputs[0], outputs[2], "rerun");

    // Row order is cells x methods x schedules.
    let lines: Vec<&str> = outputs[0].lines().collect();
    assert_eq!(lines[0], BENCH_CSV_HEADER);
    assert_eq!(lines.len(), 1 + 2 * 3);
    assert!(lines[1].starts_with("halpern_cimmino,ellipsoid,4,4,,1,inv_k,11,"));
    assert!(lines[3].starts_with("dykstra,ellipsoid,4,4,,1,-,11,"));
    assert!(lines[4].starts_with("halpern_cimmino,polyhedron,3,3,3,,inv_k,12,"));
    // Redacted timing pins the wall column.
    for line in &lines[1..] {
        assert!(line.contains(",0.000,"), "{line}");
    }
}

#[test]
fn solve_and_trace_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let inst_path = dir.path().join("inst.json");
    let trace_path = dir.path().join("trace.csv");
    let mut instance = crate::instances::gen_ellipsoid_instance(3, 3, 1.0, 5).unwrap();
    instance.ensure_reference(1e-6).unwrap();
    save_instance(&instance, &inst_path).unwrap();

    let report = cmd_solve(
        &inst_path,
        &Method::Halpern(OperatorKind::Cimmino),
        &StepSchedule::InvK,
        &SolveOptions::default(),
        Some(&trace_path),
    )
    .unwrap();
    assert_eq!(report.status, SolveStatus::Converged);

    let text = std::fs::read_to_string(&trace_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), TRACE_CSV_HEADER);
    assert!(lines.next().unwrap().starts_with("0,0,"));
}

#[test]
fn rates_rejects_missing_reference_and_short_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let inst_path = dir.path().join("inst.json");
    let instance = crate::instances::gen_ellipsoid_instance(3, 3, 1.0, 6).unwrap();
    save_instance(&instance, &inst_path).unwrap();
    let out = dir.path().join("rates.csv");
    let method = Method::Halpern(OperatorKind::Map);
    assert!(cmd_rates(&inst_path, &method, &StepSchedule::InvK, 1000, &out).is_err());
    assert!(cmd_rates(&inst_path, &method, &StepSchedule::InvK, 99, &out).is_err());
}

/// Synthetic series through the fit path used by the rate command.
#[test]
fn fit_rate_matches_constructed_slope_through_cli_path() {
    let schedule = StepSchedule::InvK;
    let series: Vec<(u64, f64)> = (1..=2000)
        .map(|k| (k, 2.0 * schedule.alpha(k).powf(0.7)))
        .collect();
    let fit = crate::analysis::fit_rate(&series, &schedule, 0.7, 0.5).unwrap();
    assert!((fit.tail_sup - 2.0).abs() < 1e-9);
    assert!((fit.slope.unwrap() - 0.7).abs() < 1e-6);
}

#[test]
fn schedule_command_reports() {
    let (v, text) = cmd_schedule(&StepSchedule::Harmonic { mu: 3.0 }, 1000).unwrap();
    assert!(!v.all_pass());
    assert!(text.contains("FAIL"));
    assert!(text.contains("witness"));
}
