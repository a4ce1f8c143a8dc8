use std::path::Path;
use std::sync::Arc;

use serde::Serialize;
use serde_json::json;

use lasercover_core::artifact_json;
use lasercover_core::coverage::{
    dose_map_with_mask, rasterize, score_plan, CoverageError, CoverageReport, DEFAULT_PIXEL_SIZE,
};
use lasercover_core::operator_sim::{apply_execution_noise, simulate_pass, RngSeed};
use lasercover_core::planner::{plan_region, ShotRecord, TreatmentPlan};
use lasercover_core::surface::{load_mesh, Region, RegionSpec};
use lasercover_core::trial::{
    calibrate_operator, load_trial_config, parse_trial_config, prepare_trial, Arm, CalibrationError, CalibrationReport,
    CalibrationSettings, CalibrationTarget, ConfigFormat, SearchSpace, TrialConfig, TrialError,
};
use lasercover_service::{AppState, ServiceConfig};

use crate::output::{csv_of, CliError, Run};
use crate::{ArmArg, Common, Target};

pub const PLAN_FILE: &str = lasercover_service::PLAN_FILE;
pub const VALIDATION_FILE: &str = lasercover_service::VALIDATION_FILE;
pub const COVERAGE_FILE: &str = "coverage.json";
pub const HEATMAP_FILE: &str = "heatmap.bin";
pub const DOSE_PGM_FILE: &str = "dose.pgm";
pub const MODEL_FILE: &str = "model.json";
pub const CALIBRATION_FILE: &str = "calibration.json";
pub const CALIBRATION_TRACE_FILE: &str = "calibration_trace.csv";

fn load_config(common: &Common) -> Result<TrialConfig, CliError> {
    let mut config = match &common.config {
        Some(path) => load_trial_config(path, &common.overrides).map_err(|e| CliError::config(e, Some(path)))?,
        None => parse_trial_config("", ConfigFormat::Toml, &common.overrides).map_err(|e| CliError::config(e, None))?,
    };
    if let Some(p) = common.pixel_size {
        config.pixel_size = p;
        config.validate().map_err(|e| CliError::config(e, None))?;
    }
    Ok(config)
}

fn trial_error(e: TrialError, common: &Common) -> CliError {
    match e {
        TrialError::Config(c) => CliError::config(c, common.config.as_deref()),
        TrialError::Surface { .. } | TrialError::Region { .. } => CliError::Input {
            kind: "config",
            message: e.to_string(),
            file: common.config.clone(),
            field: Some("patches".into()),
            line: None,
        },
        TrialError::NotPlannable { .. } => CliError::runtime("zero-operable-area", e),
        other => CliError::runtime("trial", other),
    }
}

fn read_text(path: &Path, kind: &'static str) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::input(kind, path, e))
}

fn json_error(kind: &'static str, path: &Path, e: serde_json::Error) -> CliError {
    CliError::Input { kind, message: e.to_string(), file: Some(path.to_path_buf()), field: None, line: Some(e.line()) }
}

/// Region from `--mesh`/`--region` files, or from a config patch.
fn resolve_region(config: &TrialConfig, target: &Target, common: &Common) -> Result<Region, CliError> {
    if let (Some(mesh), Some(region)) = (&target.mesh, &target.region) {
        let surface = load_mesh(mesh).map_err(|e| CliError::input("mesh", mesh, e))?;
        let spec: RegionSpec =
            serde_json::from_str(&read_text(region, "region")?).map_err(|e| json_error("region", region, e))?;
        let built = spec.build(Arc::new(surface)).map_err(|e| CliError::input("region", region, e))?;
        if !built.is_plannable() {
            return Err(CliError::runtime("zero-operable-area", "region has no operable area"));
        }
        return Ok(built);
    }
    let patch = match &target.patch {
        None => config.patches.first(),
        Some(name) => config.patches.iter().find(|p| &p.name == name),
    }
    .ok_or_else(|| CliError::Input {
        kind: "config",
        message: format!("no patch named {:?}", target.patch.as_deref().unwrap_or_default()),
        file: common.config.clone(),
        field: Some("patches".into()),
        line: None,
    })?;
    patch.region(config.margin).map_err(|e| trial_error(e, common))
}

#[derive(Serialize)]
struct PlanOutput<'a> {
    plan: &'a TreatmentPlan,
    #[serde(skip_serializing_if = "Option::is_none")]
    validation: Option<&'a lasercover_core::planner::ValidationReport>,
}

fn shot_csv(plan: &TreatmentPlan) -> String {
    csv_of(plan.shots.iter().map(|&s| ShotRecord::from(s)))
}

pub fn plan(common: &Common, target: &Target) -> Result<(), CliError> {
    let mut run = Run::new(common, "plan");
    let config = load_config(common)?;
    let region = resolve_region(&config, target, common)?;
    let planned = plan_region(&region, &config.plan_request()).map_err(|e| CliError::runtime("plan", e))?;
    run.write_json(PLAN_FILE, &planned.plan)?;
    run.write_json(VALIDATION_FILE, &planned.validation)?;
    run.primary(
        || artifact_json(&PlanOutput { plan: &planned.plan, validation: Some(&planned.validation) }),
        || shot_csv(&planned.plan),
    );
    run.summary(&format!(
        "planned {} shots, duration {:.2} s, {} violations",
        planned.plan.shots.len(),
        planned.plan.duration,
        planned.validation.violations.len()
    ));
    run.finish()
}

pub fn simulate(common: &Common, target: &Target, arm: ArmArg, stream: u64) -> Result<(), CliError> {
    let mut run = Run::new(common, "simulate");
    let config = load_config(common)?;
    let region = resolve_region(&config, target, common)?;
    let seed = RngSeed::new(run.seed(config.seed), stream);
    let plan = match arm {
        ArmArg::Human => simulate_pass(&region, &config.laser, &config.human, config.standoff, seed),
        ArmArg::Robot => plan_region(&region, &config.plan_request())
            .map_err(Into::into)
            .and_then(|p| apply_execution_noise(&p.plan, &region, &config.robot, seed)),
    }
    .map_err(|e| CliError::runtime("simulate", e))?;
    run.write_json(PLAN_FILE, &plan)?;
    run.primary(|| artifact_json(&PlanOutput { plan: &plan, validation: None }), || shot_csv(&plan));
    run.summary(&format!(
        "simulated {} shots ({} suppressed), duration {:.2} s",
        plan.shots.len(),
        plan.suppressed,
        plan.duration
    ));
    run.finish()
}

/// CoverageReport flattened for CSV.
#[derive(Serialize)]
struct CoverageRow {
    operable_area: f64,
    phi_union: f64,
    exactly_once: f64,
    multi: f64,
    uncovered: f64,
    coverage_pct: f64,
    exactly_once_pct: f64,
    shots: usize,
    duration: f64,
    pixel_size: f64,
}

impl From<&CoverageReport> for CoverageRow {
    fn from(r: &CoverageReport) -> Self {
        Self {
            operable_area: r.operable_area,
            phi_union: r.phi_union,
            exactly_once: r.exactly_once,
            multi: r.multi,
            uncovered: r.uncovered,
            coverage_pct: r.coverage_pct,
            exactly_once_pct: r.exactly_once_pct,
            shots: r.shots,
            duration: r.duration,
            pixel_size: r.pixel_size,
        }
    }
}

fn coverage_error(e: CoverageError) -> CliError {
    match e {
        CoverageError::InvalidPixelSize(_) | CoverageError::DegenerateResolution { .. } => CliError::Input {
            kind: "pixel-size",
            message: e.to_string(),
            file: None,
            field: Some("pixel_size".into()),
            line: None,
        },
        other => CliError::runtime("score", other),
    }
}

pub fn score(common: &Common, target: &Target, plan_path: &Path, heatmap: bool) -> Result<(), CliError> {
    let mut run = Run::new(common, "score");
    let config = load_config(common)?;
    let region = resolve_region(&config, target, common)?;
    let plan: TreatmentPlan =
        serde_json::from_str(&read_text(plan_path, "plan")?).map_err(|e| json_error("plan", plan_path, e))?;
    let pixel = common.pixel_size.unwrap_or(DEFAULT_PIXEL_SIZE);
    let mask = rasterize(&region, pixel).map_err(coverage_error)?;
    let report = score_plan(&mask, &plan, config.execution).map_err(coverage_error)?;
    run.write_json(COVERAGE_FILE, &report)?;
    if heatmap && run.writes_files() {
        let dose = dose_map_with_mask(mask, &plan, config.execution).map_err(coverage_error)?;
        run.write(HEATMAP_FILE, &dose.heatmap_layer().to_bytes())?;
        run.write(DOSE_PGM_FILE, &dose.to_pgm())?;
    }
    run.primary(|| artifact_json(&report), || csv_of([CoverageRow::from(&report)]));
    run.summary(&format!(
        "coverage {:.4} % of {:.2} mm² ({} shots, {:.3} mm pixels)",
        report.coverage_pct, report.operable_area, report.shots, report.pixel_size
    ));
    run.finish()
}

pub fn trial(common: &Common) -> Result<(), CliError> {
    let mut run = Run::new(common, "trial");
    let config = load_config(common)?;
    let seed = run.seed(config.seed);
    let prepared = prepare_trial(&config).map_err(|e| trial_error(e, common))?;
    let result = prepared.run_with_seed(seed).map_err(|e| trial_error(e, common))?;
    let json = result.to_json();
    let csv = result.to_csv();
    run.write(lasercover_service::TRIAL_JSON_FILE, json.as_bytes())?;
    run.write(lasercover_service::TRIAL_CSV_FILE, csv.as_bytes())?;
    run.primary(|| json.clone(), || csv.clone());
    let t = &result.tests;
    run.summary(&format!(
        "{} subjects: coverage {:.2} vs {:.2} % (p = {:.3e}), shots p = {:.3}, duration p = {:.3e}",
        result.valid_subjects,
        result.right.coverage_pct.mean,
        result.left.coverage_pct.mean,
        t.coverage_pct.p_value,
        t.shots.p_value,
        t.duration.p_value
    ));
    run.finish()
}

pub fn calibrate(
    common: &Common,
    arm: ArmArg,
    target_mean: Option<f64>,
    target_sd: Option<f64>,
    budget: usize,
    tolerance: f64,
) -> Result<(), CliError> {
    let mut run = Run::new(common, "calibrate");
    let mut config = load_config(common)?;
    let arm = match arm {
        ArmArg::Robot => Arm::Robot,
        ArmArg::Human => Arm::Human,
    };
    // Calibration simulates the right side only.
    config.right_arm = arm;
    let seed = run.seed(config.seed);
    let reference = CalibrationTarget::for_arm(arm);
    let target =
        CalibrationTarget { mean: target_mean.unwrap_or(reference.mean), sd: target_sd.unwrap_or(reference.sd) };
    let settings = CalibrationSettings { budget, tolerance_pp: tolerance, seed };
    let prepared = prepare_trial(&config).map_err(|e| trial_error(e, common))?;
    let outcome = calibrate_operator(&prepared, config.arm_model(arm), target, &SearchSpace::for_arm(arm), &settings);
    let (report, failure) = match outcome {
        Ok(r) => (r, None),
        Err(CalibrationError::TargetMissed { best }) => {
            let msg = format!(
                "best candidate reached {:.2} % (target {:.2} %), outside ±{tolerance} pp",
                best.achieved_mean, target.mean
            );
            (*best, Some(CliError::runtime("target-missed", msg)))
        }
        Err(CalibrationError::NoBudget) => {
            return Err(CliError::Input {
                kind: "argument",
                message: "--budget must be at least 1".into(),
                file: None,
                field: Some("budget".into()),
                line: None,
            })
        }
        Err(CalibrationError::Trial(e)) => return Err(trial_error(e, common)),
    };
    write_calibration(&mut run, &report)?;
    run.summary(&format!(
        "{} evaluations: mean {:.2} %, sd {:.2} % (target {:.2} ± {:.2})",
        report.evaluations, report.achieved_mean, report.achieved_sd, target.mean, target.sd
    ));
    run.finish()?;
    failure.map_or(Ok(()), Err)
}

fn write_calibration(run: &mut Run, report: &CalibrationReport) -> Result<(), CliError> {
    run.write_json(MODEL_FILE, &report.model)?;
    run.write_json(CALIBRATION_FILE, report)?;
    let trace = csv_of(report.trace.iter());
    run.write(CALIBRATION_TRACE_FILE, trace.as_bytes())?;
    run.primary(|| artifact_json(report), || trace.clone());
    Ok(())
}

pub fn serve(common: &Common, bind: &str) -> Result<(), CliError> {
    let config = load_config(common)?;
    let state = AppState::new(ServiceConfig { persist_dir: common.out.clone(), execution: config.execution });
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::runtime("serve", e))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(bind)
            .await
            .map_err(|e| CliError::runtime("serve", format!("cannot bind {bind}: {e}")))?;
        let addr = listener.local_addr().map_err(|e| CliError::runtime("serve", e))?;
        eprintln!("{}", json!({ "listening": addr.to_string() }));
        lasercover_service::serve(listener, state).await.map_err(|e| CliError::runtime("serve", e))
    })
}
