//! Split-face trial: every subject receives one arm on each side of the face, over
//! the same set of patches, and the arms are compared with paired t-tests.

mod calibrate;
mod config;
mod export;
pub mod stats;

pub use calibrate::{
    calibrate_operator, CalibrationError, CalibrationReport, CalibrationSettings, CalibrationStep, CalibrationTarget,
    ParamRange, SearchSpace,
};
pub use config::{load_trial_config, parse_trial_config, ConfigError, ConfigFormat};
pub use export::{TrialCsvRow, TRIAL_CSV_COLUMNS};

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coverage::{rasterize, score_plan, CoverageError, RasterMask};
use crate::geometry::Polygon;
use crate::operator_sim::{apply_execution_noise, simulate_pass, OperatorModel, RngSeed, RobotExecution, SimError};
use crate::par::{map_indexed, Execution};
use crate::planner::{
    plan_lattice, plan_trajectory, BoundaryPolicy, KinematicModel, LaserSpec, LatticePattern, PlanError, PlanRequest,
    TreatmentPlan,
};
use crate::surface::{
    make_cheek_phantom, make_flat_patch, ExclusionZone, Region, RegionError, RegionSpec, SurfaceError, SurfaceModel,
};
use stats::{paired_t_test, StatsError, Summary, TTest};

pub const TRIAL_CONFIG_VERSION: u32 = 1;
pub const TRIAL_RESULT_FORMAT: &str = "lasercover.trial";
pub const TRIAL_RESULT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Robot,
    Human,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Right,
    Left,
}

impl Side {
    fn index(self) -> usize {
        match self {
            Side::Right => 0,
            Side::Left => 1,
        }
    }
}

/// How per-patch coverage is combined into one figure per subject and side.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    /// Σ covered area / Σ operable area.
    #[default]
    AreaWeighted,
    /// Mean of the per-patch percentages.
    Unweighted,
}

/// One treatment patch. A `curvature_radius` makes it a cylindrical cheek phantom,
/// otherwise it is flat.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchSpec {
    pub name: String,
    /// mm along u.
    pub width: f64,
    /// mm along v.
    pub height: f64,
    #[serde(default)]
    pub curvature_radius: Option<f64>,
    #[serde(default)]
    pub exclusions: Vec<ExclusionZone>,
}

impl PatchSpec {
    pub fn flat(name: &str, width: f64, height: f64) -> Self {
        Self { name: name.to_owned(), width, height, curvature_radius: None, exclusions: Vec::new() }
    }

    /// Forehead patch, 40 × 50 mm.
    pub fn forehead() -> Self {
        Self::flat("forehead", 40.0, 50.0)
    }

    /// Cheek patch, 76 × 76 mm on a 60 mm cylinder.
    pub fn cheek() -> Self {
        Self { curvature_radius: Some(60.0), ..Self::flat("cheek", 76.0, 76.0) }
    }

    pub fn surface(&self) -> Result<SurfaceModel, TrialError> {
        match self.curvature_radius {
            None => make_flat_patch(self.width, self.height),
            Some(r) => make_cheek_phantom(self.width, self.height, r),
        }
        .map_err(|source| TrialError::Surface { patch: self.name.clone(), source })
    }

    /// The whole patch selected, minus its exclusions; errors if nothing is operable.
    pub fn region(&self, margin: f64) -> Result<Region, TrialError> {
        let region = self
            .region_spec(margin)
            .build(Arc::new(self.surface()?))
            .map_err(|source| TrialError::Region { patch: self.name.clone(), source })?;
        if !region.is_plannable() {
            return Err(TrialError::NotPlannable { patch: self.name.clone() });
        }
        Ok(region)
    }

    pub fn region_spec(&self, margin: f64) -> RegionSpec {
        RegionSpec {
            selection: vec![Polygon::rect(0.0, 0.0, self.width, self.height)],
            exclusions: self.exclusions.clone(),
            margin,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrialConfig {
    pub version: u32,
    pub subjects: usize,
    pub seed: u64,
    /// Raster pitch for scoring (mm).
    pub pixel_size: f64,
    /// Emitter distance from the skin (mm).
    pub standoff: f64,
    /// Clearance added around every exclusion zone (mm).
    pub margin: f64,
    pub pattern: LatticePattern,
    pub boundary: BoundaryPolicy,
    pub pooling: Pooling,
    pub execution: Execution,
    pub right_arm: Arm,
    pub left_arm: Arm,
    pub laser: LaserSpec,
    pub kinematics: KinematicModel,
    pub robot: RobotExecution,
    pub human: OperatorModel,
    pub patches: Vec<PatchSpec>,
}

impl Default for TrialConfig {
    fn default() -> Self {
        let laser = LaserSpec::default();
        Self {
            version: TRIAL_CONFIG_VERSION,
            subjects: 17,
            seed: 1,
            pixel_size: 0.1,
            standoff: 30.0,
            margin: laser.radius() + 2.0,
            pattern: LatticePattern::Hex,
            boundary: BoundaryPolicy::Inside,
            pooling: Pooling::AreaWeighted,
            execution: Execution::Parallel,
            right_arm: Arm::Robot,
            left_arm: Arm::Human,
            laser,
            kinematics: KinematicModel::default(),
            robot: RobotExecution::default(),
            human: OperatorModel::default(),
            patches: vec![PatchSpec::forehead(), PatchSpec::cheek()],
        }
    }
}

impl TrialConfig {
    /// Robot planning inputs carried by this config.
    pub fn plan_request(&self) -> PlanRequest {
        PlanRequest {
            pattern: self.pattern,
            boundary: self.boundary,
            laser: self.laser,
            standoff: self.standoff,
            kinematics: self.kinematics,
        }
    }

    pub fn arm(&self, side: Side) -> Arm {
        match side {
            Side::Right => self.right_arm,
            Side::Left => self.left_arm,
        }
    }

    pub fn arm_model(&self, arm: Arm) -> ArmModel {
        match arm {
            Arm::Robot => ArmModel::Robot(self.robot),
            Arm::Human => ArmModel::Human(self.human),
        }
    }

    /// Semantic checks beyond what deserialization enforces.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid =
            |field: &str, message: String| Err(ConfigError::Invalid { field: field.to_owned(), line: None, message });
        if self.version != TRIAL_CONFIG_VERSION {
            return invalid(
                "version",
                format!("unsupported version {} (supported: {TRIAL_CONFIG_VERSION})", self.version),
            );
        }
        if self.subjects < 2 {
            return invalid("subjects", format!("need at least 2 subjects, got {}", self.subjects));
        }
        if !(self.pixel_size > 0.0 && self.pixel_size.is_finite()) {
            return invalid("pixel_size", format!("must be positive, got {}", self.pixel_size));
        }
        if !(self.standoff >= 0.0 && self.standoff.is_finite()) {
            return invalid("standoff", format!("must be non-negative, got {}", self.standoff));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return invalid("margin", format!("must be non-negative, got {}", self.margin));
        }
        if let Err(e) = self.laser.validate() {
            return invalid("laser", e.to_string());
        }
        if let Err(e) = self.kinematics.validate() {
            return invalid("kinematics", e.to_string());
        }
        if let Err(e) = self.robot.validate() {
            return invalid("robot", e.to_string());
        }
        if let Err(e) = self.human.validate() {
            return invalid("human", e.to_string());
        }
        if self.patches.is_empty() {
            return invalid("patches", "at least one patch is required".into());
        }
        for (i, p) in self.patches.iter().enumerate() {
            if !(p.width > 0.0 && p.width.is_finite() && p.height > 0.0 && p.height.is_finite()) {
                return invalid(&format!("patches[{i}]"), "width and height must be positive".into());
            }
            if self.patches[..i].iter().any(|q| q.name == p.name) {
                return invalid(&format!("patches[{i}].name"), format!("duplicate patch name {:?}", p.name));
            }
        }
        Ok(())
    }
}

/// Execution model of one arm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arm", rename_all = "lowercase")]
pub enum ArmModel {
    Robot(RobotExecution),
    Human(OperatorModel),
}

impl ArmModel {
    pub fn arm(&self) -> Arm {
        match self {
            ArmModel::Robot(_) => Arm::Robot,
            ArmModel::Human(_) => Arm::Human,
        }
    }
}

#[derive(Debug, Error)]
pub enum TrialError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("patch {patch}: {source}")]
    Surface { patch: String, source: SurfaceError },
    #[error("patch {patch}: {source}")]
    Region { patch: String, source: RegionError },
    #[error("patch {patch} has no operable area")]
    NotPlannable { patch: String },
    #[error("patch {patch}: {source}")]
    Plan { patch: String, source: PlanError },
    #[error(transparent)]
    Coverage(#[from] CoverageError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error("only {valid} of {total} subjects produced a non-empty pass on every patch")]
    TooFewValidSubjects { valid: usize, total: usize },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// A patch ready for repeated passes: region, scoring mask and the robot plan.
#[derive(Clone, Debug)]
pub struct PreparedPatch {
    pub name: String,
    pub region: Region,
    pub mask: RasterMask,
    /// `None` when no spot fits under the boundary policy.
    pub robot_plan: Option<TreatmentPlan>,
}

#[derive(Clone, Debug)]
pub struct PreparedTrial {
    pub config: TrialConfig,
    pub patches: Vec<PreparedPatch>,
}

/// Builds surfaces, regions, masks and robot plans for every patch.
pub fn prepare_trial(config: &TrialConfig) -> Result<PreparedTrial, TrialError> {
    config.validate()?;
    let patches = config.patches.iter().map(|spec| prepare_patch(config, spec)).collect::<Result<_, _>>()?;
    Ok(PreparedTrial { config: config.clone(), patches })
}

fn prepare_patch(config: &TrialConfig, spec: &PatchSpec) -> Result<PreparedPatch, TrialError> {
    let region = spec.region(config.margin)?;
    let mask = rasterize(&region, config.pixel_size)?;
    let plan_err = |source| TrialError::Plan { patch: spec.name.clone(), source };
    let robot_plan = if config.right_arm == Arm::Robot || config.left_arm == Arm::Robot {
        let lattice = plan_lattice(&region, &config.laser, config.pattern, config.boundary).map_err(plan_err)?;
        if lattice.centers.is_empty() {
            None
        } else {
            Some(
                plan_trajectory(&lattice.centers, &region, &config.laser, &config.kinematics, config.standoff)
                    .map_err(plan_err)?,
            )
        }
    } else {
        None
    };
    Ok(PreparedPatch { name: spec.name.clone(), region, mask, robot_plan })
}

/// Outcome of one pass over one patch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassOutcome {
    pub patch: String,
    pub shots: usize,
    pub suppressed: usize,
    /// s
    pub duration: f64,
    /// mm²
    pub operable_area: f64,
    /// mm²
    pub union_area: f64,
    /// mm²
    pub exactly_once_area: f64,
    pub coverage_pct: f64,
}

/// All passes of one arm on one subject.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectArm {
    pub arm: Arm,
    pub side: Side,
    pub passes: Vec<PassOutcome>,
    /// Pooled over patches.
    pub coverage_pct: f64,
    pub shots: usize,
    pub duration: f64,
    /// Every pass fired at least one shot.
    pub valid: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub subject: usize,
    pub right: SubjectArm,
    pub left: SubjectArm,
    pub valid: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: Arm,
    pub coverage_pct: Summary,
    pub shots: Summary,
    pub duration: Summary,
}

/// Right − left paired tests over valid subjects.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialTests {
    pub coverage_pct: TTest,
    pub shots: TTest,
    pub duration: TTest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub pixel_size: f64,
    pub pooling: Pooling,
    pub patches: Vec<String>,
    pub valid_subjects: usize,
    pub right: ArmSummary,
    pub left: ArmSummary,
    pub tests: TrialTests,
    pub subjects: Vec<SubjectRecord>,
}

impl PreparedTrial {
    /// Simulates one arm on one side for every subject.
    pub fn simulate_arm(&self, model: &ArmModel, side: Side, seed: u64) -> Result<Vec<SubjectArm>, TrialError> {
        map_indexed(self.config.execution, self.config.subjects, |s| self.subject_arm(model, side, s, seed))
            .into_iter()
            .collect()
    }

    fn subject_arm(&self, model: &ArmModel, side: Side, subject: usize, seed: u64) -> Result<SubjectArm, TrialError> {
        let cfg = &self.config;
        let mut passes = Vec::with_capacity(self.patches.len());
        for (p, patch) in self.patches.iter().enumerate() {
            let rng = RngSeed::for_pass(seed, subject, side.index(), p);
            let plan = match model {
                ArmModel::Robot(exec) => match &patch.robot_plan {
                    Some(plan) => Some(apply_execution_noise(plan, &patch.region, exec, rng)?),
                    None => None,
                },
                ArmModel::Human(op) => Some(simulate_pass(&patch.region, &cfg.laser, op, cfg.standoff, rng)?),
            };
            passes.push(match plan {
                Some(plan) => {
                    let rep = score_plan(&patch.mask, &plan, Execution::Sequential)?;
                    PassOutcome {
                        patch: patch.name.clone(),
                        shots: plan.shots.len(),
                        suppressed: plan.suppressed,
                        duration: plan.duration,
                        operable_area: rep.operable_area,
                        union_area: rep.phi_union,
                        exactly_once_area: rep.exactly_once,
                        coverage_pct: rep.coverage_pct,
                    }
                }
                None => PassOutcome {
                    patch: patch.name.clone(),
                    shots: 0,
                    suppressed: 0,
                    duration: 0.0,
                    operable_area: patch.mask.operable_area(),
                    union_area: 0.0,
                    exactly_once_area: 0.0,
                    coverage_pct: 0.0,
                },
            });
        }
        Ok(SubjectArm {
            arm: model.arm(),
            side,
            coverage_pct: pooled_coverage(&passes, cfg.pooling),
            shots: passes.iter().map(|p| p.shots).sum(),
            duration: passes.iter().map(|p| p.duration).sum(),
            valid: passes.iter().all(|p| p.shots > 0),
            passes,
        })
    }

    /// Runs the full two-arm trial with the configured seed.
    pub fn run(&self) -> Result<TrialResult, TrialError> {
        self.run_with_seed(self.config.seed)
    }

    pub fn run_with_seed(&self, seed: u64) -> Result<TrialResult, TrialError> {
        let cfg = &self.config;
        let right = self.simulate_arm(&cfg.arm_model(cfg.right_arm), Side::Right, seed)?;
        let left = self.simulate_arm(&cfg.arm_model(cfg.left_arm), Side::Left, seed)?;
        let subjects: Vec<SubjectRecord> = right
            .into_iter()
            .zip(left)
            .enumerate()
            .map(|(subject, (right, left))| SubjectRecord { subject, valid: right.valid && left.valid, right, left })
            .collect();
        let valid: Vec<&SubjectRecord> = subjects.iter().filter(|s| s.valid).collect();
        if valid.len() < 2 {
            return Err(TrialError::TooFewValidSubjects { valid: valid.len(), total: subjects.len() });
        }
        let col = |f: &dyn Fn(&SubjectRecord) -> f64| valid.iter().map(|s| f(s)).collect::<Vec<f64>>();
        let rc = col(&|s| s.right.coverage_pct);
        let lc = col(&|s| s.left.coverage_pct);
        let rs = col(&|s| s.right.shots as f64);
        let ls = col(&|s| s.left.shots as f64);
        let rd = col(&|s| s.right.duration);
        let ld = col(&|s| s.left.duration);
        Ok(TrialResult {
            format: TRIAL_RESULT_FORMAT.to_owned(),
            version: TRIAL_RESULT_VERSION,
            seed,
            pixel_size: cfg.pixel_size,
            pooling: cfg.pooling,
            patches: self.patches.iter().map(|p| p.name.clone()).collect(),
            valid_subjects: valid.len(),
            right: ArmSummary {
                arm: cfg.right_arm,
                coverage_pct: Summary::of(&rc),
                shots: Summary::of(&rs),
                duration: Summary::of(&rd),
            },
            left: ArmSummary {
                arm: cfg.left_arm,
                coverage_pct: Summary::of(&lc),
                shots: Summary::of(&ls),
                duration: Summary::of(&ld),
            },
            tests: TrialTests {
                coverage_pct: paired_t_test(&rc, &lc)?,
                shots: paired_t_test(&rs, &ls)?,
                duration: paired_t_test(&rd, &ld)?,
            },
            subjects,
        })
    }
}

fn pooled_coverage(passes: &[PassOutcome], pooling: Pooling) -> f64 {
    match pooling {
        Pooling::AreaWeighted => {
            let u: f64 = passes.iter().map(|p| p.operable_area).sum();
            if u > 0.0 {
                passes.iter().map(|p| p.union_area).sum::<f64>() / u * 100.0
            } else {
                0.0
            }
        }
        Pooling::Unweighted => passes.iter().map(|p| p.coverage_pct).sum::<f64>() / passes.len() as f64,
    }
}

/// Prepares and runs a trial in one call.
pub fn run_trial(config: &TrialConfig) -> Result<TrialResult, TrialError> {
    prepare_trial(config)?.run()
}

impl TrialResult {
    pub fn to_json(&self) -> String {
        crate::artifact_json(self)
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn summary(&self, side: Side) -> &ArmSummary {
        match side {
            Side::Right => &self.right,
            Side::Left => &self.left,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(subjects: usize) -> TrialConfig {
        TrialConfig { subjects, pixel_size: 0.25, ..TrialConfig::default() }
    }

    #[test]
    fn default_dwell_reproduces_reported_duration() {
        let cfg = TrialConfig::default();
        let prepared = prepare_trial(&cfg).unwrap();
        let plans: Vec<&TreatmentPlan> = prepared.patches.iter().map(|p| p.robot_plan.as_ref().unwrap()).collect();
        let shots: usize = plans.iter().map(|p| p.shots.len()).sum();
        assert_eq!(shots, 54 + 168);
        let total: f64 = plans.iter().map(|p| p.duration).sum();
        let travel: f64 = plans.iter().map(|p| p.travel_distance()).sum();
        let fitted = cfg.kinematics.fit_dwell(shots, travel, 107.4);
        assert!((fitted - KinematicModel::DEFAULT_DWELL).abs() < 1e-12, "fitted dwell {fitted:?}");
        assert!((total - 107.4).abs() < 1e-9, "total {total}");
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let par = run_trial(&small(5)).unwrap();
        let seq = run_trial(&TrialConfig { execution: Execution::Sequential, ..small(5) }).unwrap();
        assert_eq!(par.to_json(), seq.to_json());
    }

    #[test]
    fn json_round_trip() {
        let r = run_trial(&small(3)).unwrap();
        assert_eq!(TrialResult::from_json(&r.to_json()).unwrap(), r);
    }

    #[test]
    fn empty_passes_invalidate_subjects() {
        let cfg = TrialConfig { patches: vec![PatchSpec::flat("tiny", 5.0, 5.0)], ..small(4) };
        let err = run_trial(&cfg).unwrap_err();
        assert!(matches!(err, TrialError::TooFewValidSubjects { valid: 0, total: 4 }));
    }

    #[test]
    fn pooling_modes() {
        let pass = |u: f64, c: f64| PassOutcome {
            patch: String::new(),
            shots: 1,
            suppressed: 0,
            duration: 0.0,
            operable_area: u,
            union_area: c,
            exactly_once_area: c,
            coverage_pct: c / u * 100.0,
        };
        let p = [pass(100.0, 50.0), pass(300.0, 30.0)];
        assert!((pooled_coverage(&p, Pooling::AreaWeighted) - 20.0).abs() < 1e-12);
        assert!((pooled_coverage(&p, Pooling::Unweighted) - 30.0).abs() < 1e-12);
    }

    #[test]
    fn bad_config_is_rejected() {
        let cfg = TrialConfig { subjects: 1, ..TrialConfig::default() };
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid { ref field, .. }) if field == "subjects"));
    }
}
