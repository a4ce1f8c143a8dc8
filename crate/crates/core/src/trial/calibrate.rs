//! Coordinate-descent fit of execution-noise parameters to a coverage target.
//!
//! Every candidate is evaluated on the same seed and therefore the same random
//! streams, so differences between candidates reflect the parameters alone.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::stats::Summary;
use super::{Arm, ArmModel, PreparedTrial, Side, TrialError};
use crate::operator_sim::{OperatorModel, RobotExecution};

/// Target cohort coverage (%).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTarget {
    pub mean: f64,
    pub sd: f64,
}

impl CalibrationTarget {
    pub const ROBOT: Self = Self { mean: 60.2, sd: 15.1 };
    pub const HUMAN: Self = Self { mean: 43.6, sd: 12.9 };

    pub fn for_arm(arm: Arm) -> Self {
        match arm {
            Arm::Robot => Self::ROBOT,
            Arm::Human => Self::HUMAN,
        }
    }
}

/// Evenly spaced grid `min..=max` with `levels` points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub min: f64,
    pub max: f64,
    pub levels: usize,
}

impl ParamRange {
    pub fn values(&self) -> Vec<f64> {
        if self.levels <= 1 {
            return vec![self.min];
        }
        let step = (self.max - self.min) / (self.levels - 1) as f64;
        (0..self.levels).map(|i| self.min + i as f64 * step).collect()
    }

    fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.min, self.max)
    }
}

/// Parameters searched; `None` holds the parameter at zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub aim_sigma: ParamRange,
    pub drift_sigma: Option<ParamRange>,
    pub skip_prob: Option<ParamRange>,
}

impl SearchSpace {
    /// Robot search is over aim error only.
    pub fn for_arm(arm: Arm) -> Self {
        let aim_sigma = ParamRange { min: 0.0, max: 4.0, levels: 17 };
        match arm {
            Arm::Robot => Self { aim_sigma, drift_sigma: None, skip_prob: None },
            Arm::Human => Self {
                aim_sigma,
                drift_sigma: Some(ParamRange { min: 0.0, max: 4.0, levels: 17 }),
                skip_prob: Some(ParamRange { min: 0.0, max: 0.2, levels: 11 }),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSettings {
    /// Maximum number of cohort evaluations.
    pub budget: usize,
    /// Largest acceptable |achieved mean − target mean| (percentage points).
    pub tolerance_pp: f64,
    pub seed: u64,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self { budget: 80, tolerance_pp: 5.0, seed: 1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationStep {
    pub evaluation: usize,
    pub aim_sigma: f64,
    pub drift_sigma: f64,
    pub skip_prob: f64,
    pub mean: f64,
    pub sd: f64,
    pub objective: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub target: CalibrationTarget,
    pub model: ArmModel,
    pub achieved_mean: f64,
    pub achieved_sd: f64,
    pub objective: f64,
    pub evaluations: usize,
    /// A full sweep found no improvement before the budget ran out.
    pub converged: bool,
    pub trace: Vec<CalibrationStep>,
}

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("best candidate reached {:.2}% (target {:.2}%), outside the tolerance", best.achieved_mean, best.target.mean)]
    TargetMissed { best: Box<CalibrationReport> },
    #[error("calibration budget must allow at least one evaluation")]
    NoBudget,
    #[error(transparent)]
    Trial(#[from] TrialError),
}

#[derive(Clone, Copy)]
struct Point {
    aim: f64,
    drift: f64,
    skip: f64,
}

fn model_at(base: &ArmModel, p: Point) -> ArmModel {
    match base {
        ArmModel::Robot(_) => ArmModel::Robot(RobotExecution { aim_sigma: p.aim }),
        ArmModel::Human(m) => {
            ArmModel::Human(OperatorModel { aim_sigma: p.aim, drift_sigma: p.drift, skip_prob: p.skip, ..*m })
        }
    }
}

/// Fits the noise parameters of `base` so the simulated cohort matches `target`.
///
/// The objective is |mean − target.mean| + |sd − target.sd| of pooled per-subject
/// coverage. Starting from `base`, each parameter in turn is set to its best grid
/// value; sweeps repeat until one brings no improvement or the budget is spent.
pub fn calibrate_operator(
    trial: &PreparedTrial,
    base: ArmModel,
    target: CalibrationTarget,
    space: &SearchSpace,
    settings: &CalibrationSettings,
) -> Result<CalibrationReport, CalibrationError> {
    if settings.budget == 0 {
        return Err(CalibrationError::NoBudget);
    }
    let mut trace: Vec<CalibrationStep> = Vec::new();
    let mut evaluate = |p: Point| -> Result<CalibrationStep, TrialError> {
        let cov: Vec<f64> = trial
            .simulate_arm(&model_at(&base, p), Side::Right, settings.seed)?
            .iter()
            .map(|s| s.coverage_pct)
            .collect();
        let s = Summary::of(&cov);
        let step = CalibrationStep {
            evaluation: trace.len() + 1,
            aim_sigma: p.aim,
            drift_sigma: p.drift,
            skip_prob: p.skip,
            mean: s.mean,
            sd: s.sd,
            objective: (s.mean - target.mean).abs() + (s.sd - target.sd).abs(),
        };
        trace.push(step);
        Ok(step)
    };

    let start = match base {
        ArmModel::Robot(r) => Point { aim: space.aim_sigma.clamp(r.aim_sigma), drift: 0.0, skip: 0.0 },
        ArmModel::Human(m) => Point {
            aim: space.aim_sigma.clamp(m.aim_sigma),
            drift: space.drift_sigma.map_or(0.0, |r| r.clamp(m.drift_sigma)),
            skip: space.skip_prob.map_or(0.0, |r| r.clamp(m.skip_prob)),
        },
    };
    let mut best_point = start;
    let mut best = evaluate(start)?;
    let mut used = 1;
    let mut converged = false;

    let axes: Vec<(usize, ParamRange)> = [Some(space.aim_sigma), space.drift_sigma, space.skip_prob]
        .into_iter()
        .enumerate()
        .filter_map(|(i, r)| r.map(|r| (i, r)))
        .collect();
    'search: loop {
        let mut improved = false;
        for &(axis, range) in &axes {
            for v in range.values() {
                let mut p = best_point;
                let slot = match axis {
                    0 => &mut p.aim,
                    1 => &mut p.drift,
                    _ => &mut p.skip,
                };
                if *slot == v {
                    continue;
                }
                *slot = v;
                if used == settings.budget {
                    break 'search;
                }
                used += 1;
                let step = evaluate(p)?;
                if step.objective < best.objective {
                    best = step;
                    best_point = p;
                    improved = true;
                }
            }
        }
        if !improved {
            converged = true;
            break;
        }
    }

    let report = CalibrationReport {
        target,
        model: model_at(&base, best_point),
        achieved_mean: best.mean,
        achieved_sd: best.sd,
        objective: best.objective,
        evaluations: used,
        converged,
        trace,
    };
    if (report.achieved_mean - target.mean).abs() > settings.tolerance_pp {
        return Err(CalibrationError::TargetMissed { best: Box::new(report) });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trial::{prepare_trial, PatchSpec, TrialConfig};

    fn small_trial() -> PreparedTrial {
        prepare_trial(&TrialConfig {
            subjects: 4,
            pixel_size: 0.5,
            patches: vec![PatchSpec::forehead()],
            ..TrialConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn robot_search_moves_toward_target() {
        let trial = small_trial();
        let settings = CalibrationSettings { budget: 20, ..CalibrationSettings::default() };
        let target = CalibrationTarget { mean: 65.0, sd: 0.0 };
        let report = calibrate_operator(
            &trial,
            ArmModel::Robot(RobotExecution { aim_sigma: 0.0 }),
            target,
            &SearchSpace::for_arm(Arm::Robot),
            &settings,
        )
        .unwrap();
        assert!(report.evaluations <= 20);
        assert_eq!(report.trace.len(), report.evaluations);
        assert!(report.objective <= report.trace[0].objective);
        assert!((report.achieved_mean - 65.0).abs() < 5.0);
    }

    #[test]
    fn unreachable_target_reports_best_candidate() {
        let trial = small_trial();
        let err = calibrate_operator(
            &trial,
            ArmModel::Robot(RobotExecution::default()),
            CalibrationTarget { mean: 99.0, sd: 0.0 },
            &SearchSpace::for_arm(Arm::Robot),
            &CalibrationSettings { budget: 6, ..CalibrationSettings::default() },
        )
        .unwrap_err();
        match err {
            CalibrationError::TargetMissed { best } => {
                assert_eq!(best.evaluations, 6);
                assert!(best.achieved_mean < 94.0);
            }
            other => panic!("unexpected {other}"),
        }
    }
}
