use serde::Serialize;

use super::{find_overlaps, PlanSource, TreatmentPlan};
use crate::geometry::Vec2;
use crate::surface::{LandmarkLabel, Region};

/// Shot centers further than this from the surface are off-surface (mm).
const SURFACE_TOL: f64 = 1e-6;
/// Allowed deviation of the emitter distance from the nominal standoff (mm).
const STANDOFF_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    Overlap { first: usize, second: usize, distance: f64 },
    FootprintOutside { shot: usize },
    ExclusionClearance { shot: usize, zone: usize, label: LandmarkLabel },
    Standoff { shot: usize, deviation: f64 },
    OffSurface { shot: usize, distance: f64 },
    NonMonotoneTime { shot: usize },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ViolationCounts {
    pub overlap: usize,
    pub footprint_outside: usize,
    pub exclusion_clearance: usize,
    pub standoff: usize,
    pub off_surface: usize,
    pub non_monotone_time: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub counts: ViolationCounts,
}

impl ValidationReport {
    pub fn is_conformant(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, v: Violation) {
        let c = &mut self.counts;
        match v {
            Violation::Overlap { .. } => c.overlap += 1,
            Violation::FootprintOutside { .. } => c.footprint_outside += 1,
            Violation::ExclusionClearance { .. } => c.exclusion_clearance += 1,
            Violation::Standoff { .. } => c.standoff += 1,
            Violation::OffSurface { .. } => c.off_surface += 1,
            Violation::NonMonotoneTime { .. } => c.non_monotone_time += 1,
        }
        self.violations.push(v);
    }
}

/// Checks every shot of `plan` against `region`.
///
/// Pairwise overlap is only a violation for robot plans; freehand passes overlap by
/// nature.
pub fn validate_plan(plan: &TreatmentPlan, region: &Region) -> ValidationReport {
    let mut report = ValidationReport::default();
    let r = plan.laser.radius();
    let surface = region.surface();

    if plan.source == PlanSource::Robot {
        let centers: Vec<Vec2> = plan.shots.iter().map(|s| s.uv).collect();
        for (first, second, distance) in find_overlaps(&centers, plan.laser.spot_diameter, false) {
            report.push(Violation::Overlap { first, second, distance });
        }
    }

    let mut prev_t = f64::NEG_INFINITY;
    for (i, s) in plan.shots.iter().enumerate() {
        if !region.disc_in_selection(s.uv, r) {
            report.push(Violation::FootprintOutside { shot: i });
        }
        if let Some(zone) = region.disc_exclusion_hit(s.uv, r) {
            report.push(Violation::ExclusionClearance { shot: i, zone, label: region.exclusions()[zone].label });
        }
        let deviation = (s.emitter(plan.standoff).distance(s.center) - plan.standoff).abs();
        if !(deviation <= STANDOFF_TOL) {
            report.push(Violation::Standoff { shot: i, deviation });
        }
        let distance = surface.lift(s.uv).position.distance(s.center);
        if !(distance <= SURFACE_TOL) {
            report.push(Violation::OffSurface { shot: i, distance });
        }
        if !(s.emit_time >= prev_t) {
            report.push(Violation::NonMonotoneTime { shot: i });
        }
        prev_t = s.emit_time;
    }
    report
}
