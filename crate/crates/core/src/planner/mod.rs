//! Robot treatment planning: non-overlapping spot lattices, serpentine ordering,
//! constant-standoff poses and the dwell/travel timing model.

mod document;
mod validate;

pub use document::{PlanDocument, ShotRecord, PLAN_FORMAT, PLAN_VERSION};
pub use validate::{validate_plan, ValidationReport, Violation, ViolationCounts};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Vec2, Vec3};
use crate::surface::Region;

/// Tolerance on the pairwise non-overlap inequality (mm).
pub const OVERLAP_EPS: f64 = 1e-6;

/// Centers closer than this in v share a serpentine row (mm).
const ROW_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaserSpec {
    /// nm
    pub wavelength: f64,
    /// mm
    pub spot_diameter: f64,
    /// mJ/cm² per shot
    pub fluence: f64,
}

impl Default for LaserSpec {
    /// Q-switched Nd:YAG settings used in the split-face protocol.
    fn default() -> Self {
        Self { wavelength: 1064.0, spot_diameter: 6.0, fluence: 600.0 }
    }
}

impl LaserSpec {
    pub fn validate(&self) -> Result<(), PlanError> {
        if self.spot_diameter > 0.0 && self.spot_diameter.is_finite() && self.fluence > 0.0 {
            Ok(())
        } else {
            Err(PlanError::InvalidLaser(*self))
        }
    }

    pub fn radius(&self) -> f64 {
        self.spot_diameter / 2.0
    }

    /// Footprint area of one spot (mm²).
    pub fn spot_area(&self) -> f64 {
        std::f64::consts::PI * self.radius() * self.radius()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanSource {
    Robot,
    Human,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticePattern {
    #[default]
    Hex,
    Square,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryPolicy {
    /// Whole footprints inside the operable region.
    #[default]
    Inside,
    /// Only centers inside the operable region.
    CenterInside,
}

/// One laser pulse.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Shot {
    /// Point on the surface (mm).
    pub center: Vec3,
    pub normal: Vec3,
    /// Surface parameterization of `center` (mm).
    pub uv: Vec2,
    /// Seconds from plan start.
    pub emit_time: f64,
}

impl Shot {
    pub fn emitter(&self, standoff: f64) -> Vec3 {
        self.center + self.normal * standoff
    }
}

/// Ordered shot sequence with its laser settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlanDocument", into = "PlanDocument")]
pub struct TreatmentPlan {
    pub shots: Vec<Shot>,
    /// Emitter distance along the surface normal (mm).
    pub standoff: f64,
    pub source: PlanSource,
    /// Last emit time (s).
    pub duration: f64,
    pub laser: LaserSpec,
    /// Shots withheld by the landmark interlock during execution.
    pub suppressed: usize,
}

/// Arm motion and firing timing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KinematicModel {
    /// Emitter translation speed between shots (mm/s).
    pub travel_speed: f64,
    /// Time spent settling and firing at each shot (s).
    pub dwell: f64,
    /// Workspace radius around `base` (mm).
    pub reach: f64,
    /// Arm base position in model space (mm).
    pub base: Vec3,
}

impl KinematicModel {
    /// Dwell fitted so that the default forehead + cheek hex plans take 107.4 s in
    /// total at 60 mm/s (see `default_dwell_reproduces_reported_duration`).
    pub const DEFAULT_DWELL: f64 = 0.349_193_254_275_751_76;
    pub const DEFAULT_TRAVEL_SPEED: f64 = 60.0;
    /// UR5 maximum extension.
    pub const DEFAULT_REACH: f64 = 850.0;

    pub fn validate(&self) -> Result<(), PlanError> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if ok(self.travel_speed) && ok(self.dwell) && ok(self.reach) && self.base.is_finite() {
            Ok(())
        } else {
            Err(PlanError::InvalidKinematics)
        }
    }

    /// Dwell that makes `shots` pulses with `travel_mm` of emitter travel last
    /// `target_duration` seconds at this model's speed.
    pub fn fit_dwell(&self, shots: usize, travel_mm: f64, target_duration: f64) -> f64 {
        (target_duration - travel_mm / self.travel_speed) / shots as f64
    }
}

impl Default for KinematicModel {
    fn default() -> Self {
        Self {
            travel_speed: Self::DEFAULT_TRAVEL_SPEED,
            dwell: Self::DEFAULT_DWELL,
            reach: Self::DEFAULT_REACH,
            base: Vec3::new(0.0, 0.0, 400.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatticeWarning {
    /// No spot fits the region under the requested boundary policy.
    NoSpotFits,
}

/// Spot centers in uv, in lattice row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticePlan {
    pub centers: Vec<Vec2>,
    pub warning: Option<LatticeWarning>,
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("region has no operable area")]
    RegionNotPlannable,
    #[error("invalid laser settings {0:?}")]
    InvalidLaser(LaserSpec),
    #[error("kinematic parameters must be positive and finite")]
    InvalidKinematics,
    #[error("standoff must be finite and non-negative, got {0}")]
    InvalidStandoff(f64),
    #[error("plan has no spot centers")]
    NoCenters,
    #[error("centers {first} and {second} are {distance} mm apart, closer than the spot diameter")]
    Overlap { first: usize, second: usize, distance: f64 },
    #[error("emitter poses of shots {shots:?} are beyond the {reach} mm reach")]
    Unreachable { shots: Vec<usize>, reach: f64 },
}

/// Lays a non-overlapping lattice of spots over the region.
///
/// The lattice pitch equals the spot diameter (hex rows are √3/2 · pitch apart) and
/// the lattice is centered in the selection's bounding box, inset by the spot radius
/// under [`BoundaryPolicy::Inside`].
pub fn plan_lattice(
    region: &Region,
    laser: &LaserSpec,
    pattern: LatticePattern,
    policy: BoundaryPolicy,
) -> Result<LatticePlan, PlanError> {
    laser.validate()?;
    if !region.is_plannable() {
        return Err(PlanError::RegionNotPlannable);
    }
    let centers = lattice_sites(region, laser.spot_diameter, laser.radius(), pattern, policy);
    let warning = centers.is_empty().then_some(LatticeWarning::NoSpotFits);
    Ok(LatticePlan { centers, warning })
}

/// Lattice sites at an arbitrary `pitch`, filtered by footprints of `radius`.
pub(crate) fn lattice_sites(
    region: &Region,
    pitch: f64,
    radius: f64,
    pattern: LatticePattern,
    policy: BoundaryPolicy,
) -> Vec<Vec2> {
    let b = region.selection_bounds();
    let inset = match policy {
        BoundaryPolicy::Inside => radius,
        BoundaryPolicy::CenterInside => 0.0,
    };
    let (w, h) = (b.width() - 2.0 * inset, b.height() - 2.0 * inset);
    if !(w >= 0.0 && h >= 0.0 && pitch > 0.0) {
        return Vec::new();
    }
    let (row_step, odd_shift) = match pattern {
        LatticePattern::Square => (pitch, 0.0),
        LatticePattern::Hex => (pitch * 3f64.sqrt() / 2.0, pitch / 2.0),
    };
    let rows = (h / row_step + 1e-9).floor() as usize + 1;
    let shift = if rows > 1 && w >= odd_shift { odd_shift } else { 0.0 };
    let cols = ((w - shift) / pitch + 1e-9).floor() as usize + 1;
    let span_x = (cols - 1) as f64 * pitch + shift;
    let span_y = (rows - 1) as f64 * row_step;
    let x0 = b.min.x + inset + (w - span_x) / 2.0;
    let y0 = b.min.y + inset + (h - span_y) / 2.0;

    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let y = y0 + r as f64 * row_step;
        let xr = x0 + if r % 2 == 1 { shift } else { 0.0 };
        for c in 0..cols {
            let p = Vec2::new(xr + c as f64 * pitch, y);
            let keep = match policy {
                BoundaryPolicy::Inside => region.disc_inside(p, radius),
                BoundaryPolicy::CenterInside => region.is_operable(p),
            };
            if keep {
                out.push(p);
            }
        }
    }
    out
}

/// Serpentine visiting order: rows by ascending v, alternating u direction.
pub fn boustrophedon_order(centers: &[Vec2]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..centers.len()).collect();
    idx.sort_by(|&a, &b| centers[a].y.total_cmp(&centers[b].y).then(centers[a].x.total_cmp(&centers[b].x)));
    let mut order = Vec::with_capacity(idx.len());
    let mut row: Vec<usize> = Vec::new();
    let mut row_v = f64::NAN;
    let mut row_no = 0usize;
    let flush = |row: &mut Vec<usize>, row_no: &mut usize, order: &mut Vec<usize>| {
        if *row_no % 2 == 1 {
            row.reverse();
        }
        order.append(row);
        *row_no += 1;
    };
    for i in idx {
        if !row.is_empty() && (centers[i].y - row_v).abs() > ROW_TOLERANCE {
            flush(&mut row, &mut row_no, &mut order);
        }
        if row.is_empty() {
            row_v = centers[i].y;
        }
        row.push(i);
    }
    if !row.is_empty() {
        flush(&mut row, &mut row_no, &mut order);
    }
    order
}

/// First pair of centers closer than `min_distance − OVERLAP_EPS`.
pub(crate) fn find_overlaps(centers: &[Vec2], min_distance: f64, first_only: bool) -> Vec<(usize, usize, f64)> {
    use std::collections::HashMap;
    let cell = min_distance.max(1e-9);
    let key = |p: Vec2| ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, &p) in centers.iter().enumerate() {
        grid.entry(key(p)).or_default().push(i);
    }
    let mut out = Vec::new();
    for (i, &p) in centers.iter().enumerate() {
        let (kx, ky) = key(p);
        let mut near: Vec<usize> = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(v) = grid.get(&(kx + dx, ky + dy)) {
                    near.extend(v.iter().copied().filter(|&j| j > i));
                }
            }
        }
        near.sort_unstable();
        for j in near {
            let d = p.distance(centers[j]);
            if d < min_distance - OVERLAP_EPS {
                out.push((i, j, d));
                if first_only {
                    return out;
                }
            }
        }
    }
    out
}

/// Lifts uv centers to surface shots with emit times left at zero.
pub(crate) fn lift_shots(region: &Region, uv: impl IntoIterator<Item = Vec2>) -> Vec<Shot> {
    let surface = region.surface();
    uv.into_iter()
        .map(|p| {
            let sp = surface.lift(p);
            Shot { center: sp.position, normal: sp.normal, uv: p, emit_time: 0.0 }
        })
        .collect()
}

/// Orders centers serpentine-wise, lifts them to constant-standoff poses and applies
/// the dwell + travel timing model.
pub fn plan_trajectory(
    centers: &[Vec2],
    region: &Region,
    laser: &LaserSpec,
    kin: &KinematicModel,
    standoff: f64,
) -> Result<TreatmentPlan, PlanError> {
    laser.validate()?;
    kin.validate()?;
    if !(standoff >= 0.0 && standoff.is_finite()) {
        return Err(PlanError::InvalidStandoff(standoff));
    }
    if centers.is_empty() {
        return Err(PlanError::NoCenters);
    }
    if let Some(&(first, second, distance)) = find_overlaps(centers, laser.spot_diameter, true).first() {
        return Err(PlanError::Overlap { first, second, distance });
    }

    let order = boustrophedon_order(centers);
    let mut shots = lift_shots(region, order.iter().map(|&i| centers[i]));
    let unreachable: Vec<usize> = shots
        .iter()
        .enumerate()
        .filter(|(_, s)| s.emitter(standoff).distance(kin.base) > kin.reach)
        .map(|(i, _)| i)
        .collect();
    if !unreachable.is_empty() {
        return Err(PlanError::Unreachable { shots: unreachable, reach: kin.reach });
    }

    let mut t = 0.0;
    let mut prev: Option<Vec3> = None;
    for shot in &mut shots {
        let e = shot.emitter(standoff);
        t += kin.dwell + prev.map_or(0.0, |p| p.distance(e) / kin.travel_speed);
        shot.emit_time = t;
        prev = Some(e);
    }
    Ok(TreatmentPlan { duration: t, shots, standoff, source: PlanSource::Robot, laser: *laser, suppressed: 0 })
}

/// Inputs of a robot plan over a region; every field has a default.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanRequest {
    pub pattern: LatticePattern,
    pub boundary: BoundaryPolicy,
    pub laser: LaserSpec,
    /// mm
    pub standoff: f64,
    pub kinematics: KinematicModel,
}

impl Default for PlanRequest {
    fn default() -> Self {
        Self {
            pattern: LatticePattern::default(),
            boundary: BoundaryPolicy::default(),
            laser: LaserSpec::default(),
            standoff: 30.0,
            kinematics: KinematicModel::default(),
        }
    }
}

/// A robot plan and its validation against the region it was planned on.
#[derive(Clone, Debug, PartialEq)]
pub struct PlannedRegion {
    pub plan: TreatmentPlan,
    pub validation: ValidationReport,
}

/// Lattice, trajectory and validation in one step.
pub fn plan_region(region: &Region, req: &PlanRequest) -> Result<PlannedRegion, PlanError> {
    let lattice = plan_lattice(region, &req.laser, req.pattern, req.boundary)?;
    let plan = plan_trajectory(&lattice.centers, region, &req.laser, &req.kinematics, req.standoff)?;
    let validation = validate_plan(&plan, region);
    Ok(PlannedRegion { plan, validation })
}

impl TreatmentPlan {
    /// Total emitter path length between consecutive shots (mm).
    pub fn travel_distance(&self) -> f64 {
        self.shots.windows(2).map(|w| w[0].emitter(self.standoff).distance(w[1].emitter(self.standoff))).sum()
    }
}
