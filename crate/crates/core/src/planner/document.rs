//! Versioned JSON plan document.

use serde::{Deserialize, Serialize};

use super::{LaserSpec, PlanSource, Shot, TreatmentPlan};
use crate::geometry::{Vec2, Vec3};

pub const PLAN_FORMAT: &str = "lasercover.plan";
pub const PLAN_VERSION: u32 = 1;

/// One shot as stored on disk: position, unit normal, uv and emit time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShotRecord {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub nx: f64,
    pub ny: f64,
    pub nz: f64,
    pub u: f64,
    pub v: f64,
    pub t: f64,
}

impl From<Shot> for ShotRecord {
    fn from(s: Shot) -> Self {
        Self {
            x: s.center.x,
            y: s.center.y,
            z: s.center.z,
            nx: s.normal.x,
            ny: s.normal.y,
            nz: s.normal.z,
            u: s.uv.x,
            v: s.uv.y,
            t: s.emit_time,
        }
    }
}

impl From<ShotRecord> for Shot {
    fn from(r: ShotRecord) -> Self {
        Self {
            center: Vec3::new(r.x, r.y, r.z),
            normal: Vec3::new(r.nx, r.ny, r.nz),
            uv: Vec2::new(r.u, r.v),
            emit_time: r.t,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanDocument {
    pub format: String,
    pub version: u32,
    pub source: PlanSource,
    pub laser: LaserSpec,
    pub standoff: f64,
    pub duration: f64,
    #[serde(default)]
    pub suppressed: usize,
    pub shots: Vec<ShotRecord>,
}

impl From<TreatmentPlan> for PlanDocument {
    fn from(p: TreatmentPlan) -> Self {
        Self {
            format: PLAN_FORMAT.to_owned(),
            version: PLAN_VERSION,
            source: p.source,
            laser: p.laser,
            standoff: p.standoff,
            duration: p.duration,
            suppressed: p.suppressed,
            shots: p.shots.into_iter().map(ShotRecord::from).collect(),
        }
    }
}

impl TryFrom<PlanDocument> for TreatmentPlan {
    type Error = String;

    fn try_from(d: PlanDocument) -> Result<Self, String> {
        if d.format != PLAN_FORMAT {
            return Err(format!("expected format \"{PLAN_FORMAT}\", got \"{}\"", d.format));
        }
        if d.version != PLAN_VERSION {
            return Err(format!("unsupported plan version {} (supported: {PLAN_VERSION})", d.version));
        }
        Ok(Self {
            shots: d.shots.into_iter().map(Shot::from).collect(),
            standoff: d.standoff,
            source: d.source,
            duration: d.duration,
            laser: d.laser,
            suppressed: d.suppressed,
        })
    }
}
