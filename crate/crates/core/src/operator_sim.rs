//! Stochastic execution models: freehand operator passes and robot aim noise.
//!
//! Every pass draws from its own counter-based ChaCha stream, and the number and order
//! of draws per intended site is fixed (density, then aim x/y, drift, skip, interval),
//! so runs are reproducible and candidates with different noise levels share random
//! numbers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;
use crate::planner::{
    boustrophedon_order, lattice_sites, lift_shots, BoundaryPolicy, LaserSpec, LatticePattern, PlanError, PlanSource,
    TreatmentPlan,
};
use crate::surface::Region;

/// Freehand operator behaviour for one handpiece pass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OperatorModel {
    /// Isotropic per-shot aiming error (mm, 1σ per axis).
    pub aim_sigma: f64,
    /// Per-shot step of the random walk that displaces the intended scanline
    /// across the stroke direction; it carries over from stroke to stroke (mm).
    pub drift_sigma: f64,
    /// Probability that an intended site is never fired.
    pub skip_prob: f64,
    /// Standard deviation of the per-pass shot density factor (normal around 1).
    pub density_cv: f64,
    /// Mean firing rate (shots/s).
    pub rate_mean: f64,
    /// Coefficient of variation of the inter-shot interval (lognormal).
    pub rate_cv: f64,
    /// Lattice the operator has in mind.
    pub intent_pattern: LatticePattern,
}

impl OperatorModel {
    // Noise defaults fitted with `calibrate_operator` to 43.6 % mean coverage on the
    // default two-patch layout (200 subjects, 0.2 mm pixels, seed 1).
    pub const DEFAULT_AIM_SIGMA: f64 = 4.0;
    pub const DEFAULT_DRIFT_SIGMA: f64 = 1.75;
    pub const DEFAULT_SKIP_PROB: f64 = 0.0;
    pub const DEFAULT_DENSITY_CV: f64 = 0.4;
    pub const DEFAULT_RATE_MEAN: f64 = 217.1 / 78.6;
    pub const DEFAULT_RATE_CV: f64 = 0.3;

    /// No aiming error, no skips, unit density: the intended lattice exactly.
    pub fn noiseless() -> Self {
        Self { aim_sigma: 0.0, drift_sigma: 0.0, skip_prob: 0.0, density_cv: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        let bad = |field: &'static str, value: f64| Err(SimError::InvalidParameter { field, value });
        if !nonneg(self.aim_sigma) {
            return bad("aim_sigma", self.aim_sigma);
        }
        if !nonneg(self.drift_sigma) {
            return bad("drift_sigma", self.drift_sigma);
        }
        if !(0.0..1.0).contains(&self.skip_prob) {
            return bad("skip_prob", self.skip_prob);
        }
        if !nonneg(self.density_cv) {
            return bad("density_cv", self.density_cv);
        }
        if !(self.rate_mean > 0.0 && self.rate_mean.is_finite()) {
            return bad("rate_mean", self.rate_mean);
        }
        if !nonneg(self.rate_cv) {
            return bad("rate_cv", self.rate_cv);
        }
        Ok(())
    }
}

impl Default for OperatorModel {
    fn default() -> Self {
        Self {
            aim_sigma: Self::DEFAULT_AIM_SIGMA,
            drift_sigma: Self::DEFAULT_DRIFT_SIGMA,
            skip_prob: Self::DEFAULT_SKIP_PROB,
            density_cv: Self::DEFAULT_DENSITY_CV,
            rate_mean: Self::DEFAULT_RATE_MEAN,
            rate_cv: Self::DEFAULT_RATE_CV,
            intent_pattern: LatticePattern::Hex,
        }
    }
}

/// Positioning error of the robot arm at each pose.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobotExecution {
    /// Isotropic aiming error at the skin (mm, 1σ per axis).
    pub aim_sigma: f64,
}

impl RobotExecution {
    /// Fitted with `calibrate_operator` to 60.2 % mean coverage on the default layout.
    pub const DEFAULT_AIM_SIGMA: f64 = 2.25;

    pub fn validate(&self) -> Result<(), SimError> {
        if self.aim_sigma >= 0.0 && self.aim_sigma.is_finite() {
            Ok(())
        } else {
            Err(SimError::InvalidParameter { field: "aim_sigma", value: self.aim_sigma })
        }
    }
}

impl Default for RobotExecution {
    fn default() -> Self {
        Self { aim_sigma: Self::DEFAULT_AIM_SIGMA }
    }
}

/// Seed plus stream index of one pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed {
    pub seed: u64,
    pub stream: u64,
}

impl RngSeed {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Stream of a (subject, side, patch) pass.
    pub fn for_pass(seed: u64, subject: usize, side: usize, patch: usize) -> Self {
        let stream = ((subject as u64) << 24) | ((side as u64 & 0xff) << 16) | (patch as u64 & 0xffff);
        Self::new(seed, stream)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("{field} = {value} is out of range")]
    InvalidParameter { field: &'static str, value: f64 },
    #[error(transparent)]
    Plan(#[from] PlanError),
}

/// Smallest shot density factor a pass can draw.
pub const MIN_DENSITY_FACTOR: f64 = 0.1;

/// Per-pass density factor `1 + cv·z`, floored at [`MIN_DENSITY_FACTOR`].
fn density_factor(z: f64, cv: f64) -> f64 {
    (1.0 + cv * z).max(MIN_DENSITY_FACTOR)
}

/// One freehand pass over `region`.
///
/// The operator intends a lattice of pitch `d / √k` (k the density factor), works it
/// stroke by stroke in serpentine order and fires at lognormal intervals. Fired
/// positions carry aim error and the scanline drift; they are not clipped to the
/// region. With [`OperatorModel::noiseless`] the pass equals the robot lattice of the
/// same pattern.
pub fn simulate_pass(
    region: &Region,
    laser: &LaserSpec,
    model: &OperatorModel,
    standoff: f64,
    seed: RngSeed,
) -> Result<TreatmentPlan, SimError> {
    laser.validate()?;
    model.validate()?;
    if !region.is_plannable() {
        return Err(PlanError::RegionNotPlannable.into());
    }
    let mut rng = seed.rng();
    let k = density_factor(rng.sample(StandardNormal), model.density_cv);
    let pitch = laser.spot_diameter / k.sqrt();
    let sites = lattice_sites(region, pitch, laser.radius(), model.intent_pattern, BoundaryPolicy::Inside);
    let order = boustrophedon_order(&sites);

    let s2 = (1.0 + model.rate_cv * model.rate_cv).ln();
    let mu = (1.0 / model.rate_mean).ln() - s2 / 2.0;

    let mut fired: Vec<Vec2> = Vec::with_capacity(order.len());
    let mut times: Vec<f64> = Vec::with_capacity(order.len());
    let mut t = 0.0;
    let mut drift = 0.0;
    for &i in &order {
        let site = sites[i];
        let ax: f64 = rng.sample(StandardNormal);
        let ay: f64 = rng.sample(StandardNormal);
        let dz: f64 = rng.sample(StandardNormal);
        let u: f64 = rng.random();
        let zt: f64 = rng.sample(StandardNormal);

        drift += model.drift_sigma * dz;
        if u < model.skip_prob {
            continue;
        }
        t += (mu + s2.sqrt() * zt).exp();
        fired.push(Vec2::new(site.x + model.aim_sigma * ax, site.y + model.aim_sigma * ay + drift));
        times.push(t);
    }

    let mut shots = lift_shots(region, fired);
    for (s, &t) in shots.iter_mut().zip(&times) {
        s.emit_time = t;
    }
    Ok(TreatmentPlan {
        duration: times.last().copied().unwrap_or(0.0),
        shots,
        standoff,
        source: PlanSource::Human,
        laser: *laser,
        suppressed: 0,
    })
}

/// Robot execution of `plan` with aim error at each pose.
///
/// The landmark interlock withholds any shot whose perturbed footprint would reach a
/// dilated exclusion zone; the count lands in `suppressed`. Emit times are kept, so
/// the duration is the last fired shot.
pub fn apply_execution_noise(
    plan: &TreatmentPlan,
    region: &Region,
    exec: &RobotExecution,
    seed: RngSeed,
) -> Result<TreatmentPlan, SimError> {
    exec.validate()?;
    let mut rng = seed.rng();
    let r = plan.laser.radius();
    let mut uv = Vec::with_capacity(plan.shots.len());
    let mut times = Vec::with_capacity(plan.shots.len());
    let mut suppressed = 0;
    for s in &plan.shots {
        let ax: f64 = rng.sample(StandardNormal);
        let ay: f64 = rng.sample(StandardNormal);
        let p = Vec2::new(s.uv.x + exec.aim_sigma * ax, s.uv.y + exec.aim_sigma * ay);
        if region.disc_exclusion_hit(p, r).is_some() {
            suppressed += 1;
            continue;
        }
        uv.push(p);
        times.push(s.emit_time);
    }
    let mut shots = lift_shots(region, uv);
    for (s, &t) in shots.iter_mut().zip(&times) {
        s.emit_time = t;
    }
    Ok(TreatmentPlan {
        duration: times.last().copied().unwrap_or(0.0),
        shots,
        standoff: plan.standoff,
        source: plan.source,
        laser: plan.laser,
        suppressed: plan.suppressed + suppressed,
    })
}
