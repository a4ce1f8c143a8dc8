//! Raster ground truth for every area metric.
//!
//! Pixels are classified by their center point. A pixel is hit by a shot when its
//! center lies within the spot radius of the shot's uv center. All reported areas are
//! pixel counts times `pixel_size²`, so the tallies in [`PixelTally`] are exact.

mod export;

pub use export::{HeatmapLayer, HeatmapParseError};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;
use crate::par::{for_each_band, Execution};
use crate::planner::TreatmentPlan;
use crate::surface::Region;

/// Default raster pitch in mm.
pub const DEFAULT_PIXEL_SIZE: f64 = 0.05;

/// Refuse rasters larger than this many pixels.
pub const MAX_RASTER_PIXELS: usize = 200_000_000;

const ROWS_PER_BAND: usize = 32;

#[derive(Debug, Error)]
pub enum CoverageError {
    #[error("pixel size must be positive and finite, got {0}")]
    InvalidPixelSize(f64),
    #[error("pixel size {pixel_size} mm leaves no operable pixel")]
    DegenerateResolution { pixel_size: f64 },
    #[error("raster of {width}x{height} pixels exceeds the size limit")]
    RasterTooLarge { width: usize, height: usize },
    #[error("spot diameter must be positive, got {0}")]
    InvalidSpot(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
#[serde(rename_all = "lowercase")]
pub enum PixelLabel {
    Outside = 0,
    Operable = 1,
    Excluded = 2,
}

/// Digital mask of a region: one label per pixel, row-major, row 0 at minimum v.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterMask {
    pub origin: Vec2,
    pub pixel_size: f64,
    pub width: usize,
    pub height: usize,
    pub labels: Vec<PixelLabel>,
    operable_count: usize,
}

impl RasterMask {
    pub fn operable_count(&self) -> usize {
        self.operable_count
    }

    pub fn operable_area(&self) -> f64 {
        self.operable_count as f64 * self.pixel_size * self.pixel_size
    }

    pub fn pixel_center(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(
            self.origin.x + (i as f64 + 0.5) * self.pixel_size,
            self.origin.y + (j as f64 + 0.5) * self.pixel_size,
        )
    }

    pub fn label(&self, i: usize, j: usize) -> PixelLabel {
        self.labels[j * self.width + i]
    }
}

/// Classifies the pixels of the selection bounding box.
pub fn rasterize(region: &Region, pixel_size: f64) -> Result<RasterMask, CoverageError> {
    rasterize_with(region, pixel_size, Execution::default())
}

pub fn rasterize_with(region: &Region, pixel_size: f64, exec: Execution) -> Result<RasterMask, CoverageError> {
    if !(pixel_size > 0.0 && pixel_size.is_finite()) {
        return Err(CoverageError::InvalidPixelSize(pixel_size));
    }
    let bounds = region.selection_bounds();
    let width = (bounds.width() / pixel_size).ceil().max(1.0) as usize;
    let height = (bounds.height() / pixel_size).ceil().max(1.0) as usize;
    if width.saturating_mul(height) > MAX_RASTER_PIXELS {
        return Err(CoverageError::RasterTooLarge { width, height });
    }
    let origin = bounds.min;
    let mut labels = vec![PixelLabel::Outside; width * height];
    let margin = region.margin();

    let first_pixel = |x: f64| ((x - origin.x) / pixel_size - 0.5).ceil().max(0.0) as usize;
    for_each_band(exec, &mut labels, width, ROWS_PER_BAND, |row0, band| {
        let mut xs = Vec::new();
        for (k, row) in band.chunks_mut(width).enumerate() {
            let y = origin.y + ((row0 + k) as f64 + 0.5) * pixel_size;
            for poly in region.selection() {
                poly.row_crossings(y, &mut xs);
                for pair in xs.chunks_exact(2) {
                    let lo = first_pixel(pair[0]).min(width);
                    let hi = first_pixel(pair[1]).min(width);
                    row[lo..hi].fill(PixelLabel::Operable);
                }
            }
            for zone in region.exclusions() {
                let zb = zone.boundary.bounds();
                if y < zb.min.y - margin || y > zb.max.y + margin {
                    continue;
                }
                let lo = first_pixel(zb.min.x - margin).min(width);
                let hi = first_pixel(zb.max.x + margin).min(width);
                zone.boundary.row_crossings(y, &mut xs);
                for (i, px) in row.iter_mut().enumerate().take(hi).skip(lo) {
                    if *px != PixelLabel::Operable {
                        continue;
                    }
                    let x = origin.x + (i as f64 + 0.5) * pixel_size;
                    let inside = xs.iter().filter(|&&c| c > x).count() % 2 == 1;
                    if inside || zone.boundary.boundary_distance(Vec2::new(x, y)) <= margin {
                        *px = PixelLabel::Excluded;
                    }
                }
            }
        }
    });

    let operable_count = labels.iter().filter(|&&l| l == PixelLabel::Operable).count();
    if operable_count == 0 {
        return Err(CoverageError::DegenerateResolution { pixel_size });
    }
    Ok(RasterMask { origin, pixel_size, width, height, labels, operable_count })
}

/// Per-pixel hit counts over a mask's grid.
#[derive(Clone, Debug, PartialEq)]
pub struct HitGrid {
    pub width: usize,
    pub height: usize,
    pub counts: Vec<u32>,
}

/// Stamps a disc of `radius` at every uv center onto the mask's grid.
pub fn stamp_hits(mask: &RasterMask, centers: &[Vec2], radius: f64, exec: Execution) -> HitGrid {
    let (width, height) = (mask.width, mask.height);
    let mut counts = vec![0u32; width * height];
    let px = mask.pixel_size;
    let origin = mask.origin;
    let r2 = radius * radius;
    for_each_band(exec, &mut counts, width, ROWS_PER_BAND, |row0, band| {
        let rows = band.len() / width;
        for c in centers {
            let j0 = ((c.y - radius - origin.y) / px - 0.5).ceil().max(row0 as f64);
            let j1 = ((c.y + radius - origin.y) / px - 0.5).floor().min((row0 + rows) as f64 - 1.0);
            if !(j0 <= j1) {
                continue;
            }
            for j in j0 as usize..=j1 as usize {
                let dy = origin.y + (j as f64 + 0.5) * px - c.y;
                let rem = r2 - dy * dy;
                if rem < 0.0 {
                    continue;
                }
                let hw = rem.sqrt();
                let i0 = ((c.x - hw - origin.x) / px - 0.5).ceil().max(0.0);
                let i1 = ((c.x + hw - origin.x) / px - 0.5).floor().min(width as f64 - 1.0);
                if !(i0 <= i1) {
                    continue;
                }
                let row = &mut band[(j - row0) * width..(j - row0 + 1) * width];
                for v in &mut row[i0 as usize..=i1 as usize] {
                    *v += 1;
                }
            }
        }
    });
    HitGrid { width, height, counts }
}

/// Integer pixel tallies over operable pixels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelTally {
    pub operable: u64,
    pub union: u64,
    pub once: u64,
    pub multi: u64,
    /// Σ hit counts over operable pixels.
    pub hits: u64,
}

impl PixelTally {
    pub fn measure(mask: &RasterMask, hits: &HitGrid) -> Self {
        let mut t = Self::default();
        for (&label, &n) in mask.labels.iter().zip(&hits.counts) {
            if label != PixelLabel::Operable {
                continue;
            }
            t.operable += 1;
            t.hits += n as u64;
            match n {
                0 => {}
                1 => {
                    t.union += 1;
                    t.once += 1;
                }
                _ => {
                    t.union += 1;
                    t.multi += 1;
                }
            }
        }
        t
    }
}

/// Which area the headline `coverage_pct` is computed from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadlineMetric {
    #[default]
    Union,
}

/// Area metrics of one plan over one region (mm², %, count, s).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    /// U, the operable area.
    pub operable_area: f64,
    /// Φ, area hit at least once.
    pub phi_union: f64,
    pub exactly_once: f64,
    /// Area hit two or more times.
    pub multi: f64,
    /// U − Φ.
    pub uncovered: f64,
    /// Φ / U × 100.
    pub coverage_pct: f64,
    pub exactly_once_pct: f64,
    pub shots: usize,
    pub duration: f64,
    pub pixel_size: f64,
    pub headline_metric: HeadlineMetric,
    pub pixels: PixelTally,
}

impl CoverageReport {
    fn from_tally(t: PixelTally, pixel_size: f64, shots: usize, duration: f64) -> Self {
        let a = pixel_size * pixel_size;
        let pct = |n: u64| {
            if t.operable == 0 {
                0.0
            } else {
                n as f64 / t.operable as f64 * 100.0
            }
        };
        Self {
            operable_area: t.operable as f64 * a,
            phi_union: t.union as f64 * a,
            exactly_once: t.once as f64 * a,
            multi: t.multi as f64 * a,
            uncovered: (t.operable - t.union) as f64 * a,
            coverage_pct: pct(t.union),
            exactly_once_pct: pct(t.once),
            shots,
            duration,
            pixel_size,
            headline_metric: HeadlineMetric::Union,
            pixels: t,
        }
    }
}

fn spot_radius(plan: &TreatmentPlan) -> Result<f64, CoverageError> {
    let d = plan.laser.spot_diameter;
    if d > 0.0 && d.is_finite() {
        Ok(d / 2.0)
    } else {
        Err(CoverageError::InvalidSpot(d))
    }
}

pub fn plan_centers(plan: &TreatmentPlan) -> Vec<Vec2> {
    plan.shots.iter().map(|s| s.uv).collect()
}

/// Scores a plan against a precomputed mask.
pub fn score_plan(mask: &RasterMask, plan: &TreatmentPlan, exec: Execution) -> Result<CoverageReport, CoverageError> {
    let radius = spot_radius(plan)?;
    let hits = stamp_hits(mask, &plan_centers(plan), radius, exec);
    let tally = PixelTally::measure(mask, &hits);
    Ok(CoverageReport::from_tally(tally, mask.pixel_size, plan.shots.len(), plan.duration))
}

pub fn coverage_report(
    region: &Region,
    plan: &TreatmentPlan,
    pixel_size: f64,
) -> Result<CoverageReport, CoverageError> {
    let mask = rasterize(region, pixel_size)?;
    score_plan(&mask, plan, Execution::default())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoseStats {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

/// Cumulative fluence per pixel (mJ/cm²).
#[derive(Clone, Debug, PartialEq)]
pub struct DoseMap {
    pub mask: RasterMask,
    pub hits: HitGrid,
    pub fluence: f64,
    pub stats: DoseStats,
    /// Area of operable pixels hit two or more times.
    pub overdose_area: f64,
}

impl DoseMap {
    pub fn dose(&self, i: usize, j: usize) -> f64 {
        self.hits.counts[j * self.hits.width + i] as f64 * self.fluence
    }

    pub fn max_count(&self) -> u32 {
        self.hits.counts.iter().copied().max().unwrap_or(0)
    }
}

pub fn dose_map(region: &Region, plan: &TreatmentPlan, pixel_size: f64) -> Result<DoseMap, CoverageError> {
    let mask = rasterize(region, pixel_size)?;
    dose_map_with_mask(mask, plan, Execution::default())
}

pub fn dose_map_with_mask(mask: RasterMask, plan: &TreatmentPlan, exec: Execution) -> Result<DoseMap, CoverageError> {
    let radius = spot_radius(plan)?;
    let hits = stamp_hits(&mask, &plan_centers(plan), radius, exec);
    let fluence = plan.laser.fluence;
    let (mut lo, mut hi) = (u32::MAX, 0u32);
    let mut tally = PixelTally::default();
    for (&label, &n) in mask.labels.iter().zip(&hits.counts) {
        if label == PixelLabel::Operable {
            lo = lo.min(n);
            hi = hi.max(n);
            tally.operable += 1;
            tally.hits += n as u64;
            if n >= 2 {
                tally.multi += 1;
            }
        }
    }
    let stats = DoseStats {
        min: lo as f64 * fluence,
        mean: tally.hits as f64 / tally.operable as f64 * fluence,
        max: hi as f64 * fluence,
    };
    let overdose_area = tally.multi as f64 * mask.pixel_size * mask.pixel_size;
    Ok(DoseMap { mask, hits, fluence, stats, overdose_area })
}
