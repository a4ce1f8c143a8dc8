use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::SurfaceModel;
use crate::coverage::{rasterize, CoverageError, DEFAULT_PIXEL_SIZE};
use crate::geometry::{Bounds2, Polygon, Vec2};

/// Slack on exact geometric containment tests (mm).
pub(crate) const GEOM_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LandmarkLabel {
    Eyes,
    Lips,
    Eyebrows,
    Hairline,
    Custom,
}

/// Landmark that must never be irradiated, as a simple polygon in uv.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExclusionZone {
    pub boundary: Polygon,
    pub label: LandmarkLabel,
}

impl ExclusionZone {
    pub fn new(boundary: Polygon, label: LandmarkLabel) -> Self {
        Self { boundary, label }
    }

    /// True when `p` lies within `margin` of the zone (Minkowski sum with a disc).
    pub fn dilated_contains(&self, p: Vec2, margin: f64) -> bool {
        self.boundary.contains(p) || self.boundary.boundary_distance(p) <= margin
    }

    /// Distance from `p` to the zone; zero inside it.
    pub fn distance(&self, p: Vec2) -> f64 {
        if self.boundary.contains(p) {
            0.0
        } else {
            self.boundary.boundary_distance(p)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionWarning {
    /// The selection lies entirely within dilated exclusions; valid but unplannable.
    ZeroOperableArea,
}

#[derive(Debug, Error)]
pub enum RegionError {
    #[error("selection is empty")]
    EmptySelection,
    #[error("selection polygon {index} is invalid: {reason}")]
    InvalidSelection { index: usize, reason: String },
    #[error("selection polygon {polygon} vertex {vertex} lies outside the surface parameterization")]
    SelectionOutsideDomain { polygon: usize, vertex: usize },
    #[error("exclusion zone {zone} is invalid: {reason}")]
    InvalidExclusion { zone: usize, reason: String },
    #[error("margin must be finite and non-negative, got {0}")]
    InvalidMargin(f64),
    #[error(transparent)]
    Raster(#[from] CoverageError),
}

/// Operable treatment area: selection minus margin-dilated landmark exclusions.
#[derive(Clone, Debug)]
pub struct Region {
    surface: Arc<SurfaceModel>,
    selection: Vec<Polygon>,
    exclusions: Vec<ExclusionZone>,
    margin: f64,
    operable_area: f64,
    warnings: Vec<RegionWarning>,
}

/// Serializable inputs of [`define_region`]; the region file format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub selection: Vec<Polygon>,
    #[serde(default)]
    pub exclusions: Vec<ExclusionZone>,
    /// mm
    #[serde(default)]
    pub margin: f64,
}

impl RegionSpec {
    pub fn build(&self, surface: Arc<SurfaceModel>) -> Result<Region, RegionError> {
        define_region(surface, self.selection.clone(), self.exclusions.clone(), self.margin)
    }
}

/// Builds a region and computes its operable area U at the default raster resolution.
pub fn define_region(
    surface: Arc<SurfaceModel>,
    selection: Vec<Polygon>,
    exclusions: Vec<ExclusionZone>,
    margin: f64,
) -> Result<Region, RegionError> {
    if selection.is_empty() {
        return Err(RegionError::EmptySelection);
    }
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(RegionError::InvalidMargin(margin));
    }
    let domain = surface.uv_bounds();
    for (index, poly) in selection.iter().enumerate() {
        if poly.len() < 3 || !poly.is_finite() || poly.area() <= 0.0 {
            return Err(RegionError::InvalidSelection {
                index,
                reason: "needs at least 3 finite vertices and positive area".into(),
            });
        }
        if let Some(vertex) = poly.vertices.iter().position(|&v| !domain.contains(v, 1e-6)) {
            return Err(RegionError::SelectionOutsideDomain { polygon: index, vertex });
        }
    }
    for (zone, ex) in exclusions.iter().enumerate() {
        if ex.boundary.len() < 3 || !ex.boundary.is_finite() {
            return Err(RegionError::InvalidExclusion { zone, reason: "needs at least 3 finite vertices".into() });
        }
        if let Some((a, b)) = ex.boundary.self_intersection() {
            return Err(RegionError::InvalidExclusion { zone, reason: format!("edges {a} and {b} intersect") });
        }
        if ex.boundary.area() <= 0.0 {
            return Err(RegionError::InvalidExclusion { zone, reason: "zero area".into() });
        }
    }

    let mut region = Region { surface, selection, exclusions, margin, operable_area: 0.0, warnings: Vec::new() };
    match rasterize(&region, DEFAULT_PIXEL_SIZE) {
        Ok(mask) => region.operable_area = mask.operable_area(),
        Err(CoverageError::DegenerateResolution { .. }) => {}
        Err(e) => return Err(e.into()),
    }
    if region.operable_area <= 0.0 {
        region.warnings.push(RegionWarning::ZeroOperableArea);
    }
    Ok(region)
}

impl Region {
    pub fn surface(&self) -> &Arc<SurfaceModel> {
        &self.surface
    }

    pub fn selection(&self) -> &[Polygon] {
        &self.selection
    }

    pub fn exclusions(&self) -> &[ExclusionZone] {
        &self.exclusions
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    /// U in mm², rasterized at [`DEFAULT_PIXEL_SIZE`].
    pub fn operable_area(&self) -> f64 {
        self.operable_area
    }

    pub fn warnings(&self) -> &[RegionWarning] {
        &self.warnings
    }

    pub fn is_plannable(&self) -> bool {
        self.operable_area > 0.0
    }

    pub fn spec(&self) -> RegionSpec {
        RegionSpec { selection: self.selection.clone(), exclusions: self.exclusions.clone(), margin: self.margin }
    }

    pub fn selection_bounds(&self) -> Bounds2 {
        self.selection.iter().map(Polygon::bounds).reduce(|a, b| a.union(&b)).unwrap_or_else(Bounds2::empty)
    }

    pub fn in_selection(&self, p: Vec2) -> bool {
        self.selection.iter().any(|s| s.contains(p))
    }

    pub fn is_operable(&self, p: Vec2) -> bool {
        self.in_selection(p) && !self.exclusions.iter().any(|e| e.dilated_contains(p, self.margin))
    }

    /// Whether a disc of `radius` around `center` lies within one selection polygon.
    pub fn disc_in_selection(&self, center: Vec2, radius: f64) -> bool {
        self.selection.iter().any(|s| s.contains(center) && s.boundary_distance(center) >= radius - GEOM_EPS)
    }

    /// Index of the first dilated exclusion the disc overlaps, if any.
    pub fn disc_exclusion_hit(&self, center: Vec2, radius: f64) -> Option<usize> {
        self.exclusions.iter().position(|e| e.distance(center) < self.margin + radius - GEOM_EPS)
    }

    /// Whole-footprint containment in the operable region.
    pub fn disc_inside(&self, center: Vec2, radius: f64) -> bool {
        self.disc_in_selection(center, radius) && self.disc_exclusion_hit(center, radius).is_none()
    }

    /// Same region on a uniformly scaled surface (all lengths × `s`).
    pub fn scaled(&self, s: f64) -> Result<Self, RegionError> {
        let surface = Arc::new(
            self.surface.scaled(s).map_err(|e| RegionError::InvalidSelection { index: 0, reason: e.to_string() })?,
        );
        define_region(
            surface,
            self.selection.iter().map(|p| p.scaled(s)).collect(),
            self.exclusions.iter().map(|e| ExclusionZone::new(e.boundary.scaled(s), e.label)).collect(),
            self.margin * s,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::make_flat_patch;

    fn patch() -> Arc<SurfaceModel> {
        Arc::new(make_flat_patch(40.0, 50.0).unwrap())
    }

    fn central_square() -> ExclusionZone {
        ExclusionZone::new(Polygon::rect(15.0, 20.0, 10.0, 10.0), LandmarkLabel::Eyes)
    }

    #[test]
    fn full_patch_has_full_area() {
        let r = define_region(patch(), vec![Polygon::rect(0.0, 0.0, 40.0, 50.0)], vec![], 0.0).unwrap();
        assert!((r.operable_area() - 2000.0).abs() <= 10.0);
        assert!(r.is_plannable());
    }

    #[test]
    fn central_exclusion_without_margin() {
        let r = define_region(patch(), vec![Polygon::rect(0.0, 0.0, 40.0, 50.0)], vec![central_square()], 0.0).unwrap();
        assert!((r.operable_area() - 1900.0).abs() <= 9.5);
    }

    /// Brute-force dilation oracle: seed pixels whose centers fall in the square,
    /// then mark every pixel within `margin` of any seed pixel.
    fn brute_force_operable(px: f64, margin: f64) -> f64 {
        let (nx, ny) = ((40.0 / px).round() as usize, (50.0 / px).round() as usize);
        let center = |i: usize| (i as f64 + 0.5) * px;
        let seeds: Vec<(f64, f64)> = (0..ny)
            .flat_map(|j| (0..nx).map(move |i| (i, j)))
            .map(|(i, j)| (center(i), center(j)))
            .filter(|&(x, y)| (15.0..25.0).contains(&x) && (20.0..30.0).contains(&y))
            .collect();
        let mut excluded = 0usize;
        for j in 0..ny {
            for i in 0..nx {
                let (x, y) = (center(i), center(j));
                if x < 15.0 - margin - px || x > 25.0 + margin + px {
                    continue;
                }
                if y < 20.0 - margin - px || y > 30.0 + margin + px {
                    continue;
                }
                if seeds.iter().any(|&(sx, sy)| (sx - x).powi(2) + (sy - y).powi(2) <= margin * margin) {
                    excluded += 1;
                }
            }
        }
        (nx * ny - excluded) as f64 * px * px
    }

    #[test]
    fn central_exclusion_with_margin() {
        let r = define_region(patch(), vec![Polygon::rect(0.0, 0.0, 40.0, 50.0)], vec![central_square()], 2.0).unwrap();
        // Euclidean dilation rounds the corners: 14² − (4 − π)·2²
        let analytic = 2000.0 - (196.0 - (4.0 - std::f64::consts::PI) * 4.0);
        let oracle = brute_force_operable(0.1, 2.0);
        assert!((oracle - analytic).abs() / analytic < 0.005, "oracle {oracle}");
        assert!((r.operable_area() - oracle).abs() / oracle < 0.005);
        assert!((r.operable_area() - 1804.0).abs() / 1804.0 < 0.005);
    }

    #[test]
    fn selection_inside_exclusion_warns() {
        let r = define_region(patch(), vec![Polygon::rect(17.0, 22.0, 6.0, 6.0)], vec![central_square()], 1.0).unwrap();
        assert_eq!(r.operable_area(), 0.0);
        assert_eq!(r.warnings(), &[RegionWarning::ZeroOperableArea]);
        assert!(!r.is_plannable());
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(define_region(patch(), vec![], vec![], 0.0), Err(RegionError::EmptySelection)));
        assert!(matches!(
            define_region(patch(), vec![Polygon::rect(0.0, 0.0, 60.0, 50.0)], vec![], 0.0),
            Err(RegionError::SelectionOutsideDomain { polygon: 0, vertex: 1 })
        ));
        let bowtie = Polygon::new(vec![
            Vec2::new(10.0, 10.0),
            Vec2::new(20.0, 20.0),
            Vec2::new(20.0, 10.0),
            Vec2::new(10.0, 20.0),
        ]);
        assert!(matches!(
            define_region(
                patch(),
                vec![Polygon::rect(0.0, 0.0, 40.0, 50.0)],
                vec![ExclusionZone::new(bowtie, LandmarkLabel::Lips)],
                0.0
            ),
            Err(RegionError::InvalidExclusion { zone: 0, .. })
        ));
    }

    #[test]
    fn disc_predicates() {
        let r = define_region(patch(), vec![Polygon::rect(0.0, 0.0, 40.0, 50.0)], vec![central_square()], 2.0).unwrap();
        assert!(r.disc_inside(Vec2::new(3.0, 3.0), 3.0));
        assert!(!r.disc_inside(Vec2::new(2.9, 3.0), 3.0));
        // 5 mm left of the square: clear of margin 2 + radius 3 exactly
        assert!(r.disc_exclusion_hit(Vec2::new(10.0, 25.0), 3.0).is_none());
        assert_eq!(r.disc_exclusion_hit(Vec2::new(10.5, 25.0), 3.0), Some(0));
    }
}
