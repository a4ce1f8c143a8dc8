//! Triangulated skin surfaces, synthetic phantoms and operable treatment regions.
//!
//! Every surface carries a per-vertex uv parameterization in millimetres. Planning,
//! simulation and scoring all happen in uv and are lifted back onto the mesh when a
//! 3D pose is needed.

mod io;
mod region;

pub use io::{load_mesh, parse_mesh, parse_obj, parse_ply, save_mesh, MeshFormat};
pub use region::{define_region, ExclusionZone, LandmarkLabel, Region, RegionError, RegionSpec, RegionWarning};

use std::path::PathBuf;

use thiserror::Error;

use crate::geometry::{Bounds2, Vec2, Vec3};

/// Relative tolerance on the squared bounding diagonal below which a triangle is
/// considered to have zero area.
const DEGENERATE_AREA_REL: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum SurfaceError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported mesh format: {0}")]
    UnsupportedFormat(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("face {face} has {arity} vertices; only triangles are supported")]
    NonTriangularFace { face: usize, arity: usize },
    #[error("face {face} references vertex index {index} but the mesh has {vertex_count} vertices")]
    IndexOutOfRange { face: usize, index: i64, vertex_count: usize },
    #[error("triangle {face} is degenerate (zero area)")]
    DegenerateTriangle { face: usize },
    #[error("vertex {vertex} has a non-finite coordinate")]
    NonFinite { vertex: usize },
    #[error("vertex {vertex} has a zero-length normal")]
    ZeroNormal { vertex: usize },
    #[error("attribute {attribute} has {got} entries, expected {expected}")]
    AttributeCount { attribute: &'static str, got: usize, expected: usize },
    #[error("mesh has no triangles")]
    Empty,
    #[error("{name} must be positive and finite, got {value}")]
    InvalidDimension { name: &'static str, value: f64 },
    #[error("curvature radius {radius} mm is too tight; need at least {required} mm")]
    CurvatureTooTight { radius: f64, required: f64 },
}

/// Position and unit normal of a surface location.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfacePoint {
    pub position: Vec3,
    pub normal: Vec3,
    /// `false` when the uv location lies outside every triangle and was extrapolated
    /// from the nearest one.
    pub on_mesh: bool,
}

/// Validated triangle mesh with unit vertex normals and a uv parameterization.
#[derive(Clone, Debug)]
pub struct SurfaceModel {
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
    normals: Vec<Vec3>,
    uv: Vec<Vec2>,
    uv_provided: bool,
    area: f64,
    index: UvIndex,
}

impl SurfaceModel {
    /// Validates the mesh, normalizes or computes normals, and builds the uv lookup.
    ///
    /// Without an explicit parameterization the uv coordinates default to the xy
    /// projection of each vertex.
    pub fn new(
        vertices: Vec<Vec3>,
        triangles: Vec<[u32; 3]>,
        normals: Option<Vec<Vec3>>,
        uv: Option<Vec<Vec2>>,
    ) -> Result<Self, SurfaceError> {
        if triangles.is_empty() {
            return Err(SurfaceError::Empty);
        }
        if let Some(vertex) = vertices.iter().position(|v| !v.is_finite()) {
            return Err(SurfaceError::NonFinite { vertex });
        }
        let n = vertices.len();
        for (face, tri) in triangles.iter().enumerate() {
            if let Some(&index) = tri.iter().find(|&&i| i as usize >= n) {
                return Err(SurfaceError::IndexOutOfRange { face, index: index as i64, vertex_count: n });
            }
        }

        let mut lo = vertices[0];
        let mut hi = vertices[0];
        for v in &vertices {
            lo = Vec3::new(lo.x.min(v.x), lo.y.min(v.y), lo.z.min(v.z));
            hi = Vec3::new(hi.x.max(v.x), hi.y.max(v.y), hi.z.max(v.z));
        }
        let diag_sq = (hi - lo).dot(hi - lo);

        let mut area = 0.0;
        let mut face_normals = Vec::with_capacity(triangles.len());
        for (face, tri) in triangles.iter().enumerate() {
            let [a, b, c] = tri.map(|i| vertices[i as usize]);
            let cross = (b - a).cross(c - a);
            let twice = cross.norm();
            if !(twice > 2.0 * DEGENERATE_AREA_REL * diag_sq) {
                return Err(SurfaceError::DegenerateTriangle { face });
            }
            area += 0.5 * twice;
            face_normals.push(cross);
        }

        let normals = match normals {
            Some(given) => {
                if given.len() != n {
                    return Err(SurfaceError::AttributeCount { attribute: "normal", got: given.len(), expected: n });
                }
                given
                    .into_iter()
                    .enumerate()
                    .map(|(vertex, nrm)| {
                        // keep already-unit normals bit-exact across save/load
                        if (nrm.norm() - 1.0).abs() <= 1e-12 {
                            Ok(nrm)
                        } else {
                            nrm.normalized().ok_or(SurfaceError::ZeroNormal { vertex })
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()?
            }
            None => {
                // area-weighted face normals; unreferenced vertices face +z
                let mut acc = vec![Vec3::default(); n];
                for (tri, fnrm) in triangles.iter().zip(&face_normals) {
                    for &i in tri {
                        acc[i as usize] = acc[i as usize] + *fnrm;
                    }
                }
                acc.into_iter().map(|a| a.normalized().unwrap_or(Vec3::new(0.0, 0.0, 1.0))).collect()
            }
        };

        let uv_provided = uv.is_some();
        let uv = match uv {
            Some(uv) => {
                if uv.len() != n {
                    return Err(SurfaceError::AttributeCount { attribute: "uv", got: uv.len(), expected: n });
                }
                uv
            }
            None => vertices.iter().map(|v| Vec2::new(v.x, v.y)).collect(),
        };

        let index = UvIndex::build(&uv, &triangles);
        Ok(Self { vertices, triangles, normals, uv, uv_provided, area, index })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    pub fn uv(&self) -> &[Vec2] {
        &self.uv
    }

    /// Whether the uv coordinates came with the mesh (as opposed to the xy fallback).
    pub fn has_explicit_uv(&self) -> bool {
        self.uv_provided
    }

    /// Total 3D surface area in mm².
    pub fn area(&self) -> f64 {
        self.area
    }

    /// Extent of the uv parameterization domain.
    pub fn uv_bounds(&self) -> Bounds2 {
        self.index.bounds
    }

    /// Maps a uv location onto the mesh by barycentric interpolation.
    ///
    /// Locations outside the parameterization domain are extrapolated affinely from
    /// the nearest triangle and flagged with `on_mesh == false`.
    pub fn lift(&self, p: Vec2) -> SurfacePoint {
        let (tri, bary, on_mesh) = match self.index.locate(p, &self.uv, &self.triangles) {
            Some((t, b)) => (t, b, true),
            None => {
                let (t, b) = self.index.nearest(p, &self.uv, &self.triangles);
                (t, b, false)
            }
        };
        let [a, b, c] = self.triangles[tri].map(|i| i as usize);
        let position = self.vertices[a] * bary[0] + self.vertices[b] * bary[1] + self.vertices[c] * bary[2];
        let blended = self.normals[a] * bary[0] + self.normals[b] * bary[1] + self.normals[c] * bary[2];
        let normal = blended.normalized().unwrap_or_else(|| {
            let [pa, pb, pc] = [a, b, c].map(|i| self.vertices[i]);
            (pb - pa).cross(pc - pa).normalized().unwrap_or(Vec3::new(0.0, 0.0, 1.0))
        });
        SurfacePoint { position, normal, on_mesh }
    }

    /// Uniformly scaled copy (positions and uv).
    pub fn scaled(&self, s: f64) -> Result<Self, SurfaceError> {
        Self::new(
            self.vertices.iter().map(|&v| v * s).collect(),
            self.triangles.clone(),
            Some(self.normals.clone()),
            self.uv_provided.then(|| self.uv.iter().map(|&p| p * s).collect()),
        )
    }
}

fn check_dimension(name: &'static str, value: f64) -> Result<(), SurfaceError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(SurfaceError::InvalidDimension { name, value })
    }
}

/// Planar `width × height` rectangle in the z = 0 plane with identity uv.
pub fn make_flat_patch(width: f64, height: f64) -> Result<SurfaceModel, SurfaceError> {
    check_dimension("width", width)?;
    check_dimension("height", height)?;
    let vertices = vec![
        Vec3::new(0.0, 0.0, 0.0),
        Vec3::new(width, 0.0, 0.0),
        Vec3::new(width, height, 0.0),
        Vec3::new(0.0, height, 0.0),
    ];
    let uv = vertices.iter().map(|v| Vec2::new(v.x, v.y)).collect();
    SurfaceModel::new(vertices, vec![[0, 1, 2], [0, 2, 3]], Some(vec![Vec3::new(0.0, 0.0, 1.0); 4]), Some(uv))
}

/// Cylindrical-section phantom curving along the width direction.
///
/// The cylinder axis is parallel to y. `u` is arc length across the curved direction
/// and `v` runs along the axis, so uv distances are geodesic millimetres.
pub fn make_cheek_phantom(width: f64, height: f64, curvature_radius: f64) -> Result<SurfaceModel, SurfaceError> {
    check_dimension("width", width)?;
    check_dimension("height", height)?;
    check_dimension("curvature_radius", curvature_radius)?;
    let required = width.max(height) / 2.0;
    if curvature_radius < required {
        return Err(SurfaceError::CurvatureTooTight { radius: curvature_radius, required });
    }

    // ~1 mm strips across the curve, ~4 mm along the straight axis
    let nu = (width.ceil() as usize).clamp(2, 512);
    let nv = ((height / 4.0).ceil() as usize).clamp(1, 128);
    let mut vertices = Vec::with_capacity((nu + 1) * (nv + 1));
    let mut normals = Vec::with_capacity(vertices.capacity());
    let mut uv = Vec::with_capacity(vertices.capacity());
    for j in 0..=nv {
        let v = height * j as f64 / nv as f64;
        for i in 0..=nu {
            let u = width * i as f64 / nu as f64;
            let theta = (u - width / 2.0) / curvature_radius;
            let (s, c) = theta.sin_cos();
            let half = (theta / 2.0).sin();
            vertices.push(Vec3::new(width / 2.0 + curvature_radius * s, v, -2.0 * curvature_radius * half * half));
            normals.push(Vec3::new(s, 0.0, c));
            uv.push(Vec2::new(u, v));
        }
    }
    let row = nu + 1;
    let mut triangles = Vec::with_capacity(2 * nu * nv);
    for j in 0..nv {
        for i in 0..nu {
            let a = (j * row + i) as u32;
            let b = a + 1;
            let c = b + row as u32;
            let d = a + row as u32;
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    SurfaceModel::new(vertices, triangles, Some(normals), Some(uv))
}

/// Uniform bucket grid over the uv domain for point location.
#[derive(Clone, Debug)]
struct UvIndex {
    bounds: Bounds2,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<u32>>,
}

impl UvIndex {
    fn build(uv: &[Vec2], triangles: &[[u32; 3]]) -> Self {
        let mut bounds = Bounds2::empty();
        for tri in triangles {
            for &i in tri {
                bounds.include(uv[i as usize]);
            }
        }
        let side = (triangles.len() as f64).sqrt().ceil().max(1.0) as usize;
        let (nx, ny) = (side.min(256), side.min(256));
        let mut cells = vec![Vec::new(); nx * ny];
        let index = Self { bounds, nx, ny, cells: Vec::new() };
        for (t, tri) in triangles.iter().enumerate() {
            let mut tb = Bounds2::empty();
            for &i in tri {
                tb.include(uv[i as usize]);
            }
            let (x0, y0) = index.cell_of(tb.min);
            let (x1, y1) = index.cell_of(tb.max);
            for cy in y0..=y1 {
                for cx in x0..=x1 {
                    cells[cy * nx + cx].push(t as u32);
                }
            }
        }
        Self { cells, ..index }
    }

    fn cell_of(&self, p: Vec2) -> (usize, usize) {
        let fx = (p.x - self.bounds.min.x) / self.bounds.width().max(f64::MIN_POSITIVE);
        let fy = (p.y - self.bounds.min.y) / self.bounds.height().max(f64::MIN_POSITIVE);
        let cx = ((fx * self.nx as f64).floor().max(0.0) as usize).min(self.nx - 1);
        let cy = ((fy * self.ny as f64).floor().max(0.0) as usize).min(self.ny - 1);
        (cx, cy)
    }

    fn locate(&self, p: Vec2, uv: &[Vec2], triangles: &[[u32; 3]]) -> Option<(usize, [f64; 3])> {
        if !self.bounds.contains(p, 1e-9) {
            return None;
        }
        let (cx, cy) = self.cell_of(p);
        const TOL: f64 = -1e-12;
        self.cells[cy * self.nx + cx].iter().find_map(|&t| {
            let b = barycentric(p, triangles[t as usize], uv)?;
            (b[0] >= TOL && b[1] >= TOL && b[2] >= TOL).then_some((t as usize, b))
        })
    }

    fn nearest(&self, p: Vec2, uv: &[Vec2], triangles: &[[u32; 3]]) -> (usize, [f64; 3]) {
        let mut best = (0, [1.0, 0.0, 0.0]);
        let mut best_d = f64::INFINITY;
        for (t, &tri) in triangles.iter().enumerate() {
            let [a, b, c] = tri.map(|i| uv[i as usize]);
            let d = crate::geometry::segment_distance_sq(p, a, b)
                .min(crate::geometry::segment_distance_sq(p, b, c))
                .min(crate::geometry::segment_distance_sq(p, c, a));
            if d < best_d {
                if let Some(bary) = barycentric(p, tri, uv) {
                    best_d = d;
                    best = (t, bary);
                }
            }
        }
        best
    }
}

fn barycentric(p: Vec2, tri: [u32; 3], uv: &[Vec2]) -> Option<[f64; 3]> {
    let [a, b, c] = tri.map(|i| uv[i as usize]);
    let det = (b - a).cross(c - a);
    if det == 0.0 {
        return None;
    }
    let s = (p - a).cross(c - a) / det;
    let t = (b - a).cross(p - a) / det;
    Some([1.0 - s - t, s, t])
}
