//! ASCII PLY and Wavefront OBJ mesh ingestion and export.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{SurfaceError, SurfaceModel};
use crate::geometry::{Vec2, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshFormat {
    Ply,
    Obj,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "ply" => Some(Self::Ply),
            "obj" => Some(Self::Obj),
            _ => None,
        }
    }

    /// Guess from content: PLY files start with the `ply` magic line.
    pub fn sniff(text: &str) -> Self {
        match text.trim_start().lines().next() {
            Some(first) if first.trim() == "ply" => Self::Ply,
            _ => Self::Obj,
        }
    }
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<SurfaceModel, SurfaceError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| SurfaceError::Io { path: path.to_path_buf(), source })?;
    let format = MeshFormat::from_path(path).unwrap_or_else(|| MeshFormat::sniff(&text));
    parse_mesh(&text, format)
}

pub fn parse_mesh(text: &str, format: MeshFormat) -> Result<SurfaceModel, SurfaceError> {
    match format {
        MeshFormat::Ply => parse_ply(text),
        MeshFormat::Obj => parse_obj(text),
    }
}

/// Writes the mesh in the format implied by the file extension (PLY by default).
pub fn save_mesh(surface: &SurfaceModel, path: impl AsRef<Path>) -> Result<(), SurfaceError> {
    let path = path.as_ref();
    let text = match MeshFormat::from_path(path) {
        Some(MeshFormat::Obj) => surface.to_obj_string(),
        _ => surface.to_ply_string(),
    };
    fs::write(path, text).map_err(|source| SurfaceError::Io { path: path.to_path_buf(), source })
}

impl SurfaceModel {
    /// ASCII PLY with positions, normals and (when explicit) uv.
    ///
    /// Floats use Rust's shortest round-trip formatting, so re-loading reproduces the
    /// vertex data bit for bit.
    pub fn to_ply_string(&self) -> String {
        let mut s = String::new();
        let uv = self.has_explicit_uv();
        s.push_str("ply\nformat ascii 1.0\ncomment lasercover surface\n");
        let _ = writeln!(s, "element vertex {}", self.vertices().len());
        for p in ["x", "y", "z", "nx", "ny", "nz"] {
            let _ = writeln!(s, "property double {p}");
        }
        if uv {
            s.push_str("property double u\nproperty double v\n");
        }
        let _ = writeln!(s, "element face {}", self.triangles().len());
        s.push_str("property list uchar int vertex_indices\nend_header\n");
        for (i, (p, n)) in self.vertices().iter().zip(self.normals()).enumerate() {
            let _ = write!(s, "{} {} {} {} {} {}", p.x, p.y, p.z, n.x, n.y, n.z);
            if uv {
                let t = self.uv()[i];
                let _ = write!(s, " {} {}", t.x, t.y);
            }
            s.push('\n');
        }
        for [a, b, c] in self.triangles() {
            let _ = writeln!(s, "3 {a} {b} {c}");
        }
        s
    }

    pub fn to_obj_string(&self) -> String {
        let mut s = String::from("# lasercover surface\n");
        let uv = self.has_explicit_uv();
        for p in self.vertices() {
            let _ = writeln!(s, "v {} {} {}", p.x, p.y, p.z);
        }
        if uv {
            for t in self.uv() {
                let _ = writeln!(s, "vt {} {}", t.x, t.y);
            }
        }
        for n in self.normals() {
            let _ = writeln!(s, "vn {} {} {}", n.x, n.y, n.z);
        }
        for tri in self.triangles() {
            let [a, b, c] = tri.map(|i| i + 1);
            if uv {
                let _ = writeln!(s, "f {a}/{a}/{a} {b}/{b}/{b} {c}/{c}/{c}");
            } else {
                let _ = writeln!(s, "f {a}//{a} {b}//{b} {c}//{c}");
            }
        }
        s
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> SurfaceError {
    SurfaceError::Parse { line, message: message.into() }
}

fn parse_f64(tok: &str, line: usize) -> Result<f64, SurfaceError> {
    tok.parse::<f64>().map_err(|_| parse_err(line, format!("expected a number, found {tok:?}")))
}

#[derive(Debug)]
enum PlyProperty {
    Scalar(String),
    List(String),
}

#[derive(Debug)]
struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<PlyProperty>,
}

pub fn parse_ply(text: &str) -> Result<SurfaceModel, SurfaceError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(parse_err(1, "missing 'ply' magic line")),
    }

    let mut elements: Vec<PlyElement> = Vec::new();
    let mut saw_format = false;
    loop {
        let Some((ln, line)) = lines.next() else {
            return Err(parse_err(0, "unexpected end of file inside header"));
        };
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", "ascii", _] => saw_format = true,
            ["format", other, ..] => return Err(SurfaceError::UnsupportedFormat(format!("PLY {other}"))),
            ["element", name, count] => elements.push(PlyElement {
                name: name.to_string(),
                count: count.parse().map_err(|_| parse_err(ln, format!("bad element count {count:?}")))?,
                properties: Vec::new(),
            }),
            ["property", "list", _, _, name] => elements
                .last_mut()
                .ok_or_else(|| parse_err(ln, "property before any element"))?
                .properties
                .push(PlyProperty::List(name.to_string())),
            ["property", _, name] => elements
                .last_mut()
                .ok_or_else(|| parse_err(ln, "property before any element"))?
                .properties
                .push(PlyProperty::Scalar(name.to_string())),
            ["end_header"] => break,
            _ => return Err(parse_err(ln, format!("unrecognized header line {line:?}"))),
        }
    }
    if !saw_format {
        return Err(parse_err(2, "missing format line"));
    }

    let mut positions = Vec::new();
    let mut normals = Vec::new();
    let mut uvs = Vec::new();
    let mut triangles = Vec::new();
    let mut has_normals = false;
    let mut has_uv = false;

    let mut data = lines.filter(|(_, l)| !l.trim().is_empty());
    for element in &elements {
        let col = |names: &[&str]| {
            element.properties.iter().position(|p| matches!(p, PlyProperty::Scalar(n) if names.contains(&n.as_str())))
        };
        let is_vertex = element.name == "vertex";
        let is_face = element.name == "face";
        let (xi, yi, zi) = (col(&["x"]), col(&["y"]), col(&["z"]));
        let nrm = (col(&["nx"]), col(&["ny"]), col(&["nz"]));
        let tex = (col(&["u", "s", "texture_u"]), col(&["v", "t", "texture_v"]));
        if is_vertex {
            if xi.is_none() || yi.is_none() || zi.is_none() {
                return Err(parse_err(0, "vertex element lacks x/y/z properties"));
            }
            has_normals = nrm.0.is_some() && nrm.1.is_some() && nrm.2.is_some();
            has_uv = tex.0.is_some() && tex.1.is_some();
        }

        for _ in 0..element.count {
            let Some((ln, line)) = data.next() else {
                return Err(parse_err(0, format!("unexpected end of {} data", element.name)));
            };
            let toks: Vec<&str> = line.split_whitespace().collect();
            let mut cursor = 0;
            let mut scalars: Vec<Option<f64>> = Vec::with_capacity(element.properties.len());
            let mut list: Option<Vec<i64>> = None;
            for prop in &element.properties {
                match prop {
                    PlyProperty::Scalar(_) => {
                        let tok = toks.get(cursor).ok_or_else(|| parse_err(ln, "too few values"))?;
                        scalars.push(Some(parse_f64(tok, ln)?));
                        cursor += 1;
                    }
                    PlyProperty::List(name) => {
                        let k: usize = toks
                            .get(cursor)
                            .and_then(|t| t.parse().ok())
                            .ok_or_else(|| parse_err(ln, "bad list length"))?;
                        cursor += 1;
                        let items =
                            toks.get(cursor..cursor + k).ok_or_else(|| parse_err(ln, "list shorter than declared"))?;
                        cursor += k;
                        scalars.push(None);
                        if name == "vertex_indices" || name == "vertex_index" {
                            list = Some(
                                items
                                    .iter()
                                    .map(|t| {
                                        t.parse::<i64>().map_err(|_| parse_err(ln, format!("bad vertex index {t:?}")))
                                    })
                                    .collect::<Result<_, _>>()?,
                            );
                        }
                    }
                }
            }
            let get = |i: Option<usize>| i.and_then(|i| scalars[i]).unwrap_or(0.0);
            if is_vertex {
                positions.push(Vec3::new(get(xi), get(yi), get(zi)));
                if has_normals {
                    normals.push(Vec3::new(get(nrm.0), get(nrm.1), get(nrm.2)));
                }
                if has_uv {
                    uvs.push(Vec2::new(get(tex.0), get(tex.1)));
                }
            } else if is_face {
                let idx = list.ok_or_else(|| parse_err(ln, "face without vertex_indices"))?;
                triangles.push(to_triangle(triangles.len(), &idx, positions.len())?);
            }
        }
    }

    SurfaceModel::new(positions, triangles, has_normals.then_some(normals), has_uv.then_some(uvs))
}

fn to_triangle(face: usize, idx: &[i64], vertex_count: usize) -> Result<[u32; 3], SurfaceError> {
    if idx.len() != 3 {
        return Err(SurfaceError::NonTriangularFace { face, arity: idx.len() });
    }
    let mut tri = [0u32; 3];
    for (slot, &i) in tri.iter_mut().zip(idx) {
        if i < 0 || i as usize >= vertex_count {
            return Err(SurfaceError::IndexOutOfRange { face, index: i, vertex_count });
        }
        *slot = i as u32;
    }
    Ok(tri)
}

pub fn parse_obj(text: &str) -> Result<SurfaceModel, SurfaceError> {
    let mut positions = Vec::new();
    let mut tex = Vec::new();
    let mut norms = Vec::new();
    let mut faces: Vec<(usize, Vec<FaceRef>)> = Vec::new();

    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        let mut toks = line.split_whitespace();
        let Some(tag) = toks.next() else { continue };
        let rest: Vec<&str> = toks.collect();
        let nums = |n: usize| -> Result<Vec<f64>, SurfaceError> {
            if rest.len() < n {
                return Err(parse_err(ln, format!("{tag} needs {n} values")));
            }
            rest[..n].iter().map(|t| parse_f64(t, ln)).collect()
        };
        match tag {
            "v" => {
                let p = nums(3)?;
                positions.push(Vec3::new(p[0], p[1], p[2]));
            }
            "vt" => {
                let t = nums(2)?;
                tex.push(Vec2::new(t[0], t[1]));
            }
            "vn" => {
                let n = nums(3)?;
                norms.push(Vec3::new(n[0], n[1], n[2]));
            }
            "f" => {
                let refs = rest.iter().map(|r| parse_face_ref(r, ln)).collect::<Result<Vec<_>, _>>()?;
                faces.push((ln, refs));
            }
            _ => {}
        }
    }

    let n = positions.len();
    let mut triangles = Vec::with_capacity(faces.len());
    let mut vertex_uv: Vec<Option<Vec2>> = vec![None; n];
    let mut vertex_n: Vec<Option<Vec3>> = vec![None; n];
    for (face, (_, refs)) in faces.iter().enumerate() {
        let resolved: Vec<i64> = refs.iter().map(|r| resolve(r.0, n)).collect();
        let tri = to_triangle(face, &resolved, n)?;
        for (k, r) in refs.iter().enumerate() {
            let vi = tri[k] as usize;
            if let Some(t) = r.1 {
                let ti = resolve(t, tex.len());
                let uv = usize::try_from(ti).ok().and_then(|ti| tex.get(ti)).ok_or(SurfaceError::IndexOutOfRange {
                    face,
                    index: t,
                    vertex_count: tex.len(),
                })?;
                vertex_uv[vi] = Some(*uv);
            }
            if let Some(m) = r.2 {
                let mi = resolve(m, norms.len());
                let nv = usize::try_from(mi)
                    .ok()
                    .and_then(|mi| norms.get(mi))
                    .ok_or(SurfaceError::IndexOutOfRange { face, index: m, vertex_count: norms.len() })?;
                vertex_n[vi] = Some(*nv);
            }
        }
        triangles.push(tri);
    }

    let uv: Option<Vec<Vec2>> = vertex_uv.into_iter().collect();
    let normals: Option<Vec<Vec3>> = vertex_n.into_iter().collect();
    SurfaceModel::new(positions, triangles, normals, uv)
}

/// OBJ indices are 1-based; negative values count back from the end.
fn resolve(i: i64, len: usize) -> i64 {
    if i < 0 {
        len as i64 + i
    } else {
        i - 1
    }
}

/// OBJ `v/vt/vn` indices as written (1-based or negative).
type FaceRef = (i64, Option<i64>, Option<i64>);

fn parse_face_ref(r: &str, ln: usize) -> Result<FaceRef, SurfaceError> {
    let mut parts = r.split('/');
    let int = |s: Option<&str>| -> Result<Option<i64>, SurfaceError> {
        match s {
            None | Some("") => Ok(None),
            Some(t) => t.parse().map(Some).map_err(|_| parse_err(ln, format!("bad face reference {r:?}"))),
        }
    };
    let v = int(parts.next())?.ok_or_else(|| parse_err(ln, format!("bad face reference {r:?}")))?;
    Ok((v, int(parts.next())?, int(parts.next())?))
}
