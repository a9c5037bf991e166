//! OBJ (v/f records) and ASCII PLY readers and writers.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::mesh::{TriMesh, Vec3};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Ply,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("obj") => Ok(MeshFormat::Obj),
            Some("ply") => Ok(MeshFormat::Ply),
            _ => Err(Error::Format(format!(
                "cannot infer mesh format from {}",
                path.display()
            ))),
        }
    }
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match MeshFormat::from_path(path)? {
        MeshFormat::Obj => parse_obj(&text),
        MeshFormat::Ply => parse_ply(&text).map(|(m, _)| m),
    }
}

pub fn save_mesh(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = match MeshFormat::from_path(path)? {
        MeshFormat::Obj => write_obj(mesh),
        MeshFormat::Ply => write_ply(mesh, None),
    };
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes an ASCII PLY with per-vertex colors.
pub fn save_ply_colored(mesh: &TriMesh, colors: &[[u8; 3]], path: impl AsRef<Path>) -> Result<()> {
    if colors.len() != mesh.vertices.len() {
        return Err(Error::validation("one color per vertex required"));
    }
    let path = path.as_ref();
    fs::write(path, write_ply(mesh, Some(colors))).map_err(|e| Error::io(path, e))
}

/// Reads an ASCII PLY, returning vertex colors when present.
pub fn load_ply_colored(path: impl AsRef<Path>) -> Result<(TriMesh, Option<Vec<[u8; 3]>>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&text)
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

pub fn parse_obj(text: &str) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut last_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        last_line = lineno;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let coords: Vec<f64> = tok
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| parse_err(lineno, format!("bad vertex coordinate: {e}")))?;
                if coords.len() != 3 {
                    return Err(parse_err(lineno, "vertex needs three coordinates"));
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for t in tok {
                    let head = t.split('/').next().unwrap_or("");
                    let v: i64 = head
                        .parse()
                        .map_err(|e| parse_err(lineno, format!("bad face index `{t}`: {e}")))?;
                    let resolved = if v > 0 {
                        v - 1
                    } else if v < 0 {
                        vertices.len() as i64 + v
                    } else {
                        return Err(parse_err(lineno, "face index 0 is invalid in OBJ"));
                    };
                    if resolved < 0 {
                        return Err(parse_err(lineno, format!("relative index {v} out of range")));
                    }
                    idx.push(resolved as usize);
                }
                if idx.len() < 3 {
                    return Err(parse_err(lineno, "face needs at least three vertices"));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            // Normals, texture coordinates, groups and materials are ignored.
            Some(_) => {}
            None => {}
        }
    }
    if vertices.is_empty() && faces.is_empty() {
        return Err(parse_err(last_line.max(1), "no vertices or faces found"));
    }
    TriMesh::new(vertices, faces)
}

pub fn write_obj(mesh: &TriMesh) -> String {
    let mut s = String::with_capacity(mesh.vertices.len() * 64);
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {:?} {:?} {:?}", v.x, v.y, v.z);
    }
    for f in &mesh.faces {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

fn write_ply(mesh: &TriMesh, colors: Option<&[[u8; 3]]>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "ply\nformat ascii 1.0\nelement vertex {}", mesh.vertices.len());
    s.push_str("property double x\nproperty double y\nproperty double z\n");
    if colors.is_some() {
        s.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    let _ = writeln!(s, "element face {}", mesh.faces.len());
    s.push_str("property list uchar int vertex_indices\nend_header\n");
    for (i, v) in mesh.vertices.iter().enumerate() {
        let _ = write!(s, "{:?} {:?} {:?}", v.x, v.y, v.z);
        if let Some(c) = colors {
            let _ = write!(s, " {} {} {}", c[i][0], c[i][1], c[i][2]);
        }
        s.push('\n');
    }
    for f in &mesh.faces {
        let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
    }
    s
}

fn parse_ply(text: &str) -> Result<(TriMesh, Option<Vec<[u8; 3]>>)> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        Some((n, _)) => return Err(parse_err(n, "missing `ply` magic")),
        None => return Err(parse_err(1, "empty file")),
    }
    let mut n_vertices = None;
    let mut n_faces = 0usize;
    let mut vertex_props: Vec<String> = Vec::new();
    let mut current = "";
    loop {
        let (n, line) = lines.next().ok_or_else(|| parse_err(0, "unterminated header"))?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", fmt, ..] if *fmt != "ascii" => {
                return Err(parse_err(n, format!("only ascii PLY is supported, got {fmt}")))
            }
            ["element", "vertex", count] => {
                n_vertices = Some(count.parse().map_err(|_| parse_err(n, "bad vertex count"))?);
                current = "vertex";
            }
            ["element", "face", count] => {
                n_faces = count.parse().map_err(|_| parse_err(n, "bad face count"))?;
                current = "face";
            }
            ["element", ..] => current = "other",
            ["property", "list", ..] => {}
            ["property", _, name] if current == "vertex" => vertex_props.push(name.to_string()),
            ["end_header"] => break,
            _ => {}
        }
    }
    let n_vertices = n_vertices.ok_or_else(|| parse_err(0, "no vertex element"))?;
    let pos = |name: &str| vertex_props.iter().position(|p| p == name);
    let (xi, yi, zi) = match (pos("x"), pos("y"), pos("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(parse_err(0, "vertex element lacks x/y/z")),
    };
    let rgb = match (pos("red"), pos("green"), pos("blue")) {
        (Some(r), Some(g), Some(b)) => Some((r, g, b)),
        _ => None,
    };
    let mut vertices = Vec::with_capacity(n_vertices);
    let mut colors = rgb.map(|_| Vec::with_capacity(n_vertices));
    for _ in 0..n_vertices {
        let (n, line) = lines.next().ok_or_else(|| parse_err(0, "truncated vertex list"))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(n, format!("bad vertex record: {e}")))?;
        if vals.len() < vertex_props.len() {
            return Err(parse_err(n, "vertex record too short"));
        }
        vertices.push(Vec3::new(vals[xi], vals[yi], vals[zi]));
        if let (Some(c), Some((r, g, b))) = (colors.as_mut(), rgb) {
            c.push([vals[r] as u8, vals[g] as u8, vals[b] as u8]);
        }
    }
    let mut faces = Vec::with_capacity(n_faces);
    for _ in 0..n_faces {
        let (n, line) = lines.next().ok_or_else(|| parse_err(0, "truncated face list"))?;
        let vals: Vec<usize> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(n, format!("bad face record: {e}")))?;
        let Some((&count, idx)) = vals.split_first() else {
            return Err(parse_err(n, "empty face record"));
        };
        if count < 3 || idx.len() < count {
            return Err(parse_err(n, "face record too short"));
        }
        for k in 1..count - 1 {
            faces.push([idx[0], idx[k], idx[k + 1]]);
        }
    }
    Ok((TriMesh::new(vertices, faces)?, colors))
}
