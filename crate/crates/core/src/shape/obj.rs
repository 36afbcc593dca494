//! ASCII Wavefront OBJ meshes and OBJ dataset directories.
//!
//! Only `v x y z` and `f i j k` records are interpreted; faces use 1-based
//! indices and may carry `/vt/vn` suffixes, which are ignored. Polygons
//! with more than three corners are fan-triangulated.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{CorrespondedMesh, Point3, ShapeDataset, Topology};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq)]
pub struct ObjData {
    pub vertices: Vec<Point3>,
    pub faces: Vec<[usize; 3]>,
}

pub fn parse_obj(text: &str, origin: &str) -> Result<ObjData> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let err = |line: usize, reason: String| Error::Parse {
        path: origin.to_string(),
        line,
        reason,
    };
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let coords: Vec<f64> = tokens
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| err(lineno + 1, format!("bad vertex: {e}")))?;
                if coords.len() != 3 {
                    return Err(err(lineno + 1, "vertex needs 3 coordinates".into()));
                }
                vertices.push(Point3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = tokens
                    .map(|t| {
                        let first = t.split('/').next().unwrap_or("");
                        first
                            .parse::<usize>()
                            .ok()
                            .filter(|&i| i >= 1)
                            .map(|i| i - 1)
                            .ok_or_else(|| err(lineno + 1, format!("bad face index `{t}`")))
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(err(lineno + 1, "face needs at least 3 indices".into()));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    if let Some(bad) = faces.iter().flatten().find(|&&i| i >= vertices.len()) {
        return Err(err(0, format!("face index {} out of range", bad + 1)));
    }
    Ok(ObjData { vertices, faces })
}

pub fn format_obj(vertices: &[Point3], faces: &[[usize; 3]]) -> String {
    let mut out = String::with_capacity(vertices.len() * 40 + faces.len() * 16);
    for v in vertices {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for f in faces {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

pub fn read_obj(path: impl AsRef<Path>) -> Result<ObjData> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text, &path.display().to_string())
}

pub fn write_mesh(path: impl AsRef<Path>, mesh: &CorrespondedMesh) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_obj(mesh.vertices(), mesh.faces())).map_err(|e| Error::io(path, e))
}

/// Loads a single OBJ as a mesh with its own topology.
pub fn read_mesh(path: impl AsRef<Path>, topology_id: &str) -> Result<CorrespondedMesh> {
    let data = read_obj(path)?;
    let topo = Arc::new(Topology::new(topology_id, data.vertices.len(), data.faces)?);
    CorrespondedMesh::new(data.vertices, topo)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub topology_id: String,
    /// OBJ file names relative to the dataset directory, in dataset order.
    pub files: Vec<String>,
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    let path = dir.as_ref().join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(&path, e))
}

/// Reads a dataset directory: `manifest.json` plus the OBJ files it lists.
/// Every file must repeat the first file's vertex count and face list.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<ShapeDataset> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    let mut meshes = Vec::with_capacity(manifest.files.len());
    let mut topology: Option<Arc<Topology>> = None;
    for file in &manifest.files {
        let data = read_obj(dir.join(file))?;
        let topo = match &topology {
            None => {
                let t = Arc::new(Topology::new(
                    manifest.topology_id.clone(),
                    data.vertices.len(),
                    data.faces.clone(),
                )?);
                topology = Some(Arc::clone(&t));
                t
            }
            Some(t) => {
                if data.vertices.len() != t.n_vertices || data.faces != t.faces {
                    return Err(Error::TopologyMismatch {
                        expected: t.id.clone(),
                        got: format!("{file} ({} vertices)", data.vertices.len()),
                    });
                }
                Arc::clone(t)
            }
        };
        meshes.push(CorrespondedMesh::new(data.vertices, topo)?);
    }
    let names = manifest
        .files
        .iter()
        .map(|f| f.trim_end_matches(".obj").to_string())
        .collect();
    ShapeDataset::from_named_meshes(&meshes, names)
}

pub fn save_dataset(dir: impl AsRef<Path>, dataset: &ShapeDataset) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::with_capacity(dataset.len());
    for (i, name) in dataset.names().iter().enumerate() {
        let file = format!("{name}.obj");
        write_mesh(dir.join(&file), &dataset.mesh(i))?;
        files.push(file);
    }
    let manifest = Manifest {
        topology_id: dataset.topology().id.clone(),
        files,
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&path, e))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_vertices_and_faces() {
        let text = "# comment\nv 1 2 3\nv 4 5 6\nv 7 8 9.5\nvn 0 0 1\nf 1/1/1 2/2/2 3/3/3\n";
        let d = parse_obj(text, "mem").unwrap();
        assert_eq!(d.vertices.len(), 3);
        assert_eq!(d.vertices[2], Point3::new(7.0, 8.0, 9.5));
        assert_eq!(d.faces, vec![[0, 1, 2]]);
    }

    #[test]
    fn quads_are_fan_triangulated() {
        let text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
        let d = parse_obj(text, "mem").unwrap();
        assert_eq!(d.faces, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn rejects_bad_records() {
        assert!(parse_obj("v 1 2\n", "mem").is_err());
        assert!(parse_obj("v 1 2 3\nf 1 2 5\n", "mem").is_err());
        assert!(parse_obj("v 1 2 3\nf 0 1 1\n", "mem").is_err());
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let verts = vec![
            Point3::new(0.1, -1.0 / 3.0, 1e-300),
            Point3::new(std::f64::consts::PI, 2.5e17, -0.0),
            Point3::new(1.0, 2.0, 3.0),
        ];
        let faces = vec![[0, 1, 2]];
        let d = parse_obj(&format_obj(&verts, &faces), "mem").unwrap();
        for (a, b) in verts.iter().zip(&d.vertices) {
            for k in 0..3 {
                assert_eq!(a[k].to_bits(), b[k].to_bits());
            }
        }
        assert_eq!(d.faces, faces);
    }
}
