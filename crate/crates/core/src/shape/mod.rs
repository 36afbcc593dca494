//! Corresponded meshes, flattened shape vectors and training datasets.
//!
//! Vertex order is the correspondence: vertex `k` denotes the same
//! anatomical location in every mesh sharing a [`Topology`].

mod align;
pub mod obj;

use std::sync::Arc;

use nalgebra::{DVector, Vector3};

use crate::error::{Error, Result};

pub use align::{procrustes_objective, rigid_align, AlignOptions, Alignment};

/// A point in millimetres.
pub type Point3 = Vector3<f64>;

/// Face list and vertex count shared by every mesh of a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    pub id: String,
    pub n_vertices: usize,
    pub faces: Vec<[usize; 3]>,
}

impl Topology {
    pub fn new(id: impl Into<String>, n_vertices: usize, faces: Vec<[usize; 3]>) -> Result<Self> {
        let id = id.into();
        if let Some(bad) = faces.iter().flatten().find(|&&i| i >= n_vertices) {
            return Err(Error::invalid(
                format!("topology `{id}`"),
                format!("face index {bad} out of range for {n_vertices} vertices"),
            ));
        }
        Ok(Topology {
            id,
            n_vertices,
            faces,
        })
    }
}

/// Fixed-topology mesh whose vertex order encodes correspondence.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondedMesh {
    vertices: Vec<Point3>,
    topology: Arc<Topology>,
}

impl CorrespondedMesh {
    pub fn new(vertices: Vec<Point3>, topology: Arc<Topology>) -> Result<Self> {
        if vertices.len() != topology.n_vertices {
            return Err(Error::dimension(
                format!("mesh of topology `{}`", topology.id),
                topology.n_vertices,
                vertices.len(),
            ));
        }
        if vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid("mesh", "non-finite vertex coordinate"));
        }
        Ok(CorrespondedMesh { vertices, topology })
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.topology.faces
    }

    pub fn topology_id(&self) -> &str {
        &self.topology.id
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topology
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }
}

/// Concatenated `(x1, y1, z1, ..., xN, yN, zN)` coordinates of a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeVector {
    coords: DVector<f64>,
}

impl ShapeVector {
    pub fn new(coords: DVector<f64>) -> Result<Self> {
        if coords.len() % 3 != 0 {
            return Err(Error::invalid(
                "shape vector",
                format!("length {} is not divisible by 3", coords.len()),
            ));
        }
        if !coords.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("shape vector", "non-finite coordinate"));
        }
        Ok(ShapeVector { coords })
    }

    pub fn from_points(points: &[Point3]) -> Self {
        let coords = DVector::from_iterator(
            points.len() * 3,
            points.iter().flat_map(|p| [p.x, p.y, p.z]),
        );
        ShapeVector { coords }
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn into_coords(self) -> DVector<f64> {
        self.coords
    }

    pub fn n_points(&self) -> usize {
        self.coords.len() / 3
    }

    pub fn point(&self, k: usize) -> Point3 {
        Point3::new(
            self.coords[3 * k],
            self.coords[3 * k + 1],
            self.coords[3 * k + 2],
        )
    }

    pub fn points(&self) -> Vec<Point3> {
        (0..self.n_points()).map(|k| self.point(k)).collect()
    }
}

pub fn vectorize(mesh: &CorrespondedMesh) -> ShapeVector {
    ShapeVector::from_points(mesh.vertices())
}

pub fn devectorize(v: &ShapeVector, topology: &Arc<Topology>) -> Result<CorrespondedMesh> {
    if v.coords.len() != 3 * topology.n_vertices {
        return Err(Error::dimension(
            format!("shape vector for topology `{}`", topology.id),
            3 * topology.n_vertices,
            v.coords.len(),
        ));
    }
    CorrespondedMesh::new(v.points(), Arc::clone(topology))
}

/// `n >= 2` corresponded shapes sharing one topology.
#[derive(Debug, Clone)]
pub struct ShapeDataset {
    topology: Arc<Topology>,
    shapes: Vec<ShapeVector>,
    names: Vec<String>,
}

impl ShapeDataset {
    pub fn from_meshes(meshes: &[CorrespondedMesh]) -> Result<Self> {
        let names = (0..meshes.len()).map(|i| format!("shape_{i:03}")).collect();
        Self::from_named_meshes(meshes, names)
    }

    pub fn from_named_meshes(meshes: &[CorrespondedMesh], names: Vec<String>) -> Result<Self> {
        let first = meshes.first().ok_or(Error::InsufficientData {
            what: "shape dataset".into(),
            needed: 2,
            got: 0,
        })?;
        let topology = Arc::clone(first.topology());
        for m in meshes {
            if m.topology_id() != topology.id || m.n_vertices() != topology.n_vertices {
                return Err(Error::TopologyMismatch {
                    expected: topology.id.clone(),
                    got: m.topology_id().to_string(),
                });
            }
        }
        let shapes = meshes.iter().map(vectorize).collect();
        Self::new(topology, shapes, names)
    }

    pub fn new(topology: Arc<Topology>, shapes: Vec<ShapeVector>, names: Vec<String>) -> Result<Self> {
        if shapes.len() < 2 {
            return Err(Error::InsufficientData {
                what: "shape dataset".into(),
                needed: 2,
                got: shapes.len(),
            });
        }
        if names.len() != shapes.len() {
            return Err(Error::dimension("dataset names", shapes.len(), names.len()));
        }
        for s in &shapes {
            if s.n_points() != topology.n_vertices || s.coords.len() % 3 != 0 {
                return Err(Error::dimension(
                    format!("shape of topology `{}`", topology.id),
                    3 * topology.n_vertices,
                    s.coords.len(),
                ));
            }
        }
        Ok(ShapeDataset {
            topology,
            shapes,
            names,
        })
    }

    pub fn len(&self) -> usize {
        self.shapes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shapes.is_empty()
    }

    pub fn shapes(&self) -> &[ShapeVector] {
        &self.shapes
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topology
    }

    pub fn mesh(&self, i: usize) -> CorrespondedMesh {
        CorrespondedMesh {
            vertices: self.shapes[i].points(),
            topology: Arc::clone(&self.topology),
        }
    }

    /// Dataset without shape `i`; used by the leave-one-out protocols.
    /// May hold a single shape, which the public constructors reject.
    pub(crate) fn without(&self, i: usize) -> ShapeDataset {
        let mut shapes = self.shapes.clone();
        let mut names = self.names.clone();
        shapes.remove(i);
        names.remove(i);
        ShapeDataset {
            topology: Arc::clone(&self.topology),
            shapes,
            names,
        }
    }

    pub(crate) fn with_shapes(&self, shapes: Vec<ShapeVector>) -> ShapeDataset {
        ShapeDataset {
            topology: Arc::clone(&self.topology),
            shapes,
            names: self.names.clone(),
        }
    }
}
