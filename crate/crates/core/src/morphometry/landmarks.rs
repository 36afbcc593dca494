use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::recipe::RecipeRef;
use crate::error::{Error, Result};
use crate::shape::{CorrespondedMesh, Point3, ShapeVector};

/// Landmark positions keyed by name.
pub type NamedPoints = BTreeMap<String, Point3>;

/// Named vertex indices on one topology. Positions on any mesh of that
/// topology are read off by index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LandmarkSet {
    pub topology_id: String,
    pub entries: BTreeMap<String, usize>,
}

impl LandmarkSet {
    pub fn new(topology_id: impl Into<String>, entries: BTreeMap<String, usize>) -> Self {
        LandmarkSet {
            topology_id: topology_id.into(),
            entries,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn index(&self, name: &str) -> Result<usize> {
        self.entries
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingLandmark(name.to_string()))
    }

    pub fn require(&self, names: &[impl AsRef<str>]) -> Result<()> {
        for n in names {
            self.index(n.as_ref())?;
        }
        Ok(())
    }

    /// Checks every index against a vertex count.
    pub fn validate(&self, n_vertices: usize) -> Result<()> {
        for (name, &i) in &self.entries {
            if i >= n_vertices {
                return Err(Error::invalid(
                    format!("landmark `{name}`"),
                    format!("vertex index {i} >= {n_vertices}"),
                ));
            }
        }
        Ok(())
    }

    /// Vertex indices in name order.
    pub fn indices(&self) -> Vec<usize> {
        self.entries.values().copied().collect()
    }

    /// Builds named positions from points listed in [`LandmarkSet::indices`] order.
    pub fn name_points(&self, points: &[Point3]) -> NamedPoints {
        self.entries.keys().cloned().zip(points.iter().copied()).collect()
    }

    pub fn locate(&self, mesh: &CorrespondedMesh) -> Result<NamedPoints> {
        Ok(self.name_points(&transfer_landmarks(self, mesh)?))
    }

    pub fn locate_in(&self, shape: &ShapeVector) -> Result<NamedPoints> {
        self.validate(shape.n_points())?;
        Ok(self
            .entries
            .iter()
            .map(|(k, &i)| (k.clone(), shape.point(i)))
            .collect())
    }
}

/// Reads the landmark positions off `target` through the shared vertex
/// order. Returned in name order.
pub fn transfer_landmarks(source: &LandmarkSet, target: &CorrespondedMesh) -> Result<Vec<Point3>> {
    if source.topology_id != target.topology_id() {
        return Err(Error::TopologyMismatch {
            expected: source.topology_id.clone(),
            got: target.topology_id().to_string(),
        });
    }
    source.validate(target.n_vertices())?;
    Ok(source
        .entries
        .values()
        .map(|&i| target.vertices()[i])
        .collect())
}

/// On-disk landmark file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LandmarkFile {
    pub topology_id: String,
    pub recipe: RecipeRef,
    pub landmarks: BTreeMap<String, usize>,
}

impl LandmarkFile {
    pub fn landmark_set(&self) -> LandmarkSet {
        LandmarkSet::new(self.topology_id.clone(), self.landmarks.clone())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
