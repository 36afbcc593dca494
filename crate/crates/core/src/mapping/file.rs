//! On-disk form of a learned mapping (`learn` output, `build-anat` input).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::evaluation::MappingCorrDiff;
use super::linear::{check_row_rank, MappingK, MappingQ};
use super::model::{from_row_major, opt_vec_17, row_major};
use super::population::LabelStats;
use crate::error::{Error, Result};
use crate::morphometry::{LandmarkSet, MeasurementRecipe};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MappingKind {
    Q,
    K,
}

/// A `Q` or `K` matrix with the population statistics needed to turn it
/// into an [`super::AnatModel`]. Matrices are row-major, `m x rank`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingFile {
    pub kind: MappingKind,
    pub labels: Vec<String>,
    pub rank: usize,
    #[serde(serialize_with = "crate::jsonfmt::vec_f64_17")]
    pub matrix: Vec<f64>,
    /// For `K`, the regression matrix it was derived from.
    #[serde(default, skip_serializing_if = "Option::is_none", serialize_with = "opt_vec_17")]
    pub source_q: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty", serialize_with = "crate::jsonfmt::vec_f64_17")]
    pub r_squared: Vec<f64>,
    pub stats: BTreeMap<String, LabelStats>,
    /// Mean absolute differences against the population correlations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corr_diff: Option<MappingCorrDiff>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipe: Option<MeasurementRecipe>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub landmarks: Option<LandmarkSet>,
}

impl MappingFile {
    pub fn from_q(q: &MappingQ, stats: BTreeMap<String, LabelStats>) -> Self {
        MappingFile {
            kind: MappingKind::Q,
            labels: q.labels.clone(),
            rank: q.matrix.ncols(),
            matrix: row_major(&q.matrix),
            source_q: None,
            r_squared: q.r_squared.clone(),
            stats,
            corr_diff: None,
            recipe: None,
            landmarks: None,
        }
    }

    pub fn from_k(k: &MappingK, stats: BTreeMap<String, LabelStats>) -> Self {
        MappingFile {
            kind: MappingKind::K,
            labels: k.labels.clone(),
            rank: k.matrix.ncols(),
            matrix: row_major(&k.matrix),
            source_q: Some(row_major(&k.source_q)),
            r_squared: Vec::new(),
            stats,
            corr_diff: None,
            recipe: None,
            landmarks: None,
        }
    }

    pub fn to_q(&self) -> Result<MappingQ> {
        if self.kind != MappingKind::Q {
            return Err(Error::invalid("mapping file", "holds K, not Q"));
        }
        let matrix = from_row_major("Q", self.labels.len(), self.rank, &self.matrix)?;
        let rank_ok = check_row_rank(&matrix, "Q").is_ok();
        Ok(MappingQ {
            matrix,
            labels: self.labels.clone(),
            rank_ok,
            r_squared: self.r_squared.clone(),
        })
    }

    pub fn to_k(&self) -> Result<MappingK> {
        if self.kind != MappingKind::K {
            return Err(Error::invalid("mapping file", "holds Q, not K"));
        }
        let (m, r) = (self.labels.len(), self.rank);
        let source = self
            .source_q
            .as_ref()
            .ok_or_else(|| Error::invalid("K mapping file", "missing source_q"))?;
        Ok(MappingK {
            matrix: from_row_major("K", m, r, &self.matrix)?,
            labels: self.labels.clone(),
            source_q: from_row_major("source_q", m, r, source)?,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}
