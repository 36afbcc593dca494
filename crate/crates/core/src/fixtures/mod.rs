//! Parametric femur and scapula mesh families with analytically known
//! measurements and built-in landmark indices.

mod femur;
mod mesh;
mod scapula;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use femur::{femur_landmarks, make_femur, FemurParams, FEMUR_TOPOLOGY};
pub use scapula::{make_scapula, scapula_landmarks, ScapulaParams, SCAPULA_TOPOLOGY};

use crate::error::{Error, Result};
use crate::morphometry::{LandmarkFile, LandmarkSet, MeasurementRecipe, RecipeRef};
use crate::pca::metrics::sample_rng;
use crate::shape::{obj, CorrespondedMesh, ShapeDataset};

/// Redraws allowed per sample before the family is declared invalid.
const MAX_REDRAWS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FixtureKind {
    Femur,
    Scapula,
}

impl FixtureKind {
    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            FixtureKind::Femur => &FemurParams::NAMES,
            FixtureKind::Scapula => &ScapulaParams::NAMES,
        }
    }

    /// Measurement label that recovers each parameter, in parameter order.
    pub fn param_labels(self) -> &'static [&'static str] {
        match self {
            FixtureKind::Femur => &FemurParams::LABELS,
            FixtureKind::Scapula => &ScapulaParams::LABELS,
        }
    }

    pub fn recipe(self) -> MeasurementRecipe {
        match self {
            FixtureKind::Femur => MeasurementRecipe::femur(),
            FixtureKind::Scapula => MeasurementRecipe::scapula(),
        }
    }

    pub fn landmarks(self) -> LandmarkSet {
        match self {
            FixtureKind::Femur => femur_landmarks(),
            FixtureKind::Scapula => scapula_landmarks(),
        }
    }

    pub fn topology_id(self) -> &'static str {
        match self {
            FixtureKind::Femur => FEMUR_TOPOLOGY,
            FixtureKind::Scapula => SCAPULA_TOPOLOGY,
        }
    }

    pub fn default_params(self) -> FixtureParams {
        match self {
            FixtureKind::Femur => FixtureParams::Femur(FemurParams::default()),
            FixtureKind::Scapula => FixtureParams::Scapula(ScapulaParams::default()),
        }
    }

    /// Standard deviations of the default family, in parameter order.
    pub fn default_std(self) -> Vec<f64> {
        match self {
            FixtureKind::Femur => vec![2.9, 4.4, 3.9, 6.5, 6.3],
            FixtureKind::Scapula => vec![16.0, 3.6, 3.3, 4.0, 4.0, 2.1],
        }
    }

    /// Correlation of the default family: sizes strongly coupled, angles
    /// weakly, sizes and angles nearly independent.
    pub fn default_correlation(self) -> DMatrix<f64> {
        match self {
            FixtureKind::Femur => {
                // length, head, nsa, version, width
                let size = [true, true, false, false, true];
                correlation_from_groups(&size, 0.8, 0.2, 0.0)
            }
            FixtureKind::Scapula => {
                // length, gh, gw, inc, ver, csa
                let size = [true, true, true, false, false, false];
                let mut c = correlation_from_groups(&size, 0.8, 0.1, -0.1);
                c[(3, 5)] = 0.4;
                c[(5, 3)] = 0.4;
                c
            }
        }
    }
}

fn correlation_from_groups(size: &[bool], within_size: f64, within_angle: f64, across: f64) -> DMatrix<f64> {
    let m = size.len();
    DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            1.0
        } else if size[i] && size[j] {
            within_size
        } else if !size[i] && !size[j] {
            within_angle
        } else {
            across
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FixtureParams {
    Femur(FemurParams),
    Scapula(ScapulaParams),
}

impl FixtureParams {
    pub fn kind(&self) -> FixtureKind {
        match self {
            FixtureParams::Femur(_) => FixtureKind::Femur,
            FixtureParams::Scapula(_) => FixtureKind::Scapula,
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            FixtureParams::Femur(p) => p.to_vec(),
            FixtureParams::Scapula(p) => p.to_vec(),
        }
    }

    pub fn from_slice(kind: FixtureKind, v: &[f64]) -> Result<Self> {
        Ok(match kind {
            FixtureKind::Femur => FixtureParams::Femur(FemurParams::from_slice(v)?),
            FixtureKind::Scapula => FixtureParams::Scapula(ScapulaParams::from_slice(v)?),
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FixtureParams::Femur(p) => p.validate(),
            FixtureParams::Scapula(p) => p.validate(),
        }
    }

    /// Expected measurements keyed by recipe label, in recipe label order.
    pub fn expected(&self) -> Vec<(String, f64)> {
        let kind = self.kind();
        let values = self.to_vec();
        kind.recipe()
            .labels()
            .into_iter()
            .map(|label| {
                let i = kind
                    .param_labels()
                    .iter()
                    .position(|l| *l == label)
                    .expect("every label has a parameter");
                (label, values[i])
            })
            .collect()
    }
}

pub fn make_fixture(params: &FixtureParams) -> Result<(CorrespondedMesh, LandmarkSet)> {
    match params {
        FixtureParams::Femur(p) => make_femur(p),
        FixtureParams::Scapula(p) => make_scapula(p),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureFamilySpec {
    pub kind: FixtureKind,
    /// Parameter means in [`FixtureKind::param_names`] order.
    pub mean: Vec<f64>,
    /// Row-major parameter covariance.
    pub covariance: Vec<Vec<f64>>,
    pub n: usize,
    pub seed: u64,
}

impl FixtureFamilySpec {
    pub fn default_for(kind: FixtureKind, n: usize, seed: u64) -> Self {
        let sd = kind.default_std();
        let corr = kind.default_correlation();
        let m = sd.len();
        FixtureFamilySpec {
            kind,
            mean: kind.default_params().to_vec(),
            covariance: (0..m)
                .map(|i| (0..m).map(|j| corr[(i, j)] * sd[i] * sd[j]).collect())
                .collect(),
            n,
            seed,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    /// Symmetric square root of the covariance; semi-definite matrices are
    /// accepted so a zero covariance yields identical shapes.
    fn covariance_root(&self) -> Result<DMatrix<f64>> {
        let m = self.kind.param_names().len();
        if self.mean.len() != m {
            return Err(Error::dimension("family mean", m, self.mean.len()));
        }
        if self.covariance.len() != m || self.covariance.iter().any(|r| r.len() != m) {
            return Err(Error::invalid("family covariance", format!("must be {m} x {m}")));
        }
        let c = DMatrix::from_fn(m, m, |i, j| self.covariance[i][j]);
        let scale = c.amax().max(f64::MIN_POSITIVE);
        if (&c - c.transpose()).amax() > 1e-12 * scale {
            return Err(Error::invalid("family covariance", "not symmetric"));
        }
        let eig = SymmetricEigen::new(c);
        if eig.eigenvalues.min() < -1e-10 * scale {
            return Err(Error::invalid("family covariance", "not positive semi-definite"));
        }
        let sqrt = DVector::from_iterator(m, eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()));
        Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt) * eig.eigenvectors.transpose())
    }
}

pub struct FixtureFamily {
    pub kind: FixtureKind,
    pub dataset: ShapeDataset,
    pub params: Vec<FixtureParams>,
    pub landmarks: LandmarkSet,
    /// Total rejected draws across the family.
    pub rejected: usize,
}

impl FixtureFamily {
    /// Ground-truth measurements per shape, columns in recipe label order.
    pub fn ground_truth(&self) -> (Vec<String>, DMatrix<f64>) {
        let labels = self.kind.recipe().labels();
        let mut t = DMatrix::zeros(self.params.len(), labels.len());
        for (i, p) in self.params.iter().enumerate() {
            for (j, (_, v)) in p.expected().into_iter().enumerate() {
                t[(i, j)] = v;
            }
        }
        (labels, t)
    }

    pub fn ground_truth_csv(&self) -> String {
        let (labels, t) = self.ground_truth();
        let mut out = String::from("shape_id");
        for l in &labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (i, name) in self.dataset.names().iter().enumerate() {
            out.push_str(name);
            for j in 0..labels.len() {
                let _ = write!(out, ",{:.16e}", t[(i, j)]);
            }
            out.push('\n');
        }
        out
    }

    pub fn landmark_file(&self) -> LandmarkFile {
        LandmarkFile {
            topology_id: self.landmarks.topology_id.clone(),
            recipe: RecipeRef::Named(self.kind.recipe().id),
            landmarks: self.landmarks.entries.clone(),
        }
    }

    /// Writes the OBJ dataset, `landmarks.json` and `ground_truth.csv`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        obj::save_dataset(dir, &self.dataset)?;
        self.landmark_file().save(dir.join("landmarks.json"))?;
        let gt = dir.join("ground_truth.csv");
        fs::write(&gt, self.ground_truth_csv()).map_err(|e| Error::io(&gt, e))
    }
}

/// Draws `spec.n` parameter vectors from the multivariate normal and builds
/// the meshes. Invalid draws are redrawn from the same per-sample stream.
pub fn sample_family(spec: &FixtureFamilySpec) -> Result<FixtureFamily> {
    if spec.n < 2 {
        return Err(Error::InsufficientData {
            what: "fixture family".into(),
            needed: 2,
            got: spec.n,
        });
    }
    let root = spec.covariance_root()?;
    let mean = DVector::from_column_slice(&spec.mean);
    FixtureParams::from_slice(spec.kind, &spec.mean)?.validate()?;
    let m = mean.len();

    let draws: Vec<(FixtureParams, usize)> = (0..spec.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(spec.seed, i as u64);
            for attempt in 0..MAX_REDRAWS {
                let z = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
                let x = &mean + &root * z;
                let p = FixtureParams::from_slice(spec.kind, x.as_slice())?;
                if p.validate().is_ok() {
                    return Ok((p, attempt));
                }
            }
            Err(Error::invalid(
                "fixture family",
                format!("sample {i}: no valid draw in {MAX_REDRAWS} attempts"),
            ))
        })
        .collect::<Result<_>>()?;

    let rejected: usize = draws.iter().map(|(_, r)| r).sum();
    if rejected > 0 {
        log::info!("fixture family: {rejected} invalid draws rejected and redrawn");
    }
    let prefix = match spec.kind {
        FixtureKind::Femur => "femur",
        FixtureKind::Scapula => "scapula",
    };
    let mut meshes = Vec::with_capacity(spec.n);
    let mut params = Vec::with_capacity(spec.n);
    for (p, _) in draws {
        meshes.push(make_fixture(&p)?.0);
        params.push(p);
    }
    let names = (0..spec.n).map(|i| format!("{prefix}_{i:03}")).collect();
    Ok(FixtureFamily {
        kind: spec.kind,
        dataset: ShapeDataset::from_named_meshes(&meshes, names)?,
        params,
        landmarks: spec.kind.landmarks(),
        rejected,
    })
}

#[cfg(test)]
mod tests;
