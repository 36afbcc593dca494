//! Shape models driven by anatomical parameters.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::linear::{check_row_rank, pseudo_inverse, MappingK, MappingQ};
use super::population::LabelStats;
use crate::error::{Error, Result};
use crate::morphometry::{LandmarkSet, MeasurementRecipe};
use crate::pca::{BaseSsm, ModelFile, ShapeCoefficients};
use crate::shape::ShapeVector;

pub const ANAT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "ANAT")]
    Anat,
    #[serde(rename = "OC-ANAT")]
    OcAnat,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Anat => "ANAT",
            ModelKind::OcAnat => "OC-ANAT",
        }
    }
}

/// `mu + P D W beta_std` with `W = Q^+` (ANAT) or `W = K^T` (OC-ANAT).
#[derive(Debug, Clone, PartialEq)]
pub struct AnatModel {
    base: BaseSsm,
    kind: ModelKind,
    labels: Vec<String>,
    stats: Vec<LabelStats>,
    /// `Q` or `K`, `m x r`.
    mapping: DMatrix<f64>,
    /// `W`, `r x m`.
    deformation: DMatrix<f64>,
    /// For OC-ANAT, the regression matrix `K` was derived from.
    source_q: Option<DMatrix<f64>>,
    recipe: Option<MeasurementRecipe>,
    landmarks: Option<LandmarkSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariabilityEntry {
    pub label: String,
    /// `sum_i W_ij^2 lambda_i`, mm^2.
    #[serde(serialize_with = "crate::jsonfmt::f64_17")]
    pub kappa: f64,
    /// `kappa` over the total base-model variance.
    #[serde(serialize_with = "crate::jsonfmt::f64_17")]
    pub fraction: f64,
}

/// Entries sorted by decreasing `kappa`, ties by label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariabilityReport {
    pub entries: Vec<VariabilityEntry>,
}

impl VariabilityReport {
    pub fn get(&self, label: &str) -> Option<&VariabilityEntry> {
        self.entries.iter().find(|e| e.label == label)
    }

    pub fn total_kappa(&self) -> f64 {
        self.entries.iter().map(|e| e.kappa).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,kappa_mm2,fraction\n");
        for e in &self.entries {
            out.push_str(&format!("{},{:.16e},{:.16e}\n", e.label, e.kappa, e.fraction));
        }
        out
    }
}

/// One row of the sequential sub-model table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationStep {
    /// Label removed before this step; `None` for the full model.
    pub removed: Option<String>,
    pub variability: VariabilityReport,
}

fn check_stats(labels: &[String], stats: &BTreeMap<String, LabelStats>) -> Result<Vec<LabelStats>> {
    labels
        .iter()
        .map(|l| {
            let s = stats
                .get(l)
                .copied()
                .ok_or_else(|| Error::invalid("model stats", format!("missing stats for `{l}`")))?;
            if !(s.std > 0.0 && s.std.is_finite() && s.mean.is_finite()) {
                return Err(Error::invalid("model stats", format!("`{l}` needs a positive finite std")));
            }
            Ok(s)
        })
        .collect()
}

fn check_columns(base: &BaseSsm, mapping: &DMatrix<f64>, what: &str) -> Result<()> {
    if mapping.ncols() != base.rank() {
        return Err(Error::dimension(what.to_string(), base.rank(), mapping.ncols()));
    }
    Ok(())
}

pub fn build_anat(base: BaseSsm, q: &MappingQ, stats: &BTreeMap<String, LabelStats>) -> Result<AnatModel> {
    check_columns(&base, &q.matrix, "Q columns")?;
    let stats = check_stats(&q.labels, stats)?;
    let deformation = pseudo_inverse(&q.matrix)?;
    Ok(AnatModel {
        base,
        kind: ModelKind::Anat,
        labels: q.labels.clone(),
        stats,
        mapping: q.matrix.clone(),
        deformation,
        source_q: None,
        recipe: None,
        landmarks: None,
    })
}

pub fn build_oc_anat(base: BaseSsm, k: &MappingK, stats: &BTreeMap<String, LabelStats>) -> Result<AnatModel> {
    check_columns(&base, &k.matrix, "K columns")?;
    let stats = check_stats(&k.labels, stats)?;
    let m = k.matrix.nrows();
    let err = (&k.matrix * k.matrix.transpose() - DMatrix::identity(m, m)).amax();
    if err >= 1e-8 {
        return Err(Error::invalid("K", format!("rows not orthonormal (|KK^T - I| = {err:e})")));
    }
    Ok(AnatModel {
        base,
        kind: ModelKind::OcAnat,
        labels: k.labels.clone(),
        stats,
        mapping: k.matrix.clone(),
        deformation: k.matrix.transpose(),
        source_q: Some(k.source_q.clone()),
        recipe: None,
        landmarks: None,
    })
}

impl AnatModel {
    /// Attaches the recipe and landmarks used to re-measure generated shapes.
    pub fn with_measurement(mut self, recipe: MeasurementRecipe, landmarks: LandmarkSet) -> Result<Self> {
        recipe.validate()?;
        landmarks.validate(self.base.n_points())?;
        landmarks.require(&recipe.landmarks)?;
        let produced = recipe.labels();
        for l in &self.labels {
            if !produced.contains(l) {
                return Err(Error::UnknownLabel(l.clone()));
            }
        }
        self.recipe = Some(recipe);
        self.landmarks = Some(landmarks);
        Ok(self)
    }

    pub fn base(&self) -> &BaseSsm {
        &self.base
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn stats(&self) -> &[LabelStats] {
        &self.stats
    }

    pub fn stats_map(&self) -> BTreeMap<String, LabelStats> {
        self.labels.iter().cloned().zip(self.stats.iter().copied()).collect()
    }

    /// `Q` for ANAT, `K` for OC-ANAT.
    pub fn mapping(&self) -> &DMatrix<f64> {
        &self.mapping
    }

    pub fn deformation_matrix(&self) -> &DMatrix<f64> {
        &self.deformation
    }

    pub fn source_q(&self) -> Option<&DMatrix<f64>> {
        self.source_q.as_ref()
    }

    pub fn recipe(&self) -> Option<&MeasurementRecipe> {
        self.recipe.as_ref()
    }

    pub fn landmarks(&self) -> Option<&LandmarkSet> {
        self.landmarks.as_ref()
    }

    pub fn label_index(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    /// Shape coefficients `W beta_std`.
    pub fn coefficients(&self, beta_std: &DVector<f64>) -> Result<ShapeCoefficients> {
        if beta_std.len() != self.labels.len() {
            return Err(Error::dimension("standardized parameters", self.labels.len(), beta_std.len()));
        }
        Ok(ShapeCoefficients(&self.deformation * beta_std))
    }

    pub fn generate_std(&self, beta_std: &DVector<f64>) -> Result<ShapeVector> {
        self.base.sample(&self.coefficients(beta_std)?)
    }

    /// Standardizes physical values; labels not given sit at the
    /// population mean.
    pub fn standardize(&self, params: &BTreeMap<String, f64>) -> Result<DVector<f64>> {
        let mut beta = DVector::zeros(self.labels.len());
        for (label, &v) in params {
            let j = self.label_index(label)?;
            if !v.is_finite() {
                return Err(Error::invalid(format!("parameter `{label}`"), "non-finite value"));
            }
            beta[j] = self.stats[j].standardize(v);
        }
        Ok(beta)
    }

    pub fn physical(&self, beta_std: &DVector<f64>) -> Vec<f64> {
        beta_std
            .iter()
            .zip(&self.stats)
            .map(|(z, s)| s.physical(*z))
            .collect()
    }

    /// Shape for physical parameter values, with the standardized vector used.
    pub fn generate_from_params(&self, params: &BTreeMap<String, f64>) -> Result<(ShapeVector, DVector<f64>)> {
        let beta = self.standardize(params)?;
        Ok((self.generate_std(&beta)?, beta))
    }

    /// Shape variability induced by each parameter.
    pub fn variability(&self) -> VariabilityReport {
        let lambda = self.base.eigenvalues();
        let total = self.base.total_variance();
        let mut entries: Vec<VariabilityEntry> = self
            .labels
            .iter()
            .enumerate()
            .map(|(j, label)| {
                let kappa: f64 = self
                    .deformation
                    .column(j)
                    .iter()
                    .zip(lambda.iter())
                    .map(|(w, l)| w * w * l)
                    .sum();
                VariabilityEntry {
                    label: label.clone(),
                    kappa,
                    fraction: if total > 0.0 { kappa / total } else { 0.0 },
                }
            })
            .collect();
        entries.sort_by(|a, b| b.kappa.total_cmp(&a.kappa).then_with(|| a.label.cmp(&b.label)));
        VariabilityReport { entries }
    }

    /// Model over the remaining labels. ANAT recomputes the pseudo-inverse
    /// of the reduced `Q`; OC-ANAT keeps the surviving rows of `K`.
    pub fn sub_model(&self, drop_label: &str) -> Result<AnatModel> {
        let j = self.label_index(drop_label)?;
        if self.labels.len() == 1 {
            return Err(Error::invalid("sub-model", format!("cannot remove the last label `{drop_label}`")));
        }
        let mapping = self.mapping.clone().remove_row(j);
        let deformation = match self.kind {
            ModelKind::Anat => pseudo_inverse(&mapping)?,
            ModelKind::OcAnat => self.deformation.clone().remove_column(j),
        };
        let mut labels = self.labels.clone();
        labels.remove(j);
        let mut stats = self.stats.clone();
        stats.remove(j);
        Ok(AnatModel {
            base: self.base.clone(),
            kind: self.kind,
            labels,
            stats,
            mapping,
            deformation,
            source_q: self.source_q.clone().map(|q| q.remove_row(j)),
            recipe: self.recipe.clone(),
            landmarks: self.landmarks.clone(),
        })
    }

    /// Removes the most variable label at each step until one is left.
    pub fn ablation(&self) -> Result<Vec<AblationStep>> {
        let mut out = vec![AblationStep {
            removed: None,
            variability: self.variability(),
        }];
        let mut current = self.clone();
        while current.labels.len() > 1 {
            let top = out.last().expect("non-empty").variability.entries[0].label.clone();
            current = current.sub_model(&top)?;
            out.push(AblationStep {
                removed: Some(top),
                variability: current.variability(),
            });
        }
        Ok(out)
    }

    /// Standardized parameters read off a shape: `Q alpha` (or `K alpha`).
    pub fn predict_std(&self, shape: &ShapeVector) -> Result<DVector<f64>> {
        let alpha = self.base.project(shape)?;
        Ok(&self.mapping * alpha.0)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(&AnatModelFile::from(self)).map_err(|e| Error::json("anatomical model", e))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: AnatModelFile = serde_json::from_str(text).map_err(|e| Error::json("anatomical model", e))?;
        file.into_model()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: AnatModelFile = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        file.into_model()
    }
}

pub(super) fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()).collect()
}

pub(super) fn from_row_major(what: &str, rows: usize, cols: usize, v: &[f64]) -> Result<DMatrix<f64>> {
    if v.len() != rows * cols {
        return Err(Error::dimension(what.to_string(), rows * cols, v.len()));
    }
    Ok(DMatrix::from_row_slice(rows, cols, v))
}

pub(super) fn opt_vec_17<S: serde::Serializer>(v: &Option<Vec<f64>>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(v) => crate::jsonfmt::vec_f64_17(v, s),
        None => s.serialize_none(),
    }
}

/// Matrices are stored row-major; `Q` is `m x rank`, the deformation
/// matrix `rank x m`.
#[derive(Serialize, Deserialize)]
struct AnatModelFile {
    format_version: u32,
    kind: ModelKind,
    labels: Vec<String>,
    stats: BTreeMap<String, LabelStats>,
    rank: usize,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none", serialize_with = "opt_vec_17")]
    q: Option<Vec<f64>>,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none", serialize_with = "opt_vec_17")]
    k: Option<Vec<f64>>,
    #[serde(serialize_with = "crate::jsonfmt::vec_f64_17")]
    deformation_matrix: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    recipe: Option<MeasurementRecipe>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    landmarks: Option<LandmarkSet>,
    base: ModelFile,
}

impl From<&AnatModel> for AnatModelFile {
    fn from(m: &AnatModel) -> Self {
        let (q, k) = match m.kind {
            ModelKind::Anat => (Some(row_major(&m.mapping)), None),
            ModelKind::OcAnat => (m.source_q.as_ref().map(row_major), Some(row_major(&m.mapping))),
        };
        AnatModelFile {
            format_version: ANAT_FORMAT_VERSION,
            kind: m.kind,
            labels: m.labels.clone(),
            stats: m.stats_map(),
            rank: m.base.rank(),
            q,
            k,
            deformation_matrix: row_major(&m.deformation),
            recipe: m.recipe.clone(),
            landmarks: m.landmarks.clone(),
            base: ModelFile::from(&m.base),
        }
    }
}

impl AnatModelFile {
    fn into_model(self) -> Result<AnatModel> {
        if self.format_version != ANAT_FORMAT_VERSION {
            return Err(Error::invalid(
                "anatomical model",
                format!("unsupported format_version {}", self.format_version),
            ));
        }
        let base = self.base.into_model()?;
        let (m, r) = (self.labels.len(), self.rank);
        if base.rank() != r {
            return Err(Error::dimension("anatomical model rank", base.rank(), r));
        }
        let stats = check_stats(&self.labels, &self.stats)?;
        let q = self.q.map(|v| from_row_major("Q", m, r, &v)).transpose()?;
        let (mapping, source_q) = match self.kind {
            ModelKind::Anat => (q.ok_or_else(|| Error::invalid("ANAT model", "missing Q"))?, None),
            ModelKind::OcAnat => {
                let k = self.k.ok_or_else(|| Error::invalid("OC-ANAT model", "missing K"))?;
                (from_row_major("K", m, r, &k)?, q)
            }
        };
        check_row_rank(&mapping, self.kind.as_str())?;
        let deformation = from_row_major("deformation_matrix", r, m, &self.deformation_matrix)?;
        let model = AnatModel {
            base,
            kind: self.kind,
            labels: self.labels,
            stats,
            mapping,
            deformation,
            source_q,
            recipe: None,
            landmarks: None,
        };
        match (self.recipe, self.landmarks) {
            (Some(recipe), Some(lm)) => model.with_measurement(recipe, lm),
            _ => Ok(model),
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    use super::*;
    use crate::mapping::linear::orthogonal_procrustes;
    use crate::morphometry::Unit;
    use crate::pca::build_base;
    use crate::pca::tests::random_dataset;

    fn toy() -> (BaseSsm, MappingQ, BTreeMap<String, LabelStats>) {
        let base = build_base(&random_dataset(9, 6, 17)).unwrap();
        let r = base.rank();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let labels: Vec<String> = ["A", "B", "C"].iter().map(|s| s.to_string()).collect();
        let q = MappingQ {
            matrix: DMatrix::from_fn(3, r, |_, _| rng.sample(StandardNormal)),
            labels: labels.clone(),
            rank_ok: true,
            r_squared: vec![1.0; 3],
        };
        let stats = labels
            .iter()
            .enumerate()
            .map(|(j, l)| {
                let s = LabelStats {
                    mean: 10.0 * (j as f64 + 1.0),
                    std: j as f64 + 0.5,
                    unit: Unit::Mm,
                };
                (l.clone(), s)
            })
            .collect();
        (base, q, stats)
    }

    #[test]
    fn anat_inverts_q() {
        let (base, q, stats) = toy();
        let model = build_anat(base, &q, &stats).unwrap();
        let eye = &q.matrix * model.deformation_matrix();
        assert!((eye - DMatrix::identity(3, 3)).amax() < 1e-8);
        let mean = model.generate_std(&DVector::zeros(3)).unwrap();
        assert_eq!(mean, *model.base().mean());
        let (shape, beta) = model.generate_from_params(&BTreeMap::new()).unwrap();
        assert_eq!(shape, mean);
        assert_eq!(beta, DVector::zeros(3));
    }

    #[test]
    fn physical_round_trip_and_unknown_label() {
        let (base, q, stats) = toy();
        let model = build_anat(base, &q, &stats).unwrap();
        let params: BTreeMap<String, f64> = [("B".to_string(), 23.0)].into();
        let beta = model.standardize(&params).unwrap();
        assert_eq!(beta[0], 0.0);
        assert!((beta[1] - 2.0).abs() < 1e-12);
        assert!((model.physical(&beta)[1] - 23.0).abs() < 1e-12);
        let bad: BTreeMap<String, f64> = [("Z".to_string(), 1.0)].into();
        assert!(matches!(model.standardize(&bad), Err(Error::UnknownLabel(_))));
        // the prediction recovers parameters of generated shapes
        let shape = model.generate_std(&beta).unwrap();
        assert!((model.predict_std(&shape).unwrap() - beta).amax() < 1e-8);
    }

    #[test]
    fn kappa_single_term() {
        let (base, mut q, stats) = toy();
        let r = base.rank();
        q.matrix = DMatrix::zeros(3, r);
        for j in 0..3 {
            q.matrix[(j, j)] = 1.0;
        }
        let model = build_anat(base, &q, &stats).unwrap();
        let v = model.variability();
        let lambda = model.base().eigenvalues();
        assert!((v.get("A").unwrap().kappa - lambda[0]).abs() <= 1e-12 * lambda[0]);
        assert_eq!(v.entries[0].label, "A");
        assert!(v.entries.iter().all(|e| e.kappa >= 0.0 && (0.0..=1.0).contains(&e.fraction)));
    }

    /// Direct deformation variance `|P D W e_j|^2` against the closed form.
    #[test]
    fn kappa_matches_deformation_norm() {
        let (base, q, stats) = toy();
        for model in [
            build_anat(base.clone(), &q, &stats).unwrap(),
            build_oc_anat(base.clone(), &orthogonal_procrustes(&q).unwrap(), &stats).unwrap(),
        ] {
            let v = model.variability();
            for (j, l) in model.labels().iter().enumerate() {
                let direct = base.deformation(&model.deformation_matrix().column(j).into_owned()).norm_squared();
                let k = v.get(l).unwrap().kappa;
                assert!((k - direct).abs() <= 1e-8 * direct);
            }
        }
    }

    #[test]
    fn oc_sub_models_keep_kappa() {
        let (base, q, stats) = toy();
        let k = orthogonal_procrustes(&q).unwrap();
        let model = build_oc_anat(base.clone(), &k, &stats).unwrap();
        let full = model.variability();
        assert!(full.total_kappa() <= base.total_variance() * (1.0 + 1e-12));
        let sub = model.sub_model("B").unwrap();
        for e in &sub.variability().entries {
            assert_eq!(e.kappa.to_bits(), full.get(&e.label).unwrap().kappa.to_bits());
        }
        let steps = model.ablation().unwrap();
        assert_eq!(steps.len(), 3);
        assert_eq!(steps[1].removed.as_deref(), Some(full.entries[0].label.as_str()));
        assert!(sub.sub_model("A").unwrap().sub_model("C").is_err());
    }

    #[test]
    fn anat_sub_model_recomputes_inverse() {
        let (base, q, stats) = toy();
        let model = build_anat(base, &q, &stats).unwrap();
        let sub = model.sub_model("A").unwrap();
        let eye = sub.mapping() * sub.deformation_matrix();
        assert!((eye - DMatrix::identity(2, 2)).amax() < 1e-8);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let (base, q, stats) = toy();
        let k = orthogonal_procrustes(&q).unwrap();
        for model in [
            build_anat(base.clone(), &q, &stats).unwrap(),
            build_oc_anat(base.clone(), &k, &stats).unwrap(),
        ] {
            let back = AnatModel::from_json(&model.to_json().unwrap()).unwrap();
            assert_eq!(back, model);
        }
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let (base, q, stats) = toy();
        let mut wide = q.clone();
        wide.matrix = DMatrix::zeros(3, base.rank() + 1);
        assert!(matches!(build_anat(base.clone(), &wide, &stats), Err(Error::Dimension { .. })));
        let mut partial = stats.clone();
        partial.remove("C");
        assert!(build_anat(base, &q, &partial).is_err());
    }
}
