//! PCA statistical shape model `mu + P D alpha` and its quality metrics.

pub(crate) mod metrics;

use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shape::{Point3, ShapeDataset, ShapeVector, Topology};

pub use metrics::{
    compactness, generality, metric_curves, specificity, GeneralityScore, ModelMetrics,
    SpecificityScore,
};

/// Eigenvalues below this fraction of the largest one are discarded.
pub const EIGEN_TRUNCATION: f64 = 1e-10;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub n: usize,
    pub seed: Option<u64>,
    pub tool_version: String,
}

/// PCA model of a corresponded shape population.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseSsm {
    mean: ShapeVector,
    eigenvalues: DVector<f64>,
    basis: DMatrix<f64>,
    topology: Arc<Topology>,
    pub provenance: Provenance,
}

/// Standard-normal shape coefficients, one per retained mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeCoefficients(pub DVector<f64>);

impl ShapeCoefficients {
    pub fn zeros(rank: usize) -> Self {
        ShapeCoefficients(DVector::zeros(rank))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Builds the PCA model through the `n x n` Gram matrix of the centred
/// shapes, which has the same non-zero spectrum as the `3N x 3N`
/// covariance.
pub fn build_base(dataset: &ShapeDataset) -> Result<BaseSsm> {
    if dataset.len() < 2 {
        return Err(Error::InsufficientData {
            what: "shape model".into(),
            needed: 2,
            got: dataset.len(),
        });
    }
    Ok(build_unchecked(dataset))
}

/// Model over `n >= 1` shapes. A single shape yields a rank-0 model; the
/// leave-one-out metrics rely on that.
pub(crate) fn build_unchecked(dataset: &ShapeDataset) -> BaseSsm {
    let shapes = dataset.shapes();
    let n = shapes.len();
    let dim = shapes[0].coords().len();
    // shifted by the first shape: exact when all shapes coincide
    let first = shapes[0].coords();
    let mut offset = DVector::zeros(dim);
    for s in &shapes[1..] {
        offset += s.coords() - first;
    }
    let mean = first + offset / n as f64;

    let mut centred = DMatrix::zeros(dim, n);
    for (j, s) in shapes.iter().enumerate() {
        centred.set_column(j, &(s.coords() - &mean));
    }

    let topology = Arc::clone(dataset.topology());
    let provenance = Provenance {
        n,
        seed: None,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let empty = |mean: DVector<f64>| BaseSsm {
        mean: ShapeVector::from_coords_unchecked(mean),
        eigenvalues: DVector::zeros(0),
        basis: DMatrix::zeros(dim, 0),
        topology: Arc::clone(&topology),
        provenance: provenance.clone(),
    };
    if n < 2 {
        return empty(mean);
    }

    let dof = (n - 1) as f64;
    let gram = centred.transpose() * &centred / dof;
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let largest = eig.eigenvalues[order[0]];
    // rounding noise left by the mean of identical shapes
    let coord_scale = shapes
        .iter()
        .map(|s| s.coords().amax())
        .fold(1.0, f64::max);
    let noise_floor = dim as f64 * (64.0 * f64::EPSILON * coord_scale).powi(2);
    if largest <= noise_floor || !largest.is_finite() {
        return empty(mean);
    }
    let kept: Vec<usize> = order
        .into_iter()
        .take(n - 1)
        .filter(|&i| eig.eigenvalues[i] > EIGEN_TRUNCATION * largest)
        .collect();

    let rank = kept.len();
    let mut basis = DMatrix::zeros(dim, rank);
    let mut eigenvalues = DVector::zeros(rank);
    for (c, &i) in kept.iter().enumerate() {
        let lambda = eig.eigenvalues[i];
        let phi = &centred * eig.eigenvectors.column(i) / (dof * lambda).sqrt();
        basis.set_column(c, &phi);
        eigenvalues[c] = lambda;
    }
    orthonormalize(&mut basis);
    fix_signs(&mut basis);

    BaseSsm {
        mean: ShapeVector::from_coords_unchecked(mean),
        eigenvalues,
        basis,
        topology,
        provenance,
    }
}

/// Modified Gram-Schmidt in column order; trailing modes with tiny
/// eigenvalues lose orthogonality when lifted from the Gram matrix.
fn orthonormalize(basis: &mut DMatrix<f64>) {
    for c in 0..basis.ncols() {
        for p in 0..c {
            let proj = basis.column(p).dot(&basis.column(c));
            let prev = basis.column(p).clone_owned();
            basis.column_mut(c).axpy(-proj, &prev, 1.0);
        }
        let norm = basis.column(c).norm();
        basis.column_mut(c).scale_mut(1.0 / norm);
    }
}

/// Largest-magnitude entry of every mode is made positive.
fn fix_signs(basis: &mut DMatrix<f64>) {
    for c in 0..basis.ncols() {
        let col = basis.column(c);
        let imax = col.iamax();
        if col[imax] < 0.0 {
            basis.column_mut(c).neg_mut();
        }
    }
}

impl ShapeVector {
    pub(crate) fn from_coords_unchecked(coords: DVector<f64>) -> Self {
        ShapeVector::new(coords).expect("model shape vector")
    }
}

impl BaseSsm {
    pub fn from_parts(
        mean: ShapeVector,
        eigenvalues: DVector<f64>,
        basis: DMatrix<f64>,
        topology: Arc<Topology>,
        provenance: Provenance,
    ) -> Result<Self> {
        let dim = mean.coords().len();
        if dim != 3 * topology.n_vertices {
            return Err(Error::dimension("model mean", 3 * topology.n_vertices, dim));
        }
        if basis.nrows() != dim {
            return Err(Error::dimension("model basis rows", dim, basis.nrows()));
        }
        if basis.ncols() != eigenvalues.len() {
            return Err(Error::dimension(
                "model basis columns",
                eigenvalues.len(),
                basis.ncols(),
            ));
        }
        if eigenvalues.iter().any(|&l| l < 0.0 || !l.is_finite())
            || eigenvalues.as_slice().windows(2).any(|w| w[1] > w[0])
        {
            return Err(Error::invalid(
                "model eigenvalues",
                "must be finite, non-negative and sorted descending",
            ));
        }
        Ok(BaseSsm {
            mean,
            eigenvalues,
            basis,
            topology,
            provenance,
        })
    }

    pub fn mean(&self) -> &ShapeVector {
        &self.mean
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topology
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n_points(&self) -> usize {
        self.mean.n_points()
    }

    pub fn total_variance(&self) -> f64 {
        self.eigenvalues.sum()
    }

    /// `diag(sqrt(lambda))`, the per-mode standard deviations.
    pub fn std_devs(&self) -> DVector<f64> {
        self.eigenvalues.map(f64::sqrt)
    }

    /// Keeps the leading `rank` modes.
    pub fn truncated(&self, rank: usize) -> BaseSsm {
        let r = rank.min(self.rank());
        BaseSsm {
            mean: self.mean.clone(),
            eigenvalues: self.eigenvalues.rows(0, r).into_owned(),
            basis: self.basis.columns(0, r).into_owned(),
            topology: Arc::clone(&self.topology),
            provenance: self.provenance.clone(),
        }
    }

    fn check_alpha(&self, alpha: &ShapeCoefficients) -> Result<()> {
        if alpha.len() != self.rank() {
            return Err(Error::dimension("shape coefficients", self.rank(), alpha.len()));
        }
        if !alpha.0.iter().all(|a| a.is_finite()) {
            return Err(Error::invalid("shape coefficients", "non-finite entry"));
        }
        Ok(())
    }

    /// Shape displacement `P D w` for coefficients `w`.
    pub fn deformation(&self, alpha: &DVector<f64>) -> DVector<f64> {
        let scaled = alpha.component_mul(&self.std_devs());
        &self.basis * scaled
    }

    /// `mu + P D alpha`.
    pub fn sample(&self, alpha: &ShapeCoefficients) -> Result<ShapeVector> {
        self.check_alpha(alpha)?;
        Ok(ShapeVector::from_coords_unchecked(
            self.mean.coords() + self.deformation(&alpha.0),
        ))
    }

    /// Positions of selected vertices of `sample(alpha)`, without forming
    /// the full shape vector.
    pub fn sample_points(&self, alpha: &ShapeCoefficients, vertices: &[usize]) -> Result<Vec<Point3>> {
        self.check_alpha(alpha)?;
        let scaled = alpha.0.component_mul(&self.std_devs());
        vertices
            .iter()
            .map(|&k| {
                if k >= self.n_points() {
                    return Err(Error::OutOfRange(format!(
                        "vertex {k} of a {}-vertex model",
                        self.n_points()
                    )));
                }
                let mut p = self.mean.point(k);
                for axis in 0..3 {
                    let row = self.basis.row(3 * k + axis);
                    p[axis] += row.dot(&scaled.transpose());
                }
                Ok(p)
            })
            .collect()
    }

    /// Least-squares coefficients `D^-1 P^T (s - mu)` of a shape.
    pub fn project(&self, shape: &ShapeVector) -> Result<ShapeCoefficients> {
        if self.rank() == 0 {
            return Err(Error::invalid(
                "projection",
                "rank-0 model has no shape coefficients",
            ));
        }
        let dim = self.mean.coords().len();
        if shape.coords().len() != dim {
            return Err(Error::dimension("projected shape", dim, shape.coords().len()));
        }
        if let Some(i) = self.eigenvalues.iter().position(|&l| l <= 0.0) {
            return Err(Error::Degenerate(format!("mode {} has zero variance", i + 1)));
        }
        let centred = shape.coords() - self.mean.coords();
        let coeffs = self.basis.tr_mul(&centred);
        Ok(ShapeCoefficients(coeffs.component_div(&self.std_devs())))
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile::from(self);
        serde_json::to_string(&file).map_err(|e| Error::json("shape model", e))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::json("shape model", e))?;
        file.into_model()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        file.into_model()
    }
}

/// On-disk form; the basis is stored row-major (`3N x rank`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub(crate) struct ModelFile {
    format_version: u32,
    #[serde(rename = "N")]
    n_points: usize,
    rank: usize,
    #[serde(serialize_with = "crate::jsonfmt::vec_f64_17")]
    mean: Vec<f64>,
    #[serde(serialize_with = "crate::jsonfmt::vec_f64_17")]
    eigenvalues: Vec<f64>,
    #[serde(serialize_with = "crate::jsonfmt::vec_f64_17")]
    basis: Vec<f64>,
    topology_id: String,
    topology: Vec<[usize; 3]>,
    provenance: Provenance,
}

impl From<&BaseSsm> for ModelFile {
    fn from(m: &BaseSsm) -> Self {
        let mut basis = Vec::with_capacity(m.basis.len());
        for row in m.basis.row_iter() {
            basis.extend(row.iter().copied());
        }
        ModelFile {
            format_version: FORMAT_VERSION,
            n_points: m.n_points(),
            rank: m.rank(),
            mean: m.mean.coords().as_slice().to_vec(),
            eigenvalues: m.eigenvalues.as_slice().to_vec(),
            basis,
            topology_id: m.topology.id.clone(),
            topology: m.topology.faces.clone(),
            provenance: m.provenance.clone(),
        }
    }
}

impl ModelFile {
    pub(crate) fn into_model(self) -> Result<BaseSsm> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::invalid(
                "shape model",
                format!("unsupported format_version {}", self.format_version),
            ));
        }
        let dim = 3 * self.n_points;
        if self.basis.len() != dim * self.rank {
            return Err(Error::dimension("model basis", dim * self.rank, self.basis.len()));
        }
        let topology = Arc::new(Topology::new(self.topology_id, self.n_points, self.topology)?);
        let mean = ShapeVector::new(DVector::from_vec(self.mean))?;
        BaseSsm::from_parts(
            mean,
            DVector::from_vec(self.eigenvalues),
            DMatrix::from_row_slice(dim, self.rank, &self.basis),
            topology,
            self.provenance,
        )
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    use super::*;

    pub(crate) fn random_dataset(n: usize, n_points: usize, seed: u64) -> ShapeDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topo = Arc::new(Topology::new("rand", n_points, vec![]).unwrap());
        let shapes = (0..n)
            .map(|_| {
                let v: Vec<f64> = (0..3 * n_points)
                    .map(|i| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        i as f64 * 0.1 + z * (1.0 + (i % 5) as f64)
                    })
                    .collect();
                ShapeVector::new(DVector::from_vec(v)).unwrap()
            })
            .collect();
        ShapeDataset::new(topo, shapes, (0..n).map(|i| i.to_string()).collect()).unwrap()
    }

    #[test]
    fn identical_shapes_give_rank_zero() {
        let d = random_dataset(2, 4, 1);
        let s = d.shapes()[0].clone();
        let d = ShapeDataset::new(
            Arc::clone(d.topology()),
            vec![s.clone(), s.clone(), s.clone()],
            vec!["a".into(), "b".into(), "c".into()],
        )
        .unwrap();
        let m = build_base(&d).unwrap();
        assert_eq!(m.rank(), 0);
        assert!((m.mean().coords() - s.coords()).amax() < 1e-12);
        assert!(m.project(&s).is_err());
    }

    #[test]
    fn two_shapes_closed_form() {
        let d = random_dataset(2, 5, 2);
        let s1 = d.shapes()[0].coords();
        let s2 = d.shapes()[1].coords();
        let m = build_base(&d).unwrap();
        assert_eq!(m.rank(), 1);
        let diff = s1 - s2;
        let expected = diff.norm_squared() / 2.0;
        assert!((m.eigenvalues()[0] - expected).abs() < 1e-10 * expected);
        let phi = m.basis().column(0);
        let cos = phi.dot(&diff).abs() / diff.norm();
        assert!((cos - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigenvalues_sum_to_total_variance() {
        let d = random_dataset(10, 20, 3);
        let m = build_base(&d).unwrap();
        let mean = m.mean().coords();
        let total: f64 = d
            .shapes()
            .iter()
            .map(|s| (s.coords() - mean).norm_squared())
            .sum::<f64>()
            / 9.0;
        assert!((m.total_variance() - total).abs() < 1e-8 * total);
        assert_eq!(m.rank(), 9);
    }

    #[test]
    fn gram_route_matches_dense_covariance() {
        let d = random_dataset(6, 4, 4);
        let m = build_base(&d).unwrap();
        let dim = 12;
        let mean = m.mean().coords();
        let mut cov = DMatrix::zeros(dim, dim);
        for s in d.shapes() {
            let c = s.coords() - mean;
            cov += &c * c.transpose();
        }
        cov /= 5.0;
        let mut dense: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().copied().collect();
        dense.sort_by(|a, b| b.total_cmp(a));
        for (i, l) in m.eigenvalues().iter().enumerate() {
            assert!((l - dense[i]).abs() < 1e-8 * l, "mode {i}: {l} vs {}", dense[i]);
        }
    }

    #[test]
    fn basis_is_orthonormal_with_sign_convention() {
        let m = build_base(&random_dataset(12, 30, 5)).unwrap();
        let gram = m.basis().tr_mul(m.basis());
        let err = (gram - DMatrix::identity(m.rank(), m.rank())).amax();
        assert!(err < 1e-8);
        for c in m.basis().column_iter() {
            assert!(c[c.iamax()] > 0.0);
        }
        let l = m.eigenvalues().as_slice();
        assert!(l.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn sample_at_origin_and_unit_mode() {
        let m = build_base(&random_dataset(5, 6, 6)).unwrap();
        let s0 = m.sample(&ShapeCoefficients::zeros(m.rank())).unwrap();
        assert_eq!(s0, *m.mean());
        let mut e1 = DVector::zeros(m.rank());
        e1[0] = 1.0;
        let s1 = m.sample(&ShapeCoefficients(e1)).unwrap();
        let expected = m.mean().coords() + m.basis().column(0) * m.eigenvalues()[0].sqrt();
        assert!((s1.coords() - expected).amax() < 1e-12);
        assert!(m.sample(&ShapeCoefficients::zeros(m.rank() + 1)).is_err());
    }

    #[test]
    fn project_inverts_sample() {
        let m = build_base(&random_dataset(8, 10, 7)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(70);
        for _ in 0..20 {
            let a = DVector::from_fn(m.rank(), |_, _| StandardNormal.sample(&mut rng));
            let s = m.sample(&ShapeCoefficients(a.clone())).unwrap();
            let back = m.project(&s).unwrap();
            assert!((back.0 - a).amax() < 1e-8);
        }
        let zero = m.project(m.mean()).unwrap();
        assert!(zero.0.amax() < 1e-10);
    }

    #[test]
    fn training_shapes_reconstruct_exactly() {
        let d = random_dataset(7, 9, 8);
        let m = build_base(&d).unwrap();
        for s in d.shapes() {
            let back = m.sample(&m.project(s).unwrap()).unwrap();
            assert!((back.coords() - s.coords()).norm() <= 1e-6);
        }
    }

    #[test]
    fn projection_is_residual_optimal() {
        let d = random_dataset(6, 8, 9);
        let m = build_base(&d).unwrap();
        let other = random_dataset(2, 8, 99);
        let outside = &other.shapes()[0];
        let alpha = m.project(outside).unwrap();
        let residual =
            |a: &DVector<f64>| (m.sample(&ShapeCoefficients(a.clone())).unwrap().coords() - outside.coords()).norm();
        let best = residual(&alpha.0);
        let mut rng = ChaCha8Rng::seed_from_u64(90);
        for _ in 0..100 {
            let delta = DVector::from_fn(m.rank(), |_, _| {
                0.05 * Distribution::<f64>::sample(&StandardNormal, &mut rng)
            });
            assert!(residual(&(&alpha.0 + delta)) >= best - 1e-12);
        }
    }

    #[test]
    fn sample_points_matches_full_sample() {
        let m = build_base(&random_dataset(5, 7, 10)).unwrap();
        let a = ShapeCoefficients(DVector::from_fn(m.rank(), |i, _| i as f64 * 0.3 - 0.5));
        let full = m.sample(&a).unwrap();
        let pts = m.sample_points(&a, &[0, 3, 6]).unwrap();
        for (p, k) in pts.iter().zip([0, 3, 6]) {
            assert!((p - full.point(k)).amax() < 1e-12);
        }
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let m = build_base(&random_dataset(5, 7, 11)).unwrap();
        let back = BaseSsm::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
    }
}
