//! Compactness, generality and specificity of a shape model.
//!
//! Generality and specificity follow the squared-norm definitions; the
//! `rms_mm` companions report the root-mean-square per-vertex distance,
//! which is how curves are usually plotted.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_unchecked, BaseSsm};
use crate::error::{Error, Result};
use crate::shape::ShapeDataset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralityScore {
    /// Mean over held-out shapes of `|s'(R) - s|^2`.
    pub squared: f64,
    /// Mean over held-out shapes of the RMS vertex distance, mm.
    pub rms_mm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpecificityScore {
    /// Mean over random samples of the squared distance to the nearest
    /// training shape.
    pub squared: f64,
    pub rms_mm: f64,
    /// Standard error of `squared` across samples.
    pub std_error: f64,
}

/// Metric curves indexed by `R = 1..=rank` (entry `R - 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub compactness: Vec<f64>,
    pub generality: Vec<GeneralityScore>,
    pub specificity: Vec<SpecificityScore>,
}

/// Fraction of total variance captured by the leading `r` modes.
pub fn compactness(model: &BaseSsm, r: usize) -> Result<f64> {
    if r == 0 || r > model.rank() {
        return Err(Error::OutOfRange(format!(
            "compactness R = {r} outside 1..={}",
            model.rank()
        )));
    }
    let l = model.eigenvalues();
    Ok(l.rows(0, r).sum() / l.sum())
}

/// Residual norms `|s_i - recon_R(s_i)|^2` for `R = 0..=max_r`, where the
/// reconstruction uses the model built without `s_i`.
fn loo_residuals(dataset: &ShapeDataset, max_r: usize) -> Vec<Vec<f64>> {
    (0..dataset.len())
        .into_par_iter()
        .map(|i| {
            let reduced = build_unchecked(&dataset.without(i));
            let mut residual = dataset.shapes()[i].coords() - reduced.mean().coords();
            let mut out = Vec::with_capacity(max_r + 1);
            out.push(residual.norm_squared());
            for r in 0..max_r {
                if r < reduced.rank() {
                    let phi = reduced.basis().column(r);
                    let c = phi.dot(&residual);
                    residual.axpy(-c, &phi, 1.0);
                }
                out.push(residual.norm_squared());
            }
            out
        })
        .collect()
}

fn generality_from(residuals: &[Vec<f64>], r: usize, n_points: usize) -> GeneralityScore {
    let n = residuals.len() as f64;
    let squared = residuals.iter().map(|v| v[r]).sum::<f64>() / n;
    let rms_mm = residuals
        .iter()
        .map(|v| (v[r] / n_points as f64).sqrt())
        .sum::<f64>()
        / n;
    GeneralityScore { squared, rms_mm }
}

/// Leave-one-out reconstruction error with `r` modes. Models built on
/// `n - 1` shapes have at most `n - 2` modes; larger `r` is clamped.
pub fn generality(dataset: &ShapeDataset, r: usize) -> Result<GeneralityScore> {
    if dataset.len() < 2 {
        return Err(Error::InsufficientData {
            what: "generality".into(),
            needed: 2,
            got: dataset.len(),
        });
    }
    let cap = dataset.len() - 2;
    if r > cap {
        warn!("generality: R = {r} exceeds leave-one-out model rank {cap}; clamped");
    }
    let residuals = loo_residuals(dataset, r);
    Ok(generality_from(
        &residuals,
        r,
        dataset.topology().n_vertices,
    ))
}

/// Draws standard-normal coefficients for sample `index`; every sample has
/// its own ChaCha stream so results do not depend on scheduling.
pub(crate) fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

struct NearestSearch {
    /// `|mu - s_j|^2` per training shape.
    offset_norms: Vec<f64>,
    /// `P^T (mu - s_j)` per training shape (columns).
    offset_coords: DMatrix<f64>,
}

impl NearestSearch {
    fn new(model: &BaseSsm, dataset: &ShapeDataset) -> Self {
        let n = dataset.len();
        let mut offset_coords = DMatrix::zeros(model.rank(), n);
        let mut offset_norms = Vec::with_capacity(n);
        for (j, s) in dataset.shapes().iter().enumerate() {
            let a = model.mean().coords() - s.coords();
            offset_norms.push(a.norm_squared());
            offset_coords.set_column(j, &model.basis().tr_mul(&a));
        }
        NearestSearch {
            offset_norms,
            offset_coords,
        }
    }

    /// `min_j |mu + P w - s_j|^2` with `w` supported on the leading modes.
    fn nearest(&self, w: &DVector<f64>) -> f64 {
        let r = w.len();
        let ww = w.norm_squared();
        self.offset_norms
            .iter()
            .enumerate()
            .map(|(j, a2)| {
                let cross = self.offset_coords.view((0, j), (r, 1)).column(0).dot(w);
                (a2 + 2.0 * cross + ww).max(0.0)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

fn specificity_draws(
    model: &BaseSsm,
    dataset: &ShapeDataset,
    max_r: usize,
    n_samples: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let search = NearestSearch::new(model, dataset);
    let sd = model.std_devs();
    (0..n_samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = sample_rng(seed, k as u64);
            let alpha: Vec<f64> = (0..max_r).map(|_| StandardNormal.sample(&mut rng)).collect();
            (1..=max_r.max(1))
                .map(|r| {
                    let r = r.min(max_r);
                    let w = DVector::from_fn(r, |i, _| alpha[i] * sd[i]);
                    search.nearest(&w)
                })
                .collect()
        })
        .collect()
}

fn specificity_from(draws: &[Vec<f64>], idx: usize, n_points: usize) -> SpecificityScore {
    let n = draws.len() as f64;
    let values: Vec<f64> = draws.iter().map(|d| d[idx]).collect();
    let squared = values.iter().sum::<f64>() / n;
    let var = if draws.len() > 1 {
        values.iter().map(|v| (v - squared).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let rms_mm = values.iter().map(|v| (v / n_points as f64).sqrt()).sum::<f64>() / n;
    SpecificityScore {
        squared,
        rms_mm,
        std_error: (var / n).sqrt(),
    }
}

/// Mean squared distance from `n_samples` random model instances (leading
/// `r` modes) to their nearest shape in `dataset`. Deterministic in `seed`.
pub fn specificity(
    model: &BaseSsm,
    dataset: &ShapeDataset,
    r: usize,
    n_samples: usize,
    seed: u64,
) -> Result<SpecificityScore> {
    if dataset.is_empty() {
        return Err(Error::InsufficientData {
            what: "specificity training set".into(),
            needed: 1,
            got: 0,
        });
    }
    if n_samples == 0 {
        return Err(Error::invalid("specificity", "n_samples must be at least 1"));
    }
    if dataset.shapes()[0].coords().len() != model.mean().coords().len() {
        return Err(Error::dimension(
            "specificity dataset",
            model.mean().coords().len(),
            dataset.shapes()[0].coords().len(),
        ));
    }
    let r = r.min(model.rank());
    let draws = specificity_draws(model, dataset, r, n_samples, seed);
    Ok(specificity_from(&draws, r.max(1) - 1, model.n_points()))
}

/// Compactness, generality and specificity for every `R = 1..=rank`.
pub fn metric_curves(
    model: &BaseSsm,
    dataset: &ShapeDataset,
    n_samples: usize,
    seed: u64,
) -> Result<ModelMetrics> {
    let rank = model.rank();
    let compactness = (1..=rank)
        .map(|r| compactness(model, r))
        .collect::<Result<Vec<_>>>()?;
    let residuals = loo_residuals(dataset, rank);
    let n_points = model.n_points();
    let generality = (1..=rank)
        .map(|r| generality_from(&residuals, r, n_points))
        .collect();
    let specificity = if rank == 0 {
        Vec::new()
    } else {
        let draws = specificity_draws(model, dataset, rank, n_samples, seed);
        (0..rank)
            .map(|i| specificity_from(&draws, i, n_points))
            .collect()
    };
    Ok(ModelMetrics {
        compactness,
        generality,
        specificity,
    })
}

impl ModelMetrics {
    /// CSV with one row per retained-mode count.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "R,compactness,generality_sq,generality_rms_mm,specificity_sq,specificity_rms_mm\n",
        );
        for i in 0..self.compactness.len() {
            let g = self.generality[i];
            let s = self.specificity[i];
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                i + 1,
                self.compactness[i],
                g.squared,
                g.rms_mm,
                s.squared,
                s.rms_mm
            ));
        }
        out
    }
}
