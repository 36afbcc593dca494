//! Population statistics and the evaluation protocols.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::linear::{fit_mapping, orthogonal_procrustes, procrustes_matrix, pseudo_inverse, MappingQ};
use super::model::build_oc_anat;
use super::population::{generate_population, SyntheticPopulation};
use crate::error::{Error, Result};
use crate::morphometry::{measure, LandmarkSet, MeasurementRecipe, Unit};
use crate::pca::build_base;
use crate::shape::ShapeDataset;
use crate::stats::{pearson, shapiro_wilk};

/// Significance level of the normality check.
pub const NORMALITY_ALPHA: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    pub labels: Vec<String>,
    /// `m x m` Pearson coefficients between measurements.
    pub beta_beta: DMatrix<f64>,
    /// `r x m` Pearson coefficients between shape coefficients and
    /// measurements.
    pub alpha_beta: DMatrix<f64>,
}

pub fn pearson_reports(pop: &SyntheticPopulation) -> Result<CorrelationReport> {
    let m = pop.labels.len();
    let r = pop.rank();
    let betas: Vec<Vec<f64>> = (0..m).map(|j| pop.betas_raw.column(j).iter().copied().collect()).collect();
    let alphas: Vec<Vec<f64>> = (0..r).map(|i| pop.alphas.column(i).iter().copied().collect()).collect();
    let mut beta_beta = DMatrix::identity(m, m);
    for j in 0..m {
        for k in (j + 1)..m {
            let c = pearson(&betas[j], &betas[k]).map_err(|e| name_column(e, &pop.labels[j]))?;
            beta_beta[(j, k)] = c;
            beta_beta[(k, j)] = c;
        }
    }
    let mut alpha_beta = DMatrix::zeros(r, m);
    for i in 0..r {
        for j in 0..m {
            alpha_beta[(i, j)] = pearson(&alphas[i], &betas[j]).map_err(|e| name_column(e, &pop.labels[j]))?;
        }
    }
    Ok(CorrelationReport {
        labels: pop.labels.clone(),
        beta_beta,
        alpha_beta,
    })
}

fn name_column(e: Error, label: &str) -> Error {
    match e {
        Error::Degenerate(msg) => Error::Degenerate(format!("{msg} (label `{label}`)")),
        other => other,
    }
}

impl CorrelationReport {
    fn matrix_csv(names_rows: &[String], names_cols: &[String], m: &DMatrix<f64>) -> String {
        let mut out = String::from("row");
        for c in names_cols {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
        for (i, r) in names_rows.iter().enumerate() {
            out.push_str(r);
            for j in 0..names_cols.len() {
                let _ = write!(out, ",{:.16e}", m[(i, j)]);
            }
            out.push('\n');
        }
        out
    }

    pub fn beta_beta_csv(&self) -> String {
        Self::matrix_csv(&self.labels, &self.labels, &self.beta_beta)
    }

    pub fn alpha_beta_csv(&self) -> String {
        let rows: Vec<String> = (1..=self.alpha_beta.nrows()).map(|i| format!("alpha_{i}")).collect();
        Self::matrix_csv(&rows, &self.labels, &self.alpha_beta)
    }
}

/// Mean absolute differences between a learned matrix and the population
/// correlations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MappingCorrDiff {
    /// Mean over all entries of `|M_ji - corr(beta_j, alpha_i)|`.
    pub weights: f64,
    /// Mean over all entries of `|(M M^T)_jk - corr(beta_j, beta_k)|`.
    pub covariance: f64,
}

pub fn mapping_vs_corr(mapping: &DMatrix<f64>, report: &CorrelationReport) -> Result<MappingCorrDiff> {
    let (m, r) = (report.alpha_beta.ncols(), report.alpha_beta.nrows());
    if mapping.nrows() != m || mapping.ncols() != r {
        return Err(Error::invalid(
            "mapping vs correlation",
            format!("matrix is {}x{}, report is {m}x{r}", mapping.nrows(), mapping.ncols()),
        ));
    }
    let weights = (mapping - report.alpha_beta.transpose()).abs().mean();
    let covariance = (mapping * mapping.transpose() - &report.beta_beta).abs().mean();
    Ok(MappingCorrDiff { weights, covariance })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityEntry {
    pub label: String,
    pub w: f64,
    pub p: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityReport {
    pub entries: Vec<NormalityEntry>,
}

/// Shapiro-Wilk on every measurement marginal.
pub fn normality_report(pop: &SyntheticPopulation) -> Result<NormalityReport> {
    let entries = pop
        .labels
        .iter()
        .enumerate()
        .map(|(j, label)| {
            let col: Vec<f64> = pop.betas_raw.column(j).iter().copied().collect();
            let sw = shapiro_wilk(&col).map_err(|e| name_column(e, label))?;
            Ok(NormalityEntry {
                label: label.clone(),
                w: sw.w,
                p: sw.p,
                pass: sw.p > NORMALITY_ALPHA,
            })
        })
        .collect::<Result<_>>()?;
    Ok(NormalityReport { entries })
}

impl NormalityReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,W,p,pass\n");
        for e in &self.entries {
            let _ = writeln!(out, "{},{:.16e},{:.16e},{}", e.label, e.w, e.p, e.pass);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeStudyPoint {
    #[serde(rename = "M")]
    pub m: usize,
    /// Mean `|Q_M - corr_ref(beta, alpha)|`.
    pub weights_error: f64,
    /// Mean `|Q_M Q_M^T - corr_ref(beta, beta)|`.
    pub covariance_error: f64,
    /// Mean `|Q_M - Q_ref|`.
    pub q_error: f64,
}

/// Seed offset of the reference population, so that it shares no draws
/// with the studied populations.
const REFERENCE_SEED_OFFSET: u64 = 0x5EED_0000;

/// Fits `Q` on populations of each size and compares it with a reference
/// population ten times the largest size.
pub fn population_size_study(
    base: &crate::pca::BaseSsm,
    recipe: &MeasurementRecipe,
    landmarks: &LandmarkSet,
    sizes: &[usize],
    seed: u64,
) -> Result<Vec<SizeStudyPoint>> {
    if sizes.is_empty() || sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("population sizes", "must be non-empty and ascending"));
    }
    let largest = *sizes.last().expect("non-empty");
    let reference = generate_population(
        base,
        recipe,
        landmarks,
        10 * largest,
        seed.wrapping_add(REFERENCE_SEED_OFFSET),
    )?;
    let report = pearson_reports(&reference)?;
    let q_ref = fit_mapping(&reference)?.matrix;
    let full = generate_population(base, recipe, landmarks, largest, seed)?;
    sizes
        .iter()
        .map(|&m| {
            // per-draw streams make each smaller population a prefix of
            // the largest one
            let pop = SyntheticPopulation::from_parts(
                full.alphas.rows(0, m).into_owned(),
                full.betas_raw.rows(0, m).into_owned(),
                full.labels.clone(),
                full.stats.iter().map(|s| s.unit).collect(),
                seed,
            )?;
            let q = fit_mapping(&pop)?.matrix;
            let diff = mapping_vs_corr(&q, &report)?;
            Ok(SizeStudyPoint {
                m,
                weights_error: diff.weights,
                covariance_error: diff.covariance,
                q_error: (&q - &q_ref).abs().mean(),
            })
        })
        .collect()
}

pub fn size_study_csv(points: &[SizeStudyPoint]) -> String {
    let mut out = String::from("M,weights_error,covariance_error,q_error\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e}",
            p.m, p.weights_error, p.covariance_error, p.q_error
        );
    }
    out
}

/// How ANAT and OC-ANAT predict parameters of an unseen shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionMode {
    /// `beta = Q project(s)` (resp. `K project(s)`).
    #[default]
    Forward,
    /// The `beta` whose generated shape is closest to `s`.
    ShapeFit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LooOptions {
    /// Synthetic population size per fold.
    pub m: usize,
    pub seed: u64,
    pub mode: PredictionMode,
    /// Truth per shape in recipe label order; defaults to measuring the
    /// held-out shape at its landmarks.
    pub ground_truth: Option<DMatrix<f64>>,
    /// Also run the sequential OC-ANAT sub-model study.
    pub sequential: bool,
}

impl LooOptions {
    pub fn new(m: usize, seed: u64) -> Self {
        LooOptions {
            m,
            seed,
            mode: PredictionMode::Forward,
            ground_truth: None,
            sequential: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub model: String,
    pub label: String,
    pub unit: Unit,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialStep {
    /// Labels removed so far, in removal order.
    pub removed: Vec<String>,
    pub summary: Vec<ErrorSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooReport {
    pub labels: Vec<String>,
    pub units: Vec<Unit>,
    pub shapes: Vec<String>,
    /// `BASE`, `ANAT`, `OC-ANAT`.
    pub models: Vec<String>,
    /// Absolute errors, `errors[model][shape][label]`.
    pub errors: Vec<Vec<Vec<f64>>>,
    pub summary: Vec<ErrorSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequential: Option<Vec<SequentialStep>>,
}

pub const LOO_MODELS: [&str; 3] = ["BASE", "ANAT", "OC-ANAT"];

fn summarize(model: &str, label: &str, unit: Unit, e: &[f64]) -> ErrorSummary {
    let n = e.len() as f64;
    let mean = e.iter().sum::<f64>() / n;
    let std = if e.len() > 1 {
        (e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    ErrorSummary {
        model: model.to_string(),
        label: label.to_string(),
        unit,
        mean,
        std,
        min: e.iter().copied().fold(f64::INFINITY, f64::min),
        max: e.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

impl LooReport {
    pub fn get(&self, model: &str, label: &str) -> Option<&ErrorSummary> {
        self.summary.iter().find(|s| s.model == model && s.label == label)
    }

    /// `model,label,unit,mean,std,min,max`, then the sequential study rows
    /// (model `OC-ANAT\removed1\...`) if present.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,label,unit,mean,std,min,max\n");
        let mut row = |s: &ErrorSummary, model: &str| {
            let _ = writeln!(
                out,
                "{model},{},{},{:.16e},{:.16e},{:.16e},{:.16e}",
                s.label,
                s.unit.as_str(),
                s.mean,
                s.std,
                s.min,
                s.max
            );
        };
        for s in &self.summary {
            row(s, &s.model);
        }
        for step in self.sequential.iter().flatten().skip(1) {
            let name = format!("OC-ANAT\\{}", step.removed.join("\\"));
            for s in &step.summary {
                row(s, &name);
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Least-squares `beta` whose deformation `D W beta` best matches `D alpha`.
fn shape_fit(w: &DMatrix<f64>, sd: &DVector<f64>, alpha: &DVector<f64>) -> Result<DVector<f64>> {
    let dw = DMatrix::from_fn(w.nrows(), w.ncols(), |i, j| sd[i] * w[(i, j)]);
    let target = alpha.component_mul(sd);
    let f = crate::linalg::svd(&dw)?;
    if f.smin() <= super::RANK_TOLERANCE * f.smax() {
        return Err(Error::RankDeficient {
            what: "shape-space parameter fit".into(),
            value: f.smin(),
            tolerance: super::RANK_TOLERANCE * f.smax(),
        });
    }
    Ok(f.solve(&DMatrix::from_column_slice(target.len(), 1, target.as_slice())).column(0).into_owned())
}

struct Fold {
    /// Physical predictions per model.
    predictions: [Vec<f64>; 3],
    truth: Vec<f64>,
    /// Physical OC-ANAT predictions per sequential step (remaining labels).
    sequential: Vec<Vec<f64>>,
}

/// Leave-one-out comparison of landmark transfer (BASE) against ANAT and
/// OC-ANAT predictions.
pub fn loo_evaluate(
    dataset: &ShapeDataset,
    recipe: &MeasurementRecipe,
    landmarks: &LandmarkSet,
    m: usize,
    seed: u64,
) -> Result<LooReport> {
    loo_evaluate_with(dataset, recipe, landmarks, &LooOptions::new(m, seed))
}

pub fn loo_evaluate_with(
    dataset: &ShapeDataset,
    recipe: &MeasurementRecipe,
    landmarks: &LandmarkSet,
    opts: &LooOptions,
) -> Result<LooReport> {
    let n = dataset.len();
    if n < 3 {
        return Err(Error::InsufficientData {
            what: "leave-one-out evaluation".into(),
            needed: 3,
            got: n,
        });
    }
    recipe.validate()?;
    let labels = recipe.labels();
    let nl = labels.len();
    if let Some(t) = &opts.ground_truth {
        if t.nrows() != n || t.ncols() != nl {
            return Err(Error::invalid(
                "ground truth",
                format!("is {}x{}, expected {n}x{nl}", t.nrows(), t.ncols()),
            ));
        }
    }
    let order = if opts.sequential {
        sequential_order(dataset, recipe, landmarks, opts)?
    } else {
        Vec::new()
    };

    let folds: Vec<(Fold, Vec<Unit>)> = (0..n)
        .into_par_iter()
        .map(|i| loo_fold(dataset, recipe, landmarks, opts, &order, i))
        .collect::<Result<_>>()?;
    let units = folds[0].1.clone();

    let mut errors = vec![vec![vec![0.0; nl]; n]; 3];
    for (i, (f, _)) in folds.iter().enumerate() {
        for (k, pred) in f.predictions.iter().enumerate() {
            for j in 0..nl {
                errors[k][i][j] = (pred[j] - f.truth[j]).abs();
            }
        }
    }
    let mut summary = Vec::new();
    for (k, model) in LOO_MODELS.iter().enumerate() {
        for (j, label) in labels.iter().enumerate() {
            let e: Vec<f64> = (0..n).map(|i| errors[k][i][j]).collect();
            summary.push(summarize(model, label, units[j], &e));
        }
    }

    let sequential = opts.sequential.then(|| {
        let mut steps = Vec::new();
        let mut removed: Vec<String> = Vec::new();
        for s in 0..nl {
            let remaining: Vec<usize> = (0..nl).filter(|j| !removed.contains(&labels[*j])).collect();
            let summary = remaining
                .iter()
                .enumerate()
                .map(|(c, &j)| {
                    let e: Vec<f64> = folds
                        .iter()
                        .map(|(f, _)| (f.sequential[s][c] - f.truth[j]).abs())
                        .collect();
                    summarize("OC-ANAT", &labels[j], units[j], &e)
                })
                .collect();
            steps.push(SequentialStep {
                removed: removed.clone(),
                summary,
            });
            if s + 1 < nl {
                removed.push(labels[order[s]].clone());
            }
        }
        steps
    });

    Ok(LooReport {
        labels,
        units,
        shapes: dataset.names().to_vec(),
        models: LOO_MODELS.iter().map(|s| s.to_string()).collect(),
        errors,
        summary,
        sequential,
    })
}

/// Removal order of the sequential study: at each step the label with the
/// largest variability in the OC-ANAT model re-solved on the remaining
/// rows of `Q`, all on the full dataset.
fn sequential_order(
    dataset: &ShapeDataset,
    recipe: &MeasurementRecipe,
    landmarks: &LandmarkSet,
    opts: &LooOptions,
) -> Result<Vec<usize>> {
    let base = build_base(dataset)?;
    let pop = generate_population(&base, recipe, landmarks, opts.m, opts.seed)?;
    let q = fit_mapping(&pop)?;
    let stats = pop.stats_map();
    let mut remaining: Vec<usize> = (0..q.labels.len()).collect();
    let mut order = Vec::new();
    while remaining.len() > 1 {
        let sub = MappingQ {
            matrix: select_rows(&q.matrix, &remaining),
            labels: remaining.iter().map(|&j| q.labels[j].clone()).collect(),
            rank_ok: true,
            r_squared: Vec::new(),
        };
        let model = build_oc_anat(base.clone(), &orthogonal_procrustes(&sub)?, &stats)?;
        let top = &model.variability().entries[0].label;
        let j = *remaining
            .iter()
            .find(|&&j| &q.labels[j] == top)
            .expect("label of the sub-model");
        order.push(j);
        remaining.retain(|&k| k != j);
    }
    Ok(order)
}

fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

fn loo_fold(
    dataset: &ShapeDataset,
    recipe: &MeasurementRecipe,
    landmarks: &LandmarkSet,
    opts: &LooOptions,
    order: &[usize],
    i: usize,
) -> Result<(Fold, Vec<Unit>)> {
    let rest = dataset.without(i);
    let held = &dataset.shapes()[i];
    let base = build_base(&rest)?;
    let labels = recipe.labels();
    let nl = labels.len();

    let measured = measure(recipe, &landmarks.locate_in(held)?)?;
    let units = measured.units();
    let base_pred = measured.values();
    let truth = match &opts.ground_truth {
        Some(t) => t.row(i).iter().copied().collect(),
        None => base_pred.clone(),
    };

    let pop = generate_population(&base, recipe, landmarks, opts.m, opts.seed.wrapping_add(i as u64))?;
    let to_physical = |z: &DVector<f64>, rows: &[usize]| -> Vec<f64> {
        rows.iter().enumerate().map(|(c, &j)| pop.stats[j].physical(z[c])).collect()
    };
    let all: Vec<usize> = (0..nl).collect();

    if base.rank() == 0 {
        // no shape variation: every model predicts the population mean
        let mean: Vec<f64> = pop.stats.iter().map(|s| s.mean).collect();
        let sequential = (0..if opts.sequential { nl } else { 0 })
            .map(|s| mean[..nl - s].to_vec())
            .collect();
        return Ok((
            Fold {
                predictions: [base_pred, mean.clone(), mean],
                truth,
                sequential,
            },
            units,
        ));
    }

    let q = fit_mapping(&pop)?;
    let k = procrustes_matrix(&q.matrix)?;
    let alpha = base.project(held)?.0;
    let sd = base.std_devs();
    let predict = |mapping: &DMatrix<f64>, w: &DMatrix<f64>| -> Result<DVector<f64>> {
        match opts.mode {
            PredictionMode::Forward => Ok(mapping * &alpha),
            PredictionMode::ShapeFit => shape_fit(w, &sd, &alpha),
        }
    };
    let anat = predict(&q.matrix, &pseudo_inverse(&q.matrix)?)?;
    let oc = predict(&k, &k.transpose())?;

    let mut sequential = Vec::new();
    if opts.sequential {
        let mut remaining = all.clone();
        for s in 0..nl {
            let ks = procrustes_matrix(&select_rows(&q.matrix, &remaining))?;
            let z = predict(&ks, &ks.transpose())?;
            sequential.push(to_physical(&z, &remaining));
            if s + 1 < nl {
                remaining.retain(|&j| j != order[s]);
            }
        }
    }
    Ok((
        Fold {
            predictions: [base_pred, to_physical(&anat, &all), to_physical(&oc, &all)],
            truth,
            sequential,
        },
        units,
    ))
}
