//! Synthetic populations drawn from a shape model and measured.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphometry::{measure, LandmarkSet, MeasurementRecipe, Unit};
use crate::pca::metrics::sample_rng;
use crate::pca::{BaseSsm, ShapeCoefficients};

/// Largest tolerated fraction of rejected draws.
pub const MAX_REJECT_FRACTION: f64 = 0.01;

/// Mean and standard deviation of one measurement in the training
/// population; converts between physical and standardized values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelStats {
    #[serde(serialize_with = "crate::jsonfmt::f64_17")]
    pub mean: f64,
    #[serde(serialize_with = "crate::jsonfmt::f64_17")]
    pub std: f64,
    pub unit: Unit,
}

impl LabelStats {
    pub fn standardize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn physical(&self, z: f64) -> f64 {
        self.mean + z * self.std
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPopulation {
    /// `M x r` shape coefficients.
    pub alphas: DMatrix<f64>,
    /// `M x m` measurements in physical units.
    pub betas_raw: DMatrix<f64>,
    /// `M x m` standardized measurements.
    pub betas_std: DMatrix<f64>,
    pub labels: Vec<String>,
    pub stats: Vec<LabelStats>,
    pub seed: u64,
    /// Draws discarded because a measurement could not be computed.
    pub rejected: usize,
    /// Recipe and landmarks the measurements came from, when known.
    pub recipe: Option<MeasurementRecipe>,
    pub landmarks: Option<LandmarkSet>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PopulationOptions {
    /// Forces every draw to `alpha = 0` (measures the mean shape).
    pub zero_alpha: bool,
}

fn column_stats(col: &[f64], unit: Unit) -> LabelStats {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let std = var.sqrt();
    // a single draw or a constant column has no spread to divide by
    let std = if std.is_finite() && std > 0.0 { std } else { 1.0 };
    LabelStats { mean, std, unit }
}

impl SyntheticPopulation {
    /// Assembles a population and estimates its standardization stats.
    pub fn from_parts(
        alphas: DMatrix<f64>,
        betas_raw: DMatrix<f64>,
        labels: Vec<String>,
        units: Vec<Unit>,
        seed: u64,
    ) -> Result<Self> {
        if alphas.nrows() != betas_raw.nrows() {
            return Err(Error::dimension("population rows", alphas.nrows(), betas_raw.nrows()));
        }
        if labels.len() != betas_raw.ncols() || units.len() != labels.len() {
            return Err(Error::dimension("population labels", betas_raw.ncols(), labels.len()));
        }
        if alphas.nrows() == 0 {
            return Err(Error::InsufficientData {
                what: "synthetic population".into(),
                needed: 1,
                got: 0,
            });
        }
        let stats: Vec<LabelStats> = (0..labels.len())
            .map(|j| column_stats(betas_raw.column(j).as_slice(), units[j]))
            .collect();
        Ok(Self::with_stats(alphas, betas_raw, labels, stats, seed, 0))
    }

    fn with_stats(
        alphas: DMatrix<f64>,
        betas_raw: DMatrix<f64>,
        labels: Vec<String>,
        stats: Vec<LabelStats>,
        seed: u64,
        rejected: usize,
    ) -> Self {
        let betas_std = DMatrix::from_fn(betas_raw.nrows(), betas_raw.ncols(), |i, j| {
            stats[j].standardize(betas_raw[(i, j)])
        });
        SyntheticPopulation {
            alphas,
            betas_raw,
            betas_std,
            labels,
            stats,
            seed,
            rejected,
            recipe: None,
            landmarks: None,
        }
    }

    pub fn len(&self) -> usize {
        self.alphas.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.nrows() == 0
    }

    pub fn rank(&self) -> usize {
        self.alphas.ncols()
    }

    pub fn label_index(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn stats_map(&self) -> BTreeMap<String, LabelStats> {
        self.labels.iter().cloned().zip(self.stats.iter().copied()).collect()
    }

    /// Columns `alpha_1..alpha_r`, then one raw column per label.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let r = self.rank();
        let header: Vec<String> = (1..=r)
            .map(|i| format!("alpha_{i}"))
            .chain(self.labels.iter().cloned())
            .collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for i in 0..self.len() {
            let (a, b) = (self.alphas.row(i), self.betas_raw.row(i));
            for (k, v) in a.iter().chain(b.iter()).enumerate() {
                if k > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v:.16e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn stats_json(&self) -> String {
        let file = StatsFile {
            seed: self.seed,
            m: self.len(),
            rejected: self.rejected,
            labels: self.labels.clone(),
            stats: self.stats_map(),
            recipe: self.recipe.clone(),
            landmarks: self.landmarks.clone(),
        };
        serde_json::to_string_pretty(&file).expect("stats serialize")
    }

    /// Writes `path` and the `<stem>.stats.json` sidecar.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))?;
        let side = stats_path(path);
        fs::write(&side, self.stats_json()).map_err(|e| Error::io(&side, e))
    }

    /// Reads a population written by [`SyntheticPopulation::save`].
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let side = stats_path(path);
        let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let file: StatsFile = serde_json::from_str(&text).map_err(|e| Error::json(&side, e))?;
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let origin = path.display().to_string();
        let parse_err = |line: usize, reason: String| Error::Parse {
            path: origin.clone(),
            line,
            reason,
        };
        let mut lines = text.lines();
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| parse_err(1, "empty file".into()))?
            .split(',')
            .collect();
        let r = header.iter().take_while(|h| h.starts_with("alpha_")).count();
        let labels: Vec<String> = header[r..].iter().map(|s| s.to_string()).collect();
        if labels != file.labels {
            return Err(parse_err(1, "label columns disagree with the stats sidecar".into()));
        }
        let mut values = Vec::new();
        let mut rows = 0;
        for (k, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != header.len() {
                return Err(parse_err(k + 2, format!("expected {} fields", header.len())));
            }
            for f in fields {
                values.push(
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| parse_err(k + 2, format!("`{f}`: {e}")))?,
                );
            }
            rows += 1;
        }
        let all = DMatrix::from_row_slice(rows, header.len(), &values);
        let stats = labels
            .iter()
            .map(|l| {
                file.stats
                    .get(l)
                    .copied()
                    .ok_or_else(|| Error::UnknownLabel(l.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut pop = Self::with_stats(
            all.columns(0, r).into_owned(),
            all.columns(r, labels.len()).into_owned(),
            labels,
            stats,
            file.seed,
            file.rejected,
        );
        pop.recipe = file.recipe;
        pop.landmarks = file.landmarks;
        Ok(pop)
    }
}

#[derive(Serialize, Deserialize)]
struct StatsFile {
    seed: u64,
    #[serde(rename = "M")]
    m: usize,
    rejected: usize,
    labels: Vec<String>,
    stats: BTreeMap<String, LabelStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    recipe: Option<MeasurementRecipe>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    landmarks: Option<LandmarkSet>,
}

pub fn stats_path(population: &Path) -> PathBuf {
    let stem = population
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "population".into());
    population.with_file_name(format!("{stem}.stats.json"))
}

/// Draws `m` shapes from `base` with `alpha ~ N(0, I)`, reads the landmarks
/// by vertex index and measures them. Draw `i` uses its own RNG stream, so
/// the result is independent of thread count.
pub fn generate_population(
    base: &BaseSsm,
    recipe: &MeasurementRecipe,
    landmarks: &LandmarkSet,
    m: usize,
    seed: u64,
) -> Result<SyntheticPopulation> {
    generate_population_with(base, recipe, landmarks, m, seed, PopulationOptions::default())
}

pub fn generate_population_with(
    base: &BaseSsm,
    recipe: &MeasurementRecipe,
    landmarks: &LandmarkSet,
    m: usize,
    seed: u64,
    opts: PopulationOptions,
) -> Result<SyntheticPopulation> {
    if m == 0 {
        return Err(Error::InsufficientData {
            what: "synthetic population".into(),
            needed: 1,
            got: 0,
        });
    }
    recipe.validate()?;
    if landmarks.topology_id != base.topology().id {
        return Err(Error::TopologyMismatch {
            expected: base.topology().id.clone(),
            got: landmarks.topology_id.clone(),
        });
    }
    landmarks.validate(base.n_points())?;
    landmarks.require(&recipe.landmarks)?;
    let labels = recipe.labels();
    let r = base.rank();
    let indices = landmarks.indices();
    let budget = (m as f64 * MAX_REJECT_FRACTION).floor() as usize;

    let draws: Vec<(DVector<f64>, Vec<f64>, Vec<Unit>, usize)> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, i as u64);
            let mut rejected = 0;
            loop {
                let alpha = if opts.zero_alpha {
                    DVector::zeros(r)
                } else {
                    DVector::from_fn(r, |_, _| StandardNormal.sample(&mut rng))
                };
                let points = base.sample_points(&ShapeCoefficients(alpha.clone()), &indices)?;
                match measure(recipe, &landmarks.name_points(&points)) {
                    Ok(mv) => return Ok((alpha, mv.values(), mv.units(), rejected)),
                    Err(e) if e.is_numerical() && rejected <= budget && !opts.zero_alpha => {
                        log::debug!("draw {i} rejected: {e}");
                        rejected += 1;
                    }
                    Err(e) => return Err(e),
                }
            }
        })
        .collect::<Result<_>>()?;

    let rejected: usize = draws.iter().map(|d| d.3).sum();
    if rejected > 0 {
        log::info!("synthetic population: {rejected} of {m} draws rejected and redrawn");
    }
    if rejected > budget {
        return Err(Error::Degenerate(format!(
            "synthetic population: {rejected} rejected draws exceed {:.0}% of {m}",
            100.0 * MAX_REJECT_FRACTION
        )));
    }
    let units = draws[0].2.clone();
    let alphas = DMatrix::from_fn(m, r, |i, k| draws[i].0[k]);
    let betas = DMatrix::from_fn(m, labels.len(), |i, j| draws[i].1[j]);
    let mut pop = SyntheticPopulation::from_parts(alphas, betas, labels, units, seed)?;
    pop.rejected = rejected;
    pop.recipe = Some(recipe.clone());
    pop.landmarks = Some(landmarks.clone());
    Ok(pop)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{FixtureFamilySpec, FixtureKind, sample_family};
    use crate::morphometry::measure as run_recipe;
    use crate::pca::build_base;

    fn femur_base() -> (BaseSsm, LandmarkSet, MeasurementRecipe) {
        let fam = sample_family(&FixtureFamilySpec::default_for(FixtureKind::Femur, 8, 5)).unwrap();
        (build_base(&fam.dataset).unwrap(), fam.landmarks, FixtureKind::Femur.recipe())
    }

    #[test]
    fn zero_alpha_measures_the_mean() {
        let (base, lm, recipe) = femur_base();
        let opts = PopulationOptions { zero_alpha: true };
        let pop = generate_population_with(&base, &recipe, &lm, 1, 3, opts).unwrap();
        let direct = run_recipe(&recipe, &lm.locate_in(base.mean()).unwrap()).unwrap();
        assert_eq!(pop.betas_raw.row(0).iter().copied().collect::<Vec<_>>(), direct.values());
        assert_eq!(pop.labels, direct.labels());
    }

    #[test]
    fn seeded_and_standardized() {
        let (base, lm, recipe) = femur_base();
        let a = generate_population(&base, &recipe, &lm, 50, 11).unwrap();
        let b = generate_population(&base, &recipe, &lm, 50, 11).unwrap();
        assert_eq!(a, b);
        for j in 0..a.labels.len() {
            let col = a.betas_std.column(j);
            assert!(col.mean().abs() < 1e-12);
            let var = col.iter().map(|v| v * v).sum::<f64>() / 49.0;
            assert!((var - 1.0).abs() < 1e-12);
            for i in 0..a.len() {
                let back = a.stats[j].standardize(a.betas_raw[(i, j)]);
                assert!((back - a.betas_std[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let (base, lm, recipe) = femur_base();
        let pop = generate_population(&base, &recipe, &lm, 20, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pop.csv");
        pop.save(&path).unwrap();
        assert!(dir.path().join("pop.stats.json").exists());
        assert_eq!(SyntheticPopulation::load(&path).unwrap(), pop);
    }

    #[test]
    fn topology_mismatch_is_rejected() {
        let (base, _, _) = femur_base();
        let lm = FixtureKind::Scapula.landmarks();
        let recipe = FixtureKind::Scapula.recipe();
        assert!(matches!(
            generate_population(&base, &recipe, &lm, 5, 1),
            Err(Error::TopologyMismatch { .. })
        ));
    }
}
