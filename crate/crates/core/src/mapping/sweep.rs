//! One-parameter sweeps re-measured through the landmark pipeline.
//!
//! An ANAT sweep of label `j` feeds `beta = t C e_j / C_jj` with
//! `C = Q Q^T`: the expected parameter vector of the training population
//! given `beta_j = t`. Other labels then follow their covariance with `j`.
//! An OC-ANAT sweep feeds `beta~ = t e_j` and reads the re-measured
//! parameters back in the orthogonalized space, `beta~ = K Q^+ beta`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::linear::pseudo_inverse;
use super::model::{AnatModel, ModelKind};
use crate::error::{Error, Result};
use crate::morphometry::measure;

/// Sweep half-range in standard deviations.
pub const SWEEP_RANGE: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub kind: ModelKind,
    pub param: String,
    pub labels: Vec<String>,
    /// Swept standardized value per step.
    pub t: Vec<f64>,
    /// Standardized input vector per step.
    pub input: Vec<Vec<f64>>,
    /// Re-measured physical values; `None` where the measurement failed.
    pub measured: Vec<Option<Vec<f64>>>,
    /// Re-measured values in the model's parameter space.
    pub readout: Vec<Option<Vec<f64>>>,
    /// Least-squares slope of each readout against `t`.
    pub slopes: Vec<f64>,
    /// Slopes of the plain standardized measurements.
    pub raw_slopes: Vec<f64>,
    /// Number of steps recorded as gaps.
    pub gaps: usize,
}

/// Slope of `y` on `x` with intercept.
fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn slopes(t: &[f64], rows: &[Option<Vec<f64>>], m: usize) -> Vec<f64> {
    let (x, ys): (Vec<f64>, Vec<&Vec<f64>>) = t
        .iter()
        .zip(rows)
        .filter_map(|(t, r)| r.as_ref().map(|r| (*t, r)))
        .unzip();
    (0..m)
        .map(|k| {
            let y: Vec<f64> = ys.iter().map(|r| r[k]).collect();
            slope(&x, &y)
        })
        .collect()
}

pub fn sweep(model: &AnatModel, param: &str, steps: usize) -> Result<SweepResult> {
    let (recipe, landmarks) = match (model.recipe(), model.landmarks()) {
        (Some(r), Some(l)) => (r, l),
        _ => {
            return Err(Error::invalid(
                "sweep",
                "model carries no measurement recipe and landmarks",
            ))
        }
    };
    if steps < 2 {
        return Err(Error::invalid("sweep", "needs at least 2 steps"));
    }
    let j = model.label_index(param)?;
    let m = model.labels().len();
    let direction: DVector<f64> = match model.kind() {
        ModelKind::Anat => {
            let q = model.mapping();
            let c = q * q.transpose();
            c.column(j) / c[(j, j)]
        }
        ModelKind::OcAnat => {
            let mut e = DVector::zeros(m);
            e[j] = 1.0;
            e
        }
    };
    let whiten: Option<DMatrix<f64>> = match (model.kind(), model.source_q()) {
        (ModelKind::OcAnat, Some(q)) => Some(model.mapping() * pseudo_inverse(q)?),
        _ => None,
    };
    let t: Vec<f64> = (0..steps)
        .map(|i| -SWEEP_RANGE + 2.0 * SWEEP_RANGE * i as f64 / (steps - 1) as f64)
        .collect();
    let indices = landmarks.indices();
    let stats = model.stats();

    let rows: Vec<(Vec<f64>, Option<(Vec<f64>, Vec<f64>)>)> = t
        .par_iter()
        .map(|&ti| {
            let beta = &direction * ti;
            let alpha = model.coefficients(&beta)?;
            let points = model.base().sample_points(&alpha, &indices)?;
            let measured = match measure(recipe, &landmarks.name_points(&points)) {
                Ok(mv) => mv,
                Err(e) if e.is_numerical() => {
                    log::warn!("sweep {param} at t = {ti}: {e}");
                    return Ok((beta.as_slice().to_vec(), None));
                }
                Err(e) => return Err(e),
            };
            let raw = model
                .labels()
                .iter()
                .map(|l| measured.get(l).ok_or_else(|| Error::UnknownLabel(l.clone())))
                .collect::<Result<Vec<f64>>>()?;
            let z: Vec<f64> = raw.iter().zip(stats).map(|(v, s)| s.standardize(*v)).collect();
            Ok((beta.as_slice().to_vec(), Some((raw, z))))
        })
        .collect::<Result<_>>()?;

    let mut input = Vec::with_capacity(steps);
    let mut measured = Vec::with_capacity(steps);
    let mut standardized = Vec::with_capacity(steps);
    let mut readout = Vec::with_capacity(steps);
    for (beta, out) in rows {
        input.push(beta);
        match out {
            Some((raw, z)) => {
                let r = match &whiten {
                    Some(w) => (w * DVector::from_column_slice(&z)).as_slice().to_vec(),
                    None => z.clone(),
                };
                measured.push(Some(raw));
                standardized.push(Some(z));
                readout.push(Some(r));
            }
            None => {
                measured.push(None);
                standardized.push(None);
                readout.push(None);
            }
        }
    }
    let gaps = readout.iter().filter(|r| r.is_none()).count();
    if steps - gaps < 2 {
        return Err(Error::Degenerate(format!(
            "sweep of {param}: only {} measurable steps",
            steps - gaps
        )));
    }
    Ok(SweepResult {
        kind: model.kind(),
        param: param.to_string(),
        labels: model.labels().to_vec(),
        slopes: slopes(&t, &readout, m),
        raw_slopes: slopes(&t, &standardized, m),
        t,
        input,
        measured,
        readout,
        gaps,
    })
}

impl SweepResult {
    /// Wide CSV: `t`, then the readout and physical value of every label.
    /// Gaps leave the fields empty.
    pub fn trajectories_csv(&self) -> String {
        let mut out = String::from("t");
        for l in &self.labels {
            let _ = write!(out, ",{l}_readout,{l}_measured");
        }
        out.push('\n');
        for (i, t) in self.t.iter().enumerate() {
            let _ = write!(out, "{t:.16e}");
            for k in 0..self.labels.len() {
                match (&self.readout[i], &self.measured[i]) {
                    (Some(r), Some(v)) => {
                        let _ = write!(out, ",{:.16e},{:.16e}", r[k], v[k]);
                    }
                    _ => out.push_str(",,"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn slopes_csv(&self) -> String {
        let mut out = String::from("param,label,slope,raw_slope\n");
        for (k, l) in self.labels.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{l},{:.16e},{:.16e}",
                self.param, self.slopes[k], self.raw_slopes[k]
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_a_line() {
        let x = [-1.0, 0.0, 1.0, 2.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 0.5 * v).collect();
        assert!((slope(&x, &y) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn gaps_are_skipped() {
        let t = [0.0, 1.0, 2.0, 3.0];
        let rows = vec![Some(vec![0.0]), None, Some(vec![4.0]), Some(vec![6.0])];
        assert!((slopes(&t, &rows, 1)[0] - 2.0).abs() < 1e-12);
    }
}
