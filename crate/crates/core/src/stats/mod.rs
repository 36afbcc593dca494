//! Descriptive statistics, Pearson correlation and the Shapiro-Wilk test.

mod shapiro;

use serde::{Deserialize, Serialize};

pub use shapiro::{shapiro_wilk, ShapiroWilk};

use crate::error::{Error, Result};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (divisor `n - 1`).
pub fn std_dev(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)).sqrt()
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::dimension("pearson input", x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(Error::InsufficientData {
            what: "pearson correlation".into(),
            needed: 3,
            got: x.len(),
        });
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("pearson correlation: zero-variance column".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalFit {
    pub mean: f64,
    pub std: f64,
}

impl NormalFit {
    pub fn pdf(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.std;
        (-0.5 * z * z).exp() / (self.std * (2.0 * std::f64::consts::PI).sqrt())
    }
}

pub fn normal_fit(x: &[f64]) -> Result<NormalFit> {
    if x.len() < 2 {
        return Err(Error::InsufficientData {
            what: "normal fit".into(),
            needed: 2,
            got: x.len(),
        });
    }
    Ok(NormalFit {
        mean: mean(x),
        std: std_dev(x),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` ascending edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Equal-width bins over `[min, max]`; the last bin is closed.
pub fn histogram(x: &[f64], bins: usize) -> Result<Histogram> {
    if x.is_empty() || bins == 0 {
        return Err(Error::invalid("histogram", "needs samples and at least one bin"));
    }
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0; bins];
    for &v in x {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Ok(Histogram { edges, counts })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_self_and_negation() {
        let x = [1.0, 4.0, 2.0, 8.0, 5.0];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(pearson(&x, &x).unwrap(), 1.0);
        assert_eq!(pearson(&x, &neg).unwrap(), -1.0);
        assert!(pearson(&x, &[1.0; 5]).is_err());
    }

    #[test]
    fn pearson_known_value() {
        // sxy = 8, sxx = syy = 10
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [2.0, 1.0, 4.0, 3.0, 5.0];
        assert!((pearson(&x, &y).unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn histogram_counts_everything() {
        let x = [0.0, 0.1, 0.5, 0.9, 1.0];
        let h = histogram(&x, 2).unwrap();
        assert_eq!(h.counts, vec![2, 3]);
        assert_eq!(h.edges, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn normal_fit_moments() {
        let f = normal_fit(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(f.mean, 2.0);
        assert_eq!(f.std, 1.0);
        assert!((f.pdf(2.0) - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-15);
    }
}
