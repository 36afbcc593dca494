//! Thin singular value decomposition.
//!
//! nalgebra's SVD returns factors that do not reproduce the input when two
//! singular values nearly coincide, so decompositions go through faer.

use faer::Mat;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `a = u diag(s) v_t` with `s` descending; `k = min(rows, cols)`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

pub fn svd(a: &DMatrix<f64>) -> Result<Svd> {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("svd", "empty matrix"));
    }
    if !a.iter().all(|x| x.is_finite()) {
        return Err(Error::invalid("svd", "non-finite entry"));
    }
    let m = Mat::<f64>::from_fn(rows, cols, |i, j| a[(i, j)]);
    let f = m
        .thin_svd()
        .map_err(|e| Error::Degenerate(format!("svd did not converge: {e:?}")))?;
    let k = rows.min(cols);
    let (u, s, v) = (f.U(), f.S().column_vector(), f.V());
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| s[y].total_cmp(&s[x]));
    Ok(Svd {
        u: DMatrix::from_fn(rows, k, |i, j| u[(i, order[j])]),
        s: DVector::from_fn(k, |j, _| s[order[j]]),
        v_t: DMatrix::from_fn(k, cols, |i, j| v[(j, order[i])]),
    })
}

impl Svd {
    pub fn smax(&self) -> f64 {
        self.s[0]
    }

    pub fn smin(&self) -> f64 {
        self.s[self.s.len() - 1]
    }

    /// Least-squares solution `V diag(1/s) U^T b`; callers check the
    /// conditioning first.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let inv = DMatrix::from_diagonal(&self.s.map(|x| 1.0 / x));
        self.v_t.transpose() * inv * (self.u.transpose() * b)
    }
}
