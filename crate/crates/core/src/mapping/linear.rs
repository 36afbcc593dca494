//! Linear maps between shape coefficients and standardized measurements.

use nalgebra::DMatrix;

use super::population::SyntheticPopulation;
use crate::error::{Error, Result};
use crate::linalg::svd;

/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// `m x r` least-squares map `beta_std = Q alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct MappingQ {
    pub matrix: DMatrix<f64>,
    pub labels: Vec<String>,
    pub rank_ok: bool,
    /// Coefficient of determination of each label's regression.
    pub r_squared: Vec<f64>,
}

/// `m x r` map with orthonormal rows nearest to a [`MappingQ`].
#[derive(Debug, Clone, PartialEq)]
pub struct MappingK {
    pub matrix: DMatrix<f64>,
    pub labels: Vec<String>,
    /// The matrix it was derived from.
    pub source_q: DMatrix<f64>,
}

/// Smallest and largest singular value.
fn singular_range(q: &DMatrix<f64>) -> Result<(f64, f64)> {
    let f = svd(q)?;
    Ok((f.smin(), f.smax()))
}

/// Errors if `q` (m x r) does not have full row rank.
pub fn check_row_rank(q: &DMatrix<f64>, what: &str) -> Result<()> {
    if q.nrows() > q.ncols() {
        return Err(Error::RankDeficient {
            what: format!("{what}: {} rows exceed {} columns", q.nrows(), q.ncols()),
            value: 0.0,
            tolerance: RANK_TOLERANCE,
        });
    }
    let (lo, hi) = singular_range(q)?;
    if !(hi > 0.0) || lo <= RANK_TOLERANCE * hi {
        return Err(Error::RankDeficient {
            what: what.to_string(),
            value: lo,
            tolerance: RANK_TOLERANCE * hi,
        });
    }
    Ok(())
}

/// Ordinary least squares of every standardized measurement on all shape
/// coefficients, without intercept.
pub fn fit_mapping(pop: &SyntheticPopulation) -> Result<MappingQ> {
    let a = &pop.alphas;
    let b = &pop.betas_std;
    let (m_rows, r) = (a.nrows(), a.ncols());
    if m_rows <= r {
        return Err(Error::InsufficientData {
            what: format!("mapping regression on {r} coefficients"),
            needed: r + 1,
            got: m_rows,
        });
    }
    let f = svd(a)?;
    let (smax, smin) = (f.smax(), f.smin());
    if smin <= RANK_TOLERANCE * smax {
        return Err(Error::RankDeficient {
            what: "shape coefficient design matrix".into(),
            value: smin,
            tolerance: RANK_TOLERANCE * smax,
        });
    }
    let qt = f.solve(b);
    let matrix = qt.transpose();
    let fitted = a * &qt;
    let r_squared = (0..b.ncols())
        .map(|j| {
            let ss_res = (b.column(j) - fitted.column(j)).norm_squared();
            let ss_tot = b.column(j).norm_squared();
            1.0 - ss_res / ss_tot
        })
        .collect();
    let rank_ok = check_row_rank(&matrix, "Q").is_ok();
    Ok(MappingQ {
        matrix,
        labels: pop.labels.clone(),
        rank_ok,
        r_squared,
    })
}

/// `Q^+ = Q^T (Q Q^T)^-1`, evaluated through the SVD `Q = U S V^T` as
/// `V S^-1 U^T`.
pub fn pseudo_inverse(q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_row_rank(q, "Q")?;
    let f = svd(q)?;
    let inv = DMatrix::from_diagonal(&f.s.map(|s| 1.0 / s));
    Ok(f.v_t.transpose() * inv * f.u.transpose())
}

/// Nearest row-orthonormal matrix in Frobenius norm: `K = U V^T` from the
/// reduced SVD of `Q`.
pub fn orthogonal_procrustes(q: &MappingQ) -> Result<MappingK> {
    Ok(MappingK {
        matrix: procrustes_matrix(&q.matrix)?,
        labels: q.labels.clone(),
        source_q: q.matrix.clone(),
    })
}

pub fn procrustes_matrix(q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_row_rank(q, "Q")?;
    let f = svd(q)?;
    Ok(f.u * f.v_t)
}
