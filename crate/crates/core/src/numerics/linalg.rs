//! Vector norms and the pairwise cosine-similarity kernel.

use crate::error::{Error, Result};
use crate::numerics::Tensor2;

pub const ZERO_NORM_EPS: f64 = 1e-12;

/// Left-to-right dot product; the fixed reduction order keeps results
/// bit-identical regardless of how callers partition work.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Scale `v` to unit Euclidean norm.
///
/// A vector whose norm is already 1 within 1e-12 is returned unchanged,
/// which makes the operation idempotent bit-for-bit: one division always
/// lands inside that tolerance at these dimensions.
pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let n = norm(v);
    if n < ZERO_NORM_EPS {
        return Err(Error::ZeroVector);
    }
    if (n - 1.0).abs() <= 1e-12 {
        return Ok(v.to_vec());
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Normalize every row of a matrix.
pub fn l2_normalize_rows(m: &Tensor2) -> Result<Tensor2> {
    let mut out = m.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let n = norm(row);
        if n < ZERO_NORM_EPS {
            return Err(Error::ZeroVector);
        }
        for v in row {
            *v /= n;
        }
    }
    Ok(out)
}

/// Entry (i, j) = cos(aᵢ, bⱼ). Rows need not be pre-normalized but must be
/// nonzero.
pub fn cosine_similarity_matrix(a: &Tensor2, b: &Tensor2) -> Result<Tensor2> {
    if a.cols() != b.cols() {
        return Err(Error::DimensionMismatch {
            context: format!("cosine: {} vs {} columns", a.cols(), b.cols()),
        });
    }
    let norms_a: Vec<f64> = (0..a.rows()).map(|i| norm(a.row(i))).collect();
    let norms_b: Vec<f64> = (0..b.rows()).map(|j| norm(b.row(j))).collect();
    if norms_a.iter().chain(&norms_b).any(|&n| n < ZERO_NORM_EPS) {
        return Err(Error::ZeroVector);
    }
    let mut out = Tensor2::zeros(a.rows(), b.rows());
    for (i, na) in norms_a.iter().enumerate() {
        for (j, nb) in norms_b.iter().enumerate() {
            out.set(i, j, dot(a.row(i), b.row(j)) / (na * nb));
        }
    }
    Ok(out)
}
