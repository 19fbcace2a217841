//! Exact-token correspondence: percentage of tokens whose nearest neighbor
//! in the other view lands on exactly the matching grid position.

use crate::error::{Error, Result};
use crate::numerics::{l2_normalize_rows, Tensor2};
use serde::Serialize;

/// Correct-keypoint percentages at threshold zero, both directions plus
/// their mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PckReport {
    pub a_to_b: f64,
    pub b_to_a: f64,
    pub mean: f64,
}

fn directed_pck(sims: &Tensor2) -> f64 {
    let n = sims.rows();
    let mut correct = 0usize;
    for i in 0..n {
        let row = sims.row(i);
        let mut best = 0usize;
        for (j, &s) in row.iter().enumerate().skip(1) {
            if s > row[best] {
                best = j;
            }
        }
        if best == i {
            correct += 1;
        }
    }
    100.0 * correct as f64 / n as f64
}

/// Bidirectional PCK@0 between two pixel-aligned token grids: ground truth
/// is the identity correspondence, argmax ties break to the lowest index.
pub fn pck_at_zero(a: &Tensor2, b: &Tensor2) -> Result<PckReport> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::ShapeMismatch {
            context: format!(
                "pck: {}x{} vs {}x{}",
                a.rows(),
                a.cols(),
                b.rows(),
                b.cols()
            ),
        });
    }
    if a.rows() == 0 {
        return Err(Error::ShapeMismatch {
            context: "pck needs at least one token".into(),
        });
    }
    let an = l2_normalize_rows(a)?;
    let bn = l2_normalize_rows(b)?;
    let ab = an.matmul_nt(&bn)?;
    let ba = bn.matmul_nt(&an)?;
    let a_to_b = directed_pck(&ab);
    let b_to_a = directed_pck(&ba);
    Ok(PckReport {
        a_to_b,
        b_to_a,
        mean: (a_to_b + b_to_a) / 2.0,
    })
}
