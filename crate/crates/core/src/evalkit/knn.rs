//! k-NN classification by cosine similarity: soft voting with a softmax
//! over neighbor similarities, and hard nearest-neighbor accuracy.

use crate::error::{Error, Result};
use crate::numerics::{l2_normalize_rows, Tensor2};
use serde::Serialize;

/// Soft-voting accuracy per swept k, plus the best.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KnnSoftReport {
    /// (k, top-1 accuracy in percent), in sweep order.
    pub per_k: Vec<(usize, f64)>,
    pub best_k: usize,
    pub best_accuracy: f64,
}

/// Neighbor order: descending similarity, ties broken by lowest index.
fn neighbor_order(sims: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..sims.len()).collect();
    order.sort_by(|&a, &b| {
        sims[b]
            .partial_cmp(&sims[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    order
}

/// Weighted soft voting: softmax(sim/τ) over the top-k neighbors, class
/// scores summed, argmax with ties to the lowest class id. Sweeps the
/// configured k values (those not exceeding the index size) and reports
/// the best top-1 accuracy.
pub fn knn_soft_vote(
    train: &Tensor2,
    train_labels: &[usize],
    query: &Tensor2,
    query_labels: &[usize],
    ks: &[usize],
    tau: f64,
) -> Result<KnnSoftReport> {
    if train.rows() == 0 {
        return Err(Error::EmptyIndex);
    }
    if train_labels.len() != train.rows() || query_labels.len() != query.rows() {
        return Err(Error::ShapeMismatch {
            context: "label count disagrees with feature count".into(),
        });
    }
    let n_classes = train_labels.iter().max().map_or(0, |m| m + 1);
    let t = l2_normalize_rows(train)?;
    let q = l2_normalize_rows(query)?;
    let sims = q.matmul_nt(&t)?;
    let orders: Vec<Vec<usize>> = (0..q.rows()).map(|i| neighbor_order(sims.row(i))).collect();

    let usable: Vec<usize> = ks.iter().cloned().filter(|&k| k >= 1 && k <= t.rows()).collect();
    if usable.is_empty() {
        return Err(Error::ConfigInvalid {
            context: format!("no usable k in sweep for an index of {} items", t.rows()),
        });
    }

    let mut per_k = Vec::with_capacity(usable.len());
    for &k in &usable {
        let mut correct = 0usize;
        for (qi, order) in orders.iter().enumerate() {
            let top = &order[..k];
            let row = sims.row(qi);
            let max_logit = top
                .iter()
                .map(|&j| row[j] / tau)
                .fold(f64::NEG_INFINITY, f64::max);
            let mut class_scores = vec![0.0f64; n_classes];
            for &j in top {
                let w = (row[j] / tau - max_logit).exp();
                class_scores[train_labels[j]] += w;
            }
            let mut best = 0usize;
            for c in 1..n_classes {
                if class_scores[c] > class_scores[best] {
                    best = c;
                }
            }
            if best == query_labels[qi] {
                correct += 1;
            }
        }
        per_k.push((k, 100.0 * correct as f64 / q.rows() as f64));
    }

    let (mut best_k, mut best_accuracy) = per_k[0];
    for &(k, acc) in &per_k[1..] {
        if acc > best_accuracy {
            best_k = k;
            best_accuracy = acc;
        }
    }
    Ok(KnnSoftReport {
        per_k,
        best_k,
        best_accuracy,
    })
}

/// Hard nearest-neighbor accuracy in percent. With `exclude_self`, the
/// query set must be the index set and position i skips candidate i.
pub fn knn_hard(
    index: &Tensor2,
    index_labels: &[usize],
    query: &Tensor2,
    query_labels: &[usize],
    exclude_self: bool,
) -> Result<f64> {
    if index.rows() == 0 {
        return Err(Error::EmptyIndex);
    }
    if exclude_self && index.rows() < 2 {
        return Err(Error::EmptyIndex);
    }
    if exclude_self && (index.rows() != query.rows()) {
        return Err(Error::ShapeMismatch {
            context: "self-exclusion requires query set == index set".into(),
        });
    }
    if index_labels.len() != index.rows() || query_labels.len() != query.rows() {
        return Err(Error::ShapeMismatch {
            context: "label count disagrees with feature count".into(),
        });
    }
    let ix = l2_normalize_rows(index)?;
    let q = l2_normalize_rows(query)?;
    let sims = q.matmul_nt(&ix)?;
    let mut correct = 0usize;
    for (i, qlabel) in query_labels.iter().enumerate() {
        let row = sims.row(i);
        let mut best: Option<usize> = None;
        for (j, &s) in row.iter().enumerate() {
            if exclude_self && j == i {
                continue;
            }
            best = match best {
                None => Some(j),
                Some(b) if s > row[b] => Some(j),
                Some(b) => Some(b),
            };
        }
        if index_labels[best.expect("nonempty index")] == *qlabel {
            correct += 1;
        }
    }
    Ok(100.0 * correct as f64 / q.rows() as f64)
}
