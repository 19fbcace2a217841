//! Evaluation battery: directed cross-modal retrieval, alignment and
//! discernibility diagnostics, k-NN classification, exact-token
//! correspondence, and PCA feature visualization.

mod diagnostics;
mod knn;
mod pck;
mod visualize;

pub use diagnostics::{diagnostics, seeded_derangement, DiagnosticReport};
pub use knn::{knn_hard, knn_soft_vote, KnnSoftReport};
pub use pck::{pck_at_zero, PckReport};
pub use visualize::pca_visualize;

use crate::error::{Error, Result};
use crate::numerics::{l2_normalize_rows, Tensor2};
use serde::Serialize;

/// Evaluation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// Row-batch size for similarity computation.
    pub batch: usize,
    /// Tie threshold in the rank rule.
    pub tie_eps: f64,
    /// Soft-voting temperature.
    pub knn_tau: f64,
    /// k values swept by the soft-voting classifier.
    pub knn_ks: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            batch: 2048,
            tie_eps: 1e-6,
            knn_tau: 0.07,
            knn_ks: vec![5, 10, 20, 50, 100],
        }
    }
}

/// Modality names in index order.
pub const MODALITY_NAMES: [&str; 3] = ["rgb", "depth", "seg"];

/// The six ordered (source, target) modality pairs.
pub const DIRECTED_PAIRS: [(usize, usize); 6] = [(0, 1), (1, 0), (0, 2), (2, 0), (1, 2), (2, 1)];

/// Retrieval quality for one directed evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalMetrics {
    pub r_at_1: f64,
    pub r_at_5: f64,
    pub map: f64,
    pub med_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectedPairMetrics {
    pub source: String,
    pub target: String,
    #[serde(flatten)]
    pub metrics: RetrievalMetrics,
}

/// Per-pair metrics plus their six-pair arithmetic mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalReport {
    pub pairs: Vec<DirectedPairMetrics>,
    pub average: RetrievalMetrics,
}

impl RetrievalReport {
    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<14} {:>7} {:>7} {:>7} {:>7}\n",
            "pair", "R@1", "R@5", "mAP", "MedR"
        ));
        for p in &self.pairs {
            out.push_str(&format!(
                "{:<14} {:>7.1} {:>7.1} {:>7.3} {:>7.2}\n",
                format!("{}->{}", p.source, p.target),
                p.metrics.r_at_1,
                p.metrics.r_at_5,
                p.metrics.map,
                p.metrics.med_r
            ));
        }
        out.push_str(&format!(
            "{:<14} {:>7.1} {:>7.1} {:>7.3} {:>7.2}\n",
            "average",
            self.average.r_at_1,
            self.average.r_at_5,
            self.average.map,
            self.average.med_r
        ));
        out
    }
}

/// Rank of the ground-truth item: the count of gallery scores greater than
/// or equal to the truth's score minus `eps`. The truth itself counts, so
/// the best rank is 1.
pub fn rank_of_truth(sim_row: &[f64], truth_index: usize, eps: f64) -> Result<usize> {
    if truth_index >= sim_row.len() {
        return Err(Error::IndexOutOfRange {
            index: truth_index,
            len: sim_row.len(),
        });
    }
    let threshold = sim_row[truth_index] - eps;
    Ok(sim_row.iter().filter(|&&s| s >= threshold).count())
}

fn metrics_from_ranks(ranks: &[usize]) -> RetrievalMetrics {
    let n = ranks.len() as f64;
    let r_at_1 = 100.0 * ranks.iter().filter(|&&r| r <= 1).count() as f64 / n;
    let r_at_5 = 100.0 * ranks.iter().filter(|&&r| r <= 5).count() as f64 / n;
    let map = ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n;
    let mut sorted = ranks.to_vec();
    sorted.sort_unstable();
    let med_r = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2] as f64
    } else {
        let hi = sorted.len() / 2;
        (sorted[hi - 1] + sorted[hi]) as f64 / 2.0
    };
    RetrievalMetrics {
        r_at_1,
        r_at_5,
        map,
        med_r,
    }
}

/// One-to-one retrieval: query i's ground truth is gallery i. Rows are
/// L2-normalized internally; similarities run in row-batches of
/// `cfg.batch`, which cannot change the result.
pub fn retrieval_eval(
    query: &Tensor2,
    gallery: &Tensor2,
    cfg: &EvalConfig,
) -> Result<RetrievalMetrics> {
    if query.rows() != gallery.rows() || query.cols() != gallery.cols() {
        return Err(Error::ShapeMismatch {
            context: format!(
                "retrieval: query {}x{} vs gallery {}x{}",
                query.rows(),
                query.cols(),
                gallery.rows(),
                gallery.cols()
            ),
        });
    }
    if cfg.batch < 1 {
        return Err(Error::ConfigInvalid {
            context: "similarity batch must be >= 1".into(),
        });
    }
    let q = l2_normalize_rows(query)?;
    let g = l2_normalize_rows(gallery)?;
    let n = q.rows();
    let mut ranks = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let stop = (start + cfg.batch).min(n);
        let block = q.select_rows(&(start..stop).collect::<Vec<_>>())?;
        let sims = block.matmul_nt(&g)?;
        for (local, global) in (start..stop).enumerate() {
            ranks.push(rank_of_truth(sims.row(local), global, cfg.tie_eps)?);
        }
        start = stop;
    }
    Ok(metrics_from_ranks(&ranks))
}

/// Retrieval over all six ordered modality pairs plus their average.
pub fn directed_pair_average(
    features: &[Tensor2; 3],
    cfg: &EvalConfig,
) -> Result<RetrievalReport> {
    let mut pairs = Vec::with_capacity(6);
    let mut sums = [0.0f64; 4];
    for (src, dst) in DIRECTED_PAIRS {
        let m = retrieval_eval(&features[src], &features[dst], cfg)?;
        sums[0] += m.r_at_1;
        sums[1] += m.r_at_5;
        sums[2] += m.map;
        sums[3] += m.med_r;
        pairs.push(DirectedPairMetrics {
            source: MODALITY_NAMES[src].to_string(),
            target: MODALITY_NAMES[dst].to_string(),
            metrics: m,
        });
    }
    let average = RetrievalMetrics {
        r_at_1: sums[0] / 6.0,
        r_at_5: sums[1] / 6.0,
        map: sums[2] / 6.0,
        med_r: sums[3] / 6.0,
    };
    Ok(RetrievalReport { pairs, average })
}
