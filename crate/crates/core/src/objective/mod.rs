//! The training objective: symmetric InfoNCE over modality pairs, the
//! anchoring loss to the frozen teacher, dense-token subsampling with the
//! intra-scene negative mask, and exact reverse-mode gradients.

mod backward;
mod grad_check;

pub use backward::{backward, embed_batch, SceneFeatures};
pub use grad_check::{grad_check, GradCheckEntry, GradCheckReport};

use crate::error::{Error, Result};
use crate::model::EmbeddingSet;
use crate::numerics::{RngStream, Tensor2};

/// Hard clip range for the learned temperature. The floor guards the
/// division inside exp(x/τ); a zero lower bound would divide by zero.
pub const TAU_MIN: f64 = 1e-3;
pub const TAU_MAX: f64 = 100.0;

/// Modality indices used across batch-level structures.
pub const MOD_RGB: usize = 0;
pub const MOD_DEPTH: usize = 1;
pub const MOD_SEG: usize = 2;

/// The three aligned modality pairs:
/// (rgb, seg), (seg, depth), (depth, rgb).
pub const MODALITY_PAIRS: [(usize, usize); 3] = [
    (MOD_RGB, MOD_SEG),
    (MOD_SEG, MOD_DEPTH),
    (MOD_DEPTH, MOD_RGB),
];

pub const PAIR_LABELS: [&str; 3] = ["rgb-seg", "seg-depth", "depth-rgb"];

/// Objective hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub lambda_anchor: f64,
    pub tau_init: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    /// Dense tokens subsampled per image.
    pub n_dense: usize,
    /// Weight of the dense-token components; the pooled components get
    /// 1 − dense_weight. 0.5 averages them with equal weight.
    pub dense_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_anchor: 10.0,
            tau_init: 0.07,
            tau_min: TAU_MIN,
            tau_max: TAU_MAX,
            n_dense: 64,
            dense_weight: 0.5,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_anchor < 0.0 || !self.lambda_anchor.is_finite() {
            return Err(Error::ConfigInvalid {
                context: "lambda_anchor must be finite and >= 0".into(),
            });
        }
        if !(self.tau_min > 0.0 && self.tau_min < self.tau_max) {
            return Err(Error::ConfigInvalid {
                context: "temperature bounds must satisfy 0 < tau_min < tau_max".into(),
            });
        }
        if self.tau_init < self.tau_min || self.tau_init > self.tau_max {
            return Err(Error::ConfigInvalid {
                context: "tau_init outside the clip range".into(),
            });
        }
        if !(0.0..=1.0).contains(&self.dense_weight) {
            return Err(Error::ConfigInvalid {
                context: "dense_weight must lie in [0, 1]".into(),
            });
        }
        if self.n_dense < 1 {
            return Err(Error::ConfigInvalid {
                context: "n_dense must be >= 1".into(),
            });
        }
        Ok(())
    }
}

/// All loss components of one batch. `total` is assembled as
/// `align + lambda_anchor · anchor` so the decomposition identity is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub align: f64,
    pub anchor: f64,
    pub pooled_align: f64,
    pub dense_align: f64,
    pub pooled_anchor: f64,
    pub dense_anchor: f64,
    /// Symmetric InfoNCE per pair, `MODALITY_PAIRS` order.
    pub pooled_pairs: [f64; 3],
    pub dense_pairs: [f64; 3],
}

/// Gradient of the total loss: one slot per trainable parameter plus a
/// trailing d/dτ slot.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBuffer {
    data: Vec<f64>,
}

impl GradientBuffer {
    pub fn zeros(n_params: usize) -> Self {
        GradientBuffer {
            data: vec![0.0; n_params + 1],
        }
    }

    pub fn params(&self) -> &[f64] {
        &self.data[..self.data.len() - 1]
    }

    pub fn dtau(&self) -> f64 {
        *self.data.last().unwrap()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        let n = self.data.len() - 1;
        &mut self.data[..n]
    }

    pub(crate) fn add_dtau(&mut self, v: f64) {
        let n = self.data.len() - 1;
        self.data[n] += v;
    }
}

/// Per-scene embeddings of all three modalities plus the shared dense
/// token subsample.
#[derive(Debug, Clone)]
pub struct SceneEmbeddings {
    pub rgb: EmbeddingSet,
    pub depth: EmbeddingSet,
    pub seg: EmbeddingSet,
    pub dense_indices: Vec<usize>,
}

impl SceneEmbeddings {
    pub fn modality(&self, m: usize) -> &EmbeddingSet {
        match m {
            MOD_RGB => &self.rgb,
            MOD_DEPTH => &self.depth,
            _ => &self.seg,
        }
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(TAU_MIN..=TAU_MAX).contains(&tau) {
        return Err(Error::TauOutOfRange {
            tau,
            min: TAU_MIN,
            max: TAU_MAX,
        });
    }
    Ok(())
}

/// Stable log-sum-exp with the max shift, left-to-right accumulation.
fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for v in values.clone() {
        max = max.max(v);
    }
    let mut sum = 0.0;
    for v in values {
        sum += (v - max).exp();
    }
    max + sum.ln()
}

/// One-directional InfoNCE: the positive for row i of `h1` is row i of
/// `h2`; every other row of `h2` is a negative. Rows must be unit-norm.
pub fn info_nce(h1: &Tensor2, h2: &Tensor2, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    if h1.rows() != h2.rows() || h1.cols() != h2.cols() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "info_nce: {}x{} vs {}x{}",
                h1.rows(),
                h1.cols(),
                h2.rows(),
                h2.cols()
            ),
        });
    }
    let n = h1.rows();
    if n < 2 {
        return Err(Error::BatchTooSmall { got: n });
    }
    let sims = h1.matmul_nt(h2)?;
    let mut loss = 0.0;
    for i in 0..n {
        let logits = sims.row(i).iter().map(|s| s / tau);
        let lse = log_sum_exp(logits);
        loss += lse - sims.get(i, i) / tau;
    }
    Ok(loss / n as f64)
}

/// Mean of both InfoNCE directions.
pub fn symmetric_info_nce(h1: &Tensor2, h2: &Tensor2, tau: f64) -> Result<f64> {
    Ok((info_nce(h1, h2, tau)? + info_nce(h2, h1, tau)?) / 2.0)
}

/// Mean symmetric InfoNCE over the three modality pairs.
pub fn align_loss(h_rgb: &Tensor2, h_seg: &Tensor2, h_depth: &Tensor2, tau: f64) -> Result<f64> {
    let by_mod = [h_rgb, h_depth, h_seg];
    let mut sum = 0.0;
    for (a, b) in MODALITY_PAIRS {
        sum += symmetric_info_nce(by_mod[a], by_mod[b], tau)?;
    }
    Ok(sum / 3.0)
}

/// Cosine-distance distillation to the teacher, computed as half the
/// squared distance of the unit rows. Algebraically 1 − cosine, and
/// exactly zero for bit-identical rows.
pub fn anchor_loss(h_student: &Tensor2, h_teacher: &Tensor2) -> Result<f64> {
    if h_student.rows() != h_teacher.rows() || h_student.cols() != h_teacher.cols() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "anchor: {}x{} vs {}x{}",
                h_student.rows(),
                h_student.cols(),
                h_teacher.rows(),
                h_teacher.cols()
            ),
        });
    }
    let n = h_student.rows();
    let mut sum = 0.0;
    for i in 0..n {
        let mut d2 = 0.0;
        for (a, b) in h_student.row(i).iter().zip(h_teacher.row(i)) {
            d2 += (a - b) * (a - b);
        }
        sum += 0.5 * d2;
    }
    Ok(sum / n as f64)
}

/// Distinct dense-token indices, uniform without replacement. The same
/// list is applied to all three modalities of a scene so positives
/// correspond spatially.
pub fn sample_dense_indices(
    rng: &mut RngStream,
    tokens: usize,
    n_dense: usize,
) -> Result<Vec<usize>> {
    if n_dense > tokens {
        return Err(Error::TooFewTokens {
            available: tokens,
            requested: n_dense,
        });
    }
    Ok(rng.sample_distinct(tokens, n_dense))
}

/// Directed InfoNCE over stacked sampled tokens (rows scene-major), where
/// the denominator for an anchor keeps only its positive and the tokens of
/// other scenes. `rows_per_scene` fixes the scene grouping.
pub(crate) fn masked_dense_nce(
    h1: &Tensor2,
    h2: &Tensor2,
    rows_per_scene: usize,
    tau: f64,
) -> Result<f64> {
    check_tau(tau)?;
    if h1.rows() != h2.rows() || h1.cols() != h2.cols() {
        return Err(Error::DimensionMismatch {
            context: "masked dense InfoNCE operands disagree".into(),
        });
    }
    debug_assert!(h1.rows().is_multiple_of(rows_per_scene));
    let total = h1.rows();
    let sims = h1.matmul_nt(h2)?;
    let mut loss = 0.0;
    for a in 0..total {
        let scene = a / rows_per_scene;
        let row = sims.row(a);
        let logits = row.iter().enumerate().filter_map(|(j, s)| {
            if j == a || j / rows_per_scene != scene {
                Some(s / tau)
            } else {
                None
            }
        });
        let lse = log_sum_exp(logits);
        loss += lse - row[a] / tau;
    }
    Ok(loss / total as f64)
}

/// Symmetric masked dense InfoNCE averaged over the three modality pairs.
/// `dense[i][m]` holds scene i's full dense student rows for modality m
/// (unit rows); `indices[i]` selects the subsample.
pub fn dense_align_loss(
    dense: &[[&Tensor2; 3]],
    indices: &[Vec<usize>],
    tau: f64,
) -> Result<f64> {
    let stacked = stack_sampled(dense, indices)?;
    let n = indices.first().map_or(0, Vec::len);
    let mut sum = 0.0;
    for (a, b) in MODALITY_PAIRS {
        let fwd = masked_dense_nce(&stacked[a], &stacked[b], n, tau)?;
        let bwd = masked_dense_nce(&stacked[b], &stacked[a], n, tau)?;
        sum += (fwd + bwd) / 2.0;
    }
    Ok(sum / 3.0)
}

/// Select and stack sampled rows per modality, scene-major.
pub(crate) fn stack_sampled(
    dense: &[[&Tensor2; 3]],
    indices: &[Vec<usize>],
) -> Result<[Tensor2; 3]> {
    if dense.is_empty() || dense.len() != indices.len() {
        return Err(Error::DimensionMismatch {
            context: "dense batch and index batch disagree".into(),
        });
    }
    let n = indices[0].len();
    if indices.iter().any(|idx| idx.len() != n) {
        return Err(Error::DimensionMismatch {
            context: "every scene must sample the same number of dense tokens".into(),
        });
    }
    let dim = dense[0][0].cols();
    let mut out = Vec::with_capacity(3);
    for m in 0..3 {
        let mut rows = Vec::with_capacity(dense.len() * n * dim);
        for (scene, idx) in dense.iter().zip(indices) {
            let picked = scene[m].select_rows(idx)?;
            rows.extend_from_slice(picked.data());
        }
        out.push(Tensor2::from_vec(dense.len() * n, dim, rows)?);
    }
    Ok([out.remove(0), out.remove(0), out.remove(0)])
}

/// Assemble the full objective for one batch of embedded scenes.
pub fn total_loss(
    batch: &[SceneEmbeddings],
    tau: f64,
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    cfg.validate()?;
    check_tau(tau)?;
    if batch.is_empty() {
        return Err(Error::BatchTooSmall { got: 0 });
    }
    let n = batch.len();
    let dim = batch[0].rgb.dense_student.cols();

    // Pooled student / teacher matrices per modality, one scene per row.
    let mut pooled_s = Vec::with_capacity(3);
    let mut pooled_t = Vec::with_capacity(3);
    for m in 0..3 {
        let mut s = Vec::with_capacity(n * dim);
        let mut t = Vec::with_capacity(n * dim);
        for scene in batch {
            s.extend_from_slice(&scene.modality(m).pooled_student);
            t.extend_from_slice(&scene.modality(m).pooled_teacher);
        }
        pooled_s.push(Tensor2::from_vec(n, dim, s)?);
        pooled_t.push(Tensor2::from_vec(n, dim, t)?);
    }

    let mut pooled_pairs = [0.0; 3];
    for (p, (a, b)) in MODALITY_PAIRS.iter().enumerate() {
        pooled_pairs[p] = symmetric_info_nce(&pooled_s[*a], &pooled_s[*b], tau)?;
    }
    let pooled_align = (pooled_pairs[0] + pooled_pairs[1] + pooled_pairs[2]) / 3.0;

    let mut pooled_anchor = 0.0;
    for m in 0..3 {
        pooled_anchor += anchor_loss(&pooled_s[m], &pooled_t[m])?;
    }
    pooled_anchor /= 3.0;

    // Dense components over the sampled tokens.
    let dense_refs: Vec<[&Tensor2; 3]> = batch
        .iter()
        .map(|s| {
            [
                &s.rgb.dense_student,
                &s.depth.dense_student,
                &s.seg.dense_student,
            ]
        })
        .collect();
    let indices: Vec<Vec<usize>> = batch.iter().map(|s| s.dense_indices.clone()).collect();
    let stacked_s = stack_sampled(&dense_refs, &indices)?;
    let teacher_refs: Vec<[&Tensor2; 3]> = batch
        .iter()
        .map(|s| {
            [
                &s.rgb.dense_teacher,
                &s.depth.dense_teacher,
                &s.seg.dense_teacher,
            ]
        })
        .collect();
    let stacked_t = stack_sampled(&teacher_refs, &indices)?;
    let per_scene = indices[0].len();

    let mut dense_pairs = [0.0; 3];
    for (p, (a, b)) in MODALITY_PAIRS.iter().enumerate() {
        let fwd = masked_dense_nce(&stacked_s[*a], &stacked_s[*b], per_scene, tau)?;
        let bwd = masked_dense_nce(&stacked_s[*b], &stacked_s[*a], per_scene, tau)?;
        dense_pairs[p] = (fwd + bwd) / 2.0;
    }
    let dense_align = (dense_pairs[0] + dense_pairs[1] + dense_pairs[2]) / 3.0;

    let mut dense_anchor = 0.0;
    for m in 0..3 {
        dense_anchor += anchor_loss(&stacked_s[m], &stacked_t[m])?;
    }
    dense_anchor /= 3.0;

    let wd = cfg.dense_weight;
    let wp = 1.0 - wd;
    let align = wp * pooled_align + wd * dense_align;
    let anchor = wp * pooled_anchor + wd * dense_anchor;
    Ok(LossBreakdown {
        total: align + cfg.lambda_anchor * anchor,
        align,
        anchor,
        pooled_align,
        dense_align,
        pooled_anchor,
        dense_anchor,
        pooled_pairs,
        dense_pairs,
    })
}

#[cfg(test)]
mod tests;
