//! Reverse-mode gradients of the total objective with respect to every
//! student parameter and the temperature.
//!
//! The chain runs: student head layers → pre-normalization dense tokens →
//! (mean-pool + normalize) and (subsample + normalize) → InfoNCE / anchor
//! terms. Teacher values are constants. All reductions are fixed-order, so
//! a batch produces bit-identical gradients regardless of scheduling.

use crate::error::{Error, Result};
use crate::model::{EncoderStack, StudentTrace};
use crate::numerics::{dot, norm, Tensor2, ZERO_NORM_EPS};
use crate::objective::{
    GradientBuffer, LossBreakdown, LossConfig, SceneEmbeddings, MODALITY_PAIRS, TAU_MAX, TAU_MIN,
};

/// Frozen-backbone features of one scene, one T×D matrix per modality.
#[derive(Debug, Clone)]
pub struct SceneFeatures {
    pub rgb: Tensor2,
    pub depth: Tensor2,
    pub seg: Tensor2,
}

impl SceneFeatures {
    pub fn modality(&self, m: usize) -> &Tensor2 {
        match m {
            0 => &self.rgb,
            1 => &self.depth,
            _ => &self.seg,
        }
    }
}

/// Run both heads over a batch of frozen features.
pub fn embed_batch(
    stack: &EncoderStack,
    scenes: &[SceneFeatures],
    indices: &[Vec<usize>],
) -> Result<Vec<SceneEmbeddings>> {
    if scenes.len() != indices.len() {
        return Err(Error::DimensionMismatch {
            context: "scene batch and index batch disagree".into(),
        });
    }
    scenes
        .iter()
        .zip(indices)
        .map(|(scene, idx)| {
            Ok(SceneEmbeddings {
                rgb: stack.heads_forward(&scene.rgb)?,
                depth: stack.heads_forward(&scene.depth)?,
                seg: stack.heads_forward(&scene.seg)?,
                dense_indices: idx.clone(),
            })
        })
        .collect()
}

fn unit_with_norm(v: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = norm(v);
    if n < ZERO_NORM_EPS {
        return Err(Error::ZeroVector);
    }
    Ok((v.iter().map(|x| x / n).collect(), n))
}

/// Loss and raw gradients of one directed InfoNCE term.
///
/// `mask_rows_per_scene` switches on the intra-scene negative mask: the
/// denominator for anchor a keeps only a's positive and rows of other
/// scenes. Gradients carry the 1/N anchor average but no caller weight.
struct DirectedNce {
    loss: f64,
    d_a: Tensor2,
    d_b: Tensor2,
    d_tau: f64,
}

fn directed_nce_grad(
    a: &Tensor2,
    b: &Tensor2,
    tau: f64,
    mask_rows_per_scene: Option<usize>,
) -> Result<DirectedNce> {
    if !(TAU_MIN..=TAU_MAX).contains(&tau) {
        return Err(Error::TauOutOfRange {
            tau,
            min: TAU_MIN,
            max: TAU_MAX,
        });
    }
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::DimensionMismatch {
            context: "InfoNCE operands disagree".into(),
        });
    }
    let n = a.rows();
    if mask_rows_per_scene.is_none() && n < 2 {
        return Err(Error::BatchTooSmall { got: n });
    }
    let dim = a.cols();
    let sims = a.matmul_nt(b)?;
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut d_a = Tensor2::zeros(n, dim);
    let mut d_b = Tensor2::zeros(n, dim);
    let mut d_tau = 0.0;

    let allowed = |i: usize, j: usize| -> bool {
        match mask_rows_per_scene {
            None => true,
            Some(rps) => j == i || j / rps != i / rps,
        }
    };

    for i in 0..n {
        let row = sims.row(i);
        let mut max = f64::NEG_INFINITY;
        for (j, s) in row.iter().enumerate() {
            if allowed(i, j) {
                max = max.max(s / tau);
            }
        }
        let mut sum = 0.0;
        for (j, s) in row.iter().enumerate() {
            if allowed(i, j) {
                sum += (s / tau - max).exp();
            }
        }
        let lse = max + sum.ln();
        loss += lse - row[i] / tau;

        for (j, s) in row.iter().enumerate() {
            if !allowed(i, j) {
                continue;
            }
            let p = (s / tau - lse).exp();
            let coeff = (p - if j == i { 1.0 } else { 0.0 }) * inv_n;
            if coeff == 0.0 {
                continue;
            }
            let scale = coeff / tau;
            {
                let da_i = d_a.row_mut(i);
                for (dv, bv) in da_i.iter_mut().zip(b.row(j)) {
                    *dv += scale * bv;
                }
            }
            {
                let db_j = d_b.row_mut(j);
                for (dv, av) in db_j.iter_mut().zip(a.row(i)) {
                    *dv += scale * av;
                }
            }
            d_tau += coeff * (-s / (tau * tau));
        }
    }
    Ok(DirectedNce {
        loss: loss * inv_n,
        d_a,
        d_b,
        d_tau,
    })
}

/// Gradient of a normalized vector y = u/‖u‖ pulled back to u.
fn normalize_backward(y: &[f64], r: f64, g: &[f64]) -> Vec<f64> {
    let yg = dot(y, g);
    y.iter()
        .zip(g)
        .map(|(yi, gi)| (gi - yi * yg) / r)
        .collect()
}

/// Full forward + backward for one batch.
///
/// Returns the loss breakdown and the gradient of `total` with respect to
/// the flat student parameters plus the trailing d/dτ slot. τ itself is
/// optimized in log-space by the training loop, which also applies the
/// post-step clip.
pub fn backward(
    stack: &EncoderStack,
    scenes: &[SceneFeatures],
    indices: &[Vec<usize>],
    tau: f64,
    cfg: &LossConfig,
) -> Result<(LossBreakdown, GradientBuffer)> {
    cfg.validate()?;
    if scenes.len() < 2 {
        return Err(Error::BatchTooSmall { got: scenes.len() });
    }
    if scenes.len() != indices.len() {
        return Err(Error::DimensionMismatch {
            context: "scene batch and index batch disagree".into(),
        });
    }
    let b = scenes.len();
    let n_per_scene = indices[0].len();
    if indices.iter().any(|idx| idx.len() != n_per_scene) {
        return Err(Error::DimensionMismatch {
            context: "every scene must sample the same number of dense tokens".into(),
        });
    }
    let dim = stack.embed_dim();

    // Cached student forward and teacher constants, per scene and modality.
    let mut traces: Vec<[StudentTrace; 3]> = Vec::with_capacity(b);
    let mut pooled_s: Vec<Tensor2> = (0..3).map(|_| Tensor2::zeros(b, dim)).collect();
    let mut pooled_t: Vec<Tensor2> = (0..3).map(|_| Tensor2::zeros(b, dim)).collect();
    let mut pooled_norms = vec![[0.0f64; 3]; b];
    let mut dense_s: Vec<Tensor2> = (0..3)
        .map(|_| Tensor2::zeros(b * n_per_scene, dim))
        .collect();
    let mut dense_t: Vec<Tensor2> = (0..3)
        .map(|_| Tensor2::zeros(b * n_per_scene, dim))
        .collect();
    let mut dense_norms: Vec<Vec<[f64; 3]>> = vec![vec![[0.0; 3]; n_per_scene]; b];

    for (i, scene) in scenes.iter().enumerate() {
        let mut scene_traces = Vec::with_capacity(3);
        for m in 0..3 {
            let z = scene.modality(m);
            let trace = stack.student_trace(z)?;
            let teacher_pre = stack.teacher_pre_norm(z)?;
            let tokens = trace.output().rows();
            for &idx in &indices[i] {
                if idx >= tokens {
                    return Err(Error::IndexOutOfRange {
                        index: idx,
                        len: tokens,
                    });
                }
            }

            let (ps, pr) = unit_with_norm(&trace.output().mean_rows())?;
            let (pt, _) = unit_with_norm(&teacher_pre.mean_rows())?;
            pooled_s[m].row_mut(i).copy_from_slice(&ps);
            pooled_t[m].row_mut(i).copy_from_slice(&pt);
            pooled_norms[i][m] = pr;

            for (t, &idx) in indices[i].iter().enumerate() {
                let (ys, rs) = unit_with_norm(trace.output().row(idx))?;
                let (yt, _) = unit_with_norm(teacher_pre.row(idx))?;
                dense_s[m].row_mut(i * n_per_scene + t).copy_from_slice(&ys);
                dense_t[m].row_mut(i * n_per_scene + t).copy_from_slice(&yt);
                dense_norms[i][t][m] = rs;
            }
            scene_traces.push(trace);
        }
        let arr: [StudentTrace; 3] = scene_traces
            .try_into()
            .map_err(|_| Error::DimensionMismatch {
                context: "modality count".into(),
            })?;
        traces.push(arr);
    }

    let wd = cfg.dense_weight;
    let wp = 1.0 - wd;
    let lambda = cfg.lambda_anchor;

    // Gradients with respect to the normalized embeddings.
    let mut g_pooled: Vec<Tensor2> = (0..3).map(|_| Tensor2::zeros(b, dim)).collect();
    let mut g_dense: Vec<Tensor2> = (0..3)
        .map(|_| Tensor2::zeros(b * n_per_scene, dim))
        .collect();
    let mut grads = GradientBuffer::zeros(stack.n_trainable());

    // Pooled symmetric InfoNCE over the three pairs.
    let mut pooled_pairs = [0.0; 3];
    for (p, &(ma, mb)) in MODALITY_PAIRS.iter().enumerate() {
        let c = wp / 6.0; // (1/3 pairs) × (1/2 directions)
        let fwd = directed_nce_grad(&pooled_s[ma], &pooled_s[mb], tau, None)?;
        let bwd = directed_nce_grad(&pooled_s[mb], &pooled_s[ma], tau, None)?;
        pooled_pairs[p] = (fwd.loss + bwd.loss) / 2.0;
        for i in 0..b {
            for d in 0..dim {
                g_pooled[ma].add_at(i, d, c * (fwd.d_a.get(i, d) + bwd.d_b.get(i, d)));
                g_pooled[mb].add_at(i, d, c * (fwd.d_b.get(i, d) + bwd.d_a.get(i, d)));
            }
        }
        grads.add_dtau(c * (fwd.d_tau + bwd.d_tau));
    }
    let pooled_align = (pooled_pairs[0] + pooled_pairs[1] + pooled_pairs[2]) / 3.0;

    // Dense masked symmetric InfoNCE.
    let mut dense_pairs = [0.0; 3];
    for (p, &(ma, mb)) in MODALITY_PAIRS.iter().enumerate() {
        let c = wd / 6.0;
        let fwd = directed_nce_grad(&dense_s[ma], &dense_s[mb], tau, Some(n_per_scene))?;
        let bwd = directed_nce_grad(&dense_s[mb], &dense_s[ma], tau, Some(n_per_scene))?;
        dense_pairs[p] = (fwd.loss + bwd.loss) / 2.0;
        let rows = b * n_per_scene;
        for r in 0..rows {
            for d in 0..dim {
                g_dense[ma].add_at(r, d, c * (fwd.d_a.get(r, d) + bwd.d_b.get(r, d)));
                g_dense[mb].add_at(r, d, c * (fwd.d_b.get(r, d) + bwd.d_a.get(r, d)));
            }
        }
        grads.add_dtau(c * (fwd.d_tau + bwd.d_tau));
    }
    let dense_align = (dense_pairs[0] + dense_pairs[1] + dense_pairs[2]) / 3.0;

    // Anchor terms: loss is half squared distance of unit rows, so the raw
    // gradient per row is (student − teacher).
    let mut pooled_anchor = 0.0;
    for m in 0..3 {
        let mut acc = 0.0;
        let c = lambda * wp / 3.0 / b as f64;
        for i in 0..b {
            let mut d2 = 0.0;
            for d in 0..dim {
                let delta = pooled_s[m].get(i, d) - pooled_t[m].get(i, d);
                d2 += delta * delta;
                g_pooled[m].add_at(i, d, c * delta);
            }
            acc += 0.5 * d2;
        }
        pooled_anchor += acc / b as f64;
    }
    pooled_anchor /= 3.0;

    let mut dense_anchor = 0.0;
    let total_rows = b * n_per_scene;
    for m in 0..3 {
        let mut acc = 0.0;
        let c = lambda * wd / 3.0 / total_rows as f64;
        for r in 0..total_rows {
            let mut d2 = 0.0;
            for d in 0..dim {
                let delta = dense_s[m].get(r, d) - dense_t[m].get(r, d);
                d2 += delta * delta;
                g_dense[m].add_at(r, d, c * delta);
            }
            acc += 0.5 * d2;
        }
        dense_anchor += acc / total_rows as f64;
    }
    dense_anchor /= 3.0;

    // Pull gradients back through normalization, pooling, and the head.
    for i in 0..b {
        for m in 0..3 {
            let trace = &traces[i][m];
            let tokens = trace.output().rows();
            let mut g_h = Tensor2::zeros(tokens, dim);

            let g_p = g_pooled[m].row(i);
            if g_p.iter().any(|&v| v != 0.0) {
                let y = pooled_s[m].row(i);
                let g_u = normalize_backward(y, pooled_norms[i][m], g_p);
                let inv_t = 1.0 / tokens as f64;
                for t in 0..tokens {
                    for (dst, gu) in g_h.row_mut(t).iter_mut().zip(&g_u) {
                        *dst += gu * inv_t;
                    }
                }
            }

            for (t, &idx) in indices[i].iter().enumerate() {
                let g_row = g_dense[m].row(i * n_per_scene + t);
                if g_row.iter().all(|&v| v == 0.0) {
                    continue;
                }
                let y = dense_s[m].row(i * n_per_scene + t);
                let g_u = normalize_backward(y, dense_norms[i][t][m], g_row);
                for (dst, gu) in g_h.row_mut(idx).iter_mut().zip(&g_u) {
                    *dst += gu;
                }
            }

            stack.student_backward(trace, &g_h, grads.params_mut())?;
        }
    }

    let align = wp * pooled_align + wd * dense_align;
    let anchor = wp * pooled_anchor + wd * dense_anchor;
    let breakdown = LossBreakdown {
        total: align + lambda * anchor,
        align,
        anchor,
        pooled_align,
        dense_align,
        pooled_anchor,
        dense_anchor,
        pooled_pairs,
        dense_pairs,
    };
    if !breakdown.total.is_finite() {
        return Err(Error::NonFiniteLoss { step: 0 });
    }
    Ok((breakdown, grads))
}
