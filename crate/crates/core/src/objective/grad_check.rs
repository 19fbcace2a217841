//! Central finite-difference verification of the hand-written gradients.

use crate::error::Result;
use crate::model::EncoderStack;
use crate::objective::{backward, embed_batch, total_loss, LossConfig, SceneFeatures};

#[derive(Debug, Clone)]
pub struct GradCheckEntry {
    /// Parameter index; the last index is the τ slot.
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl GradCheckReport {
    /// Indices whose relative error exceeds the tolerance.
    pub fn failures(&self) -> Vec<usize> {
        self.entries
            .iter()
            .filter(|e| e.rel_error >= self.tolerance)
            .map(|e| e.index)
            .collect()
    }
}

fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Compare `backward` against central finite differences of the total
/// loss, over every trainable parameter and the temperature.
pub fn grad_check(
    stack: &EncoderStack,
    scenes: &[SceneFeatures],
    indices: &[Vec<usize>],
    tau: f64,
    cfg: &LossConfig,
    h: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let (_, grads) = backward(stack, scenes, indices, tau, cfg)?;

    let eval = |stack: &EncoderStack, tau: f64| -> Result<f64> {
        let batch = embed_batch(stack, scenes, indices)?;
        Ok(total_loss(&batch, tau, cfg)?.total)
    };

    let mut work = stack.clone();
    let base = stack.trainable_parameters();
    let mut entries = Vec::with_capacity(base.len() + 1);
    let mut max_rel = 0.0f64;

    let mut params = base.clone();
    for k in 0..base.len() {
        params[k] = base[k] + h;
        work.set_trainable_parameters(&params)?;
        let plus = eval(&work, tau)?;
        params[k] = base[k] - h;
        work.set_trainable_parameters(&params)?;
        let minus = eval(&work, tau)?;
        params[k] = base[k];

        let numeric = (plus - minus) / (2.0 * h);
        let analytic = grads.params()[k];
        let rel = rel_error(analytic, numeric);
        max_rel = max_rel.max(rel);
        entries.push(GradCheckEntry {
            index: k,
            analytic,
            numeric,
            rel_error: rel,
        });
    }
    work.set_trainable_parameters(&base)?;

    let plus = eval(&work, tau + h)?;
    let minus = eval(&work, tau - h)?;
    let numeric = (plus - minus) / (2.0 * h);
    let analytic = grads.dtau();
    let rel = rel_error(analytic, numeric);
    max_rel = max_rel.max(rel);
    entries.push(GradCheckEntry {
        index: base.len(),
        analytic,
        numeric,
        rel_error: rel,
    });

    Ok(GradCheckReport {
        entries,
        max_rel_error: max_rel,
        tolerance,
        pass: max_rel < tolerance,
    })
}
