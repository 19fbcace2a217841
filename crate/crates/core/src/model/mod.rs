//! Encoder stack: frozen patchify + residual backbone, a frozen teacher
//! head, and a trainable student adapter initialized from the teacher.
//!
//! There is no attention at this scale; residual tanh-MLP blocks stand in
//! for transformer blocks. The mechanism under study — freeze early
//! layers, adapt late ones, anchor the student to the frozen teacher — is
//! architecture-agnostic, and these blocks keep the hand-written gradients
//! exactly checkable.

mod checkpoint;

pub use checkpoint::{
    checkpoint_bytes, parse_checkpoint, read_checkpoint, write_checkpoint, Checkpoint,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};

use crate::error::{Error, Result};
use crate::imaging::ImageTensor;
use crate::numerics::{l2_normalize_rows, norm, RngStream, Tensor2, ZERO_NORM_EPS};
use crate::util::hash_f64_slice;

/// Positional-encoding table size; bounds the token count per image.
pub const MAX_TOKENS: usize = 1024;

const MODEL_STREAM_TAG: u64 = 0x0DE1_0001;

/// Architecture settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub patch: usize,
    pub embed_dim: usize,
    /// Frozen residual blocks between patchify and the heads.
    pub frozen_layers: usize,
    /// Layers in each head (teacher and student).
    pub adapter_layers: usize,
    pub seed: u64,
    /// Train extra zero-initialized layers stacked on the teacher head
    /// instead of adapting a copy of it.
    pub adapter_on_top: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            patch: 8,
            embed_dim: 32,
            frozen_layers: 4,
            adapter_layers: 2,
            seed: 0,
            adapter_on_top: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch < 1 || self.embed_dim < 1 {
            return Err(Error::ConfigInvalid {
                context: "patch and embed_dim must be >= 1".into(),
            });
        }
        if self.frozen_layers < 1 || self.adapter_layers < 1 {
            return Err(Error::ConfigInvalid {
                context: "layer counts must be >= 1".into(),
            });
        }
        Ok(())
    }
}

/// One residual block: h ← tanh(h·W + b) + h.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: Tensor2,
    pub b: Vec<f64>,
}

/// The full parameter set. Only `student_head` ever changes after
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderStack {
    pub cfg: ModelConfig,
    pub patch_proj_w: Tensor2,
    pub patch_proj_b: Vec<f64>,
    pub pos_enc: Tensor2,
    pub frozen_blocks: Vec<Layer>,
    pub teacher_head: Vec<Layer>,
    pub student_head: Vec<Layer>,
}

/// Per-input embeddings, rows L2-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub dense_student: Tensor2,
    pub dense_teacher: Tensor2,
    pub pooled_student: Vec<f64>,
    pub pooled_teacher: Vec<f64>,
}

/// Cached forward pass through the trainable layers, for the backward pass.
#[derive(Debug, Clone)]
pub struct StudentTrace {
    /// Layer inputs; `[0]` feeds the first trainable layer and the last
    /// entry is the pre-normalization output.
    pub layer_inputs: Vec<Tensor2>,
    /// tanh(h·W + b) per layer.
    pub tanh_values: Vec<Tensor2>,
}

impl StudentTrace {
    pub fn output(&self) -> &Tensor2 {
        self.layer_inputs.last().expect("trace has layers")
    }
}

/// Sinusoidal table over short integer periods (2 to 17 tokens), centered
/// per dimension. Every dimension cycles within a handful of tokens, so
/// the table contributes almost no constant offset to pooled features at
/// any image size used here, while rows stay pairwise distinct.
fn sinusoidal_table(tokens: usize, dim: usize) -> Tensor2 {
    let mut pe = Tensor2::zeros(tokens, dim);
    let pairs = dim.div_ceil(2);
    for t in 0..tokens {
        for d in 0..dim {
            let pair = d / 2;
            let period = if pairs > 1 {
                2.0 + 15.0 * pair as f64 / (pairs - 1) as f64
            } else {
                2.0
            };
            let angle = t as f64 * std::f64::consts::TAU / period;
            pe.set(t, d, if d % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    for d in 0..dim {
        let mean: f64 = (0..tokens).map(|t| pe.get(t, d)).sum::<f64>() / tokens as f64;
        for t in 0..tokens {
            pe.set(t, d, pe.get(t, d) - mean);
        }
    }
    pe
}

fn gaussian_layer(rng: &mut RngStream, fan_in: usize, rows: usize, cols: usize) -> Layer {
    let std = 1.0 / (fan_in as f64).sqrt();
    let mut w = Tensor2::zeros(rows, cols);
    for v in w.data_mut() {
        *v = std * rng.next_gaussian();
    }
    let b = (0..cols).map(|_| std * rng.next_gaussian()).collect();
    Layer { w, b }
}

fn zero_layer(rows: usize, cols: usize) -> Layer {
    Layer {
        w: Tensor2::zeros(rows, cols),
        b: vec![0.0; cols],
    }
}

/// Build the stack from seeded Gaussian(0, 1/√fan_in) draws. The seeded
/// frozen weights stand in for a pre-trained backbone; the student head
/// starts as a bit-exact copy of the teacher head (or as zero-initialized
/// identity layers when `adapter_on_top` is set).
pub fn init_stack(cfg: &ModelConfig) -> Result<EncoderStack> {
    cfg.validate()?;
    let d = cfg.embed_dim;
    let patch_dim = 3 * cfg.patch * cfg.patch;
    let mut rng = RngStream::derived(cfg.seed, &[MODEL_STREAM_TAG]);

    let proj = gaussian_layer(&mut rng, patch_dim, patch_dim, d);
    let frozen_blocks: Vec<Layer> = (0..cfg.frozen_layers)
        .map(|_| gaussian_layer(&mut rng, d, d, d))
        .collect();
    let teacher_head: Vec<Layer> = (0..cfg.adapter_layers)
        .map(|_| gaussian_layer(&mut rng, d, d, d))
        .collect();
    let student_head = if cfg.adapter_on_top {
        (0..cfg.adapter_layers).map(|_| zero_layer(d, d)).collect()
    } else {
        teacher_head.clone()
    };

    Ok(EncoderStack {
        cfg: cfg.clone(),
        patch_proj_w: proj.w,
        patch_proj_b: proj.b,
        pos_enc: sinusoidal_table(MAX_TOKENS, d),
        frozen_blocks,
        teacher_head,
        student_head,
    })
}

fn apply_layer(input: &Tensor2, layer: &Layer) -> Result<Tensor2> {
    let mut pre = input.matmul(&layer.w)?;
    for i in 0..pre.rows() {
        for (v, b) in pre.row_mut(i).iter_mut().zip(&layer.b) {
            *v = (*v + b).tanh();
        }
    }
    for i in 0..pre.rows() {
        for (v, x) in pre.row_mut(i).iter_mut().zip(input.row(i)) {
            *v += x;
        }
    }
    Ok(pre)
}

fn apply_layers(input: &Tensor2, layers: &[Layer]) -> Result<Tensor2> {
    let mut h = input.clone();
    for layer in layers {
        h = apply_layer(&h, layer)?;
    }
    Ok(h)
}

fn unit(v: &[f64]) -> Result<Vec<f64>> {
    let n = norm(v);
    if n < ZERO_NORM_EPS {
        return Err(Error::ZeroVector);
    }
    Ok(v.iter().map(|x| x / n).collect())
}

impl EncoderStack {
    pub fn embed_dim(&self) -> usize {
        self.cfg.embed_dim
    }

    /// Patchify, project, add positional encoding, and run the frozen
    /// blocks. Never touches trainable parameters.
    pub fn frozen_forward(&self, img: &ImageTensor) -> Result<Tensor2> {
        let p = self.cfg.patch;
        if !img.height.is_multiple_of(p) || !img.width.is_multiple_of(p) {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "image {}x{} not divisible by patch {p}",
                    img.height, img.width
                ),
            });
        }
        let grid_h = img.height / p;
        let grid_w = img.width / p;
        let tokens = grid_h * grid_w;
        if tokens > MAX_TOKENS {
            return Err(Error::DimensionMismatch {
                context: format!("{tokens} tokens exceed the table size {MAX_TOKENS}"),
            });
        }
        let d = self.cfg.embed_dim;
        let patch_dim = 3 * p * p;

        let mut z = Tensor2::zeros(tokens, d);
        let mut patch_vec = vec![0.0; patch_dim];
        for gy in 0..grid_h {
            for gx in 0..grid_w {
                let t = gy * grid_w + gx;
                let mut k = 0;
                for dy in 0..p {
                    let y = gy * p + dy;
                    for dx in 0..p {
                        let x = gx * p + dx;
                        let base = (y * img.width + x) * 3;
                        patch_vec[k] = img.data[base];
                        patch_vec[k + 1] = img.data[base + 1];
                        patch_vec[k + 2] = img.data[base + 2];
                        k += 3;
                    }
                }
                for j in 0..d {
                    let mut acc = 0.0;
                    for (i, pv) in patch_vec.iter().enumerate() {
                        acc += pv * self.patch_proj_w.get(i, j);
                    }
                    z.set(t, j, acc + self.patch_proj_b[j] + self.pos_enc.get(t, j));
                }
            }
        }
        apply_layers(&z, &self.frozen_blocks)
    }

    /// Teacher-head output before row normalization.
    pub fn teacher_pre_norm(&self, z: &Tensor2) -> Result<Tensor2> {
        apply_layers(z, &self.teacher_head)
    }

    /// Student forward with cached activations for the backward pass.
    /// With `adapter_on_top`, the frozen teacher head runs first and only
    /// the on-top layers are traced.
    pub fn student_trace(&self, z: &Tensor2) -> Result<StudentTrace> {
        let first_input = if self.cfg.adapter_on_top {
            self.teacher_pre_norm(z)?
        } else {
            z.clone()
        };
        let mut layer_inputs = vec![first_input];
        let mut tanh_values = Vec::with_capacity(self.student_head.len());
        for layer in &self.student_head {
            let input = layer_inputs.last().unwrap();
            let mut pre = input.matmul(&layer.w)?;
            for i in 0..pre.rows() {
                for (v, b) in pre.row_mut(i).iter_mut().zip(&layer.b) {
                    *v = (*v + b).tanh();
                }
            }
            let mut next = pre.clone();
            for i in 0..next.rows() {
                for (v, x) in next.row_mut(i).iter_mut().zip(input.row(i)) {
                    *v += x;
                }
            }
            tanh_values.push(pre);
            layer_inputs.push(next);
        }
        Ok(StudentTrace {
            layer_inputs,
            tanh_values,
        })
    }

    /// Accumulate d(loss)/d(student parameters) into `grad_buf` given
    /// d(loss)/d(pre-normalization output). Layout matches
    /// `trainable_parameters`.
    pub fn student_backward(
        &self,
        trace: &StudentTrace,
        grad_output: &Tensor2,
        grad_buf: &mut [f64],
    ) -> Result<()> {
        let d = self.cfg.embed_dim;
        let per_layer = d * d + d;
        if grad_buf.len() < self.student_head.len() * per_layer {
            return Err(Error::LengthMismatch {
                expected: self.student_head.len() * per_layer,
                got: grad_buf.len(),
            });
        }
        let mut g = grad_output.clone();
        for (l, layer) in self.student_head.iter().enumerate().rev() {
            let input = &trace.layer_inputs[l];
            let tanh_a = &trace.tanh_values[l];
            let rows = g.rows();

            // d_pre = g ⊙ (1 − tanh²(a))
            let mut d_pre = g.clone();
            for i in 0..rows {
                for (v, th) in d_pre.row_mut(i).iter_mut().zip(tanh_a.row(i)) {
                    *v *= 1.0 - th * th;
                }
            }

            let offset = l * per_layer;
            // dW[k][j] += Σ_t input[t][k] · d_pre[t][j]
            for t in 0..rows {
                let inp = input.row(t);
                let dp = d_pre.row(t);
                for (k, &ik) in inp.iter().enumerate() {
                    if ik == 0.0 {
                        continue;
                    }
                    let base = offset + k * d;
                    for (slot, dv) in grad_buf[base..base + d].iter_mut().zip(dp) {
                        *slot += ik * dv;
                    }
                }
            }
            // db[j] += Σ_t d_pre[t][j]
            for t in 0..rows {
                let dp = d_pre.row(t);
                for j in 0..d {
                    grad_buf[offset + d * d + j] += dp[j];
                }
            }
            // Through the residual: g_prev = d_pre · Wᵀ + g
            let mut g_prev = d_pre.matmul_nt(&layer.w)?;
            for i in 0..rows {
                for (v, old) in g_prev.row_mut(i).iter_mut().zip(g.row(i)) {
                    *v += old;
                }
            }
            g = g_prev;
        }
        Ok(())
    }

    /// Both heads plus pooling. The pooled token is the normalized mean of
    /// the pre-normalization dense outputs (GAP).
    pub fn heads_forward(&self, z: &Tensor2) -> Result<EmbeddingSet> {
        let teacher_pre = self.teacher_pre_norm(z)?;
        let trace = self.student_trace(z)?;
        let student_pre = trace.output();

        let pooled_teacher = unit(&teacher_pre.mean_rows())?;
        let pooled_student = unit(&student_pre.mean_rows())?;
        Ok(EmbeddingSet {
            dense_student: l2_normalize_rows(student_pre)?,
            dense_teacher: l2_normalize_rows(&teacher_pre)?,
            pooled_student,
            pooled_teacher,
        })
    }

    pub fn n_trainable(&self) -> usize {
        let d = self.cfg.embed_dim;
        self.student_head.len() * (d * d + d)
    }

    /// Student parameters as one flat vector: per layer W row-major, then b.
    pub fn trainable_parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_trainable());
        for layer in &self.student_head {
            out.extend_from_slice(layer.w.data());
            out.extend_from_slice(&layer.b);
        }
        out
    }

    /// Write a flat vector back into the student head.
    pub fn set_trainable_parameters(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_trainable() {
            return Err(Error::LengthMismatch {
                expected: self.n_trainable(),
                got: flat.len(),
            });
        }
        let d = self.cfg.embed_dim;
        let per_layer = d * d + d;
        for (l, layer) in self.student_head.iter_mut().enumerate() {
            let chunk = &flat[l * per_layer..(l + 1) * per_layer];
            layer.w.data_mut().copy_from_slice(&chunk[..d * d]);
            layer.b.copy_from_slice(&chunk[d * d..]);
        }
        Ok(())
    }

    /// Bit-level hash over every frozen parameter group.
    pub fn frozen_hash(&self) -> u64 {
        let mut acc: Vec<f64> = Vec::new();
        acc.extend_from_slice(self.patch_proj_w.data());
        acc.extend_from_slice(&self.patch_proj_b);
        acc.extend_from_slice(self.pos_enc.data());
        for layer in self.frozen_blocks.iter().chain(&self.teacher_head) {
            acc.extend_from_slice(layer.w.data());
            acc.extend_from_slice(&layer.b);
        }
        hash_f64_slice(&acc)
    }
}
