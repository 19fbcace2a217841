//! Checkpoint file: config header plus named flat f64 parameter groups.
//! Round trips are bit-exact; loading rebuilds the stack from the stored
//! payloads, never from the seed.

use crate::error::{Error, Result};
use crate::model::{EncoderStack, Layer, ModelConfig};
use crate::numerics::Tensor2;
use std::fs;
use std::path::Path;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"OMNICKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained (or freshly initialized) model plus its learned temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub stack: EncoderStack,
    pub tau: f64,
}

fn push_group(out: &mut Vec<u8>, name: &str, values: &[f64]) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_bits().to_le_bytes());
    }
}

/// Named groups in serialization order.
fn groups(stack: &EncoderStack) -> Vec<(String, Vec<f64>)> {
    let mut out = vec![
        ("patch_proj.w".to_string(), stack.patch_proj_w.data().to_vec()),
        ("patch_proj.b".to_string(), stack.patch_proj_b.clone()),
        ("pos_enc".to_string(), stack.pos_enc.data().to_vec()),
    ];
    for (name, layers) in [
        ("frozen", &stack.frozen_blocks),
        ("teacher", &stack.teacher_head),
        ("student", &stack.student_head),
    ] {
        for (i, layer) in layers.iter().enumerate() {
            out.push((format!("{name}.{i}.w"), layer.w.data().to_vec()));
            out.push((format!("{name}.{i}.b"), layer.b.clone()));
        }
    }
    out
}

pub fn checkpoint_bytes(stack: &EncoderStack, tau: f64) -> Vec<u8> {
    let cfg = &stack.cfg;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(cfg.patch as u32).to_le_bytes());
    out.extend_from_slice(&(cfg.embed_dim as u32).to_le_bytes());
    out.extend_from_slice(&(cfg.frozen_layers as u32).to_le_bytes());
    out.extend_from_slice(&(cfg.adapter_layers as u32).to_le_bytes());
    out.push(cfg.adapter_on_top as u8);
    out.extend_from_slice(&cfg.seed.to_le_bytes());
    out.extend_from_slice(&tau.to_bits().to_le_bytes());

    let gs = groups(stack);
    out.extend_from_slice(&(gs.len() as u32).to_le_bytes());
    for (name, values) in &gs {
        push_group(&mut out, name, values);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::TruncatedPayload {
                expected: self.pos + n,
                got: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 8 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::MagicMismatch);
    }
    let mut r = Reader { bytes, pos: 8 };
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionUnsupported { got: version });
    }
    let cfg = ModelConfig {
        patch: r.u32()? as usize,
        embed_dim: r.u32()? as usize,
        frozen_layers: r.u32()? as usize,
        adapter_layers: r.u32()? as usize,
        adapter_on_top: {
            let flag = r.take(1)?[0];
            flag != 0
        },
        seed: r.u64()?,
    };
    let tau = r.f64()?;
    cfg.validate()?;

    let n_groups = r.u32()? as usize;
    let mut named: Vec<(String, Vec<f64>)> = Vec::with_capacity(n_groups);
    for _ in 0..n_groups {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec()).map_err(|_| {
            Error::MalformedHeader {
                context: "group name is not utf-8".into(),
            }
        })?;
        let n_values = r.u64()? as usize;
        let mut values = Vec::with_capacity(n_values);
        for _ in 0..n_values {
            values.push(r.f64()?);
        }
        named.push((name, values));
    }

    let d = cfg.embed_dim;
    let patch_dim = 3 * cfg.patch * cfg.patch;
    let find = |name: &str| -> Result<&Vec<f64>> {
        named
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v)
            .ok_or(Error::MalformedHeader {
                context: format!("missing parameter group {name}"),
            })
    };
    let tensor = |name: &str, rows: usize, cols: usize| -> Result<Tensor2> {
        Tensor2::from_vec(rows, cols, find(name)?.clone())
    };
    let layers = |prefix: &str, count: usize| -> Result<Vec<Layer>> {
        (0..count)
            .map(|i| {
                Ok(Layer {
                    w: tensor(&format!("{prefix}.{i}.w"), d, d)?,
                    b: find(&format!("{prefix}.{i}.b"))?.clone(),
                })
            })
            .collect()
    };

    let stack = EncoderStack {
        patch_proj_w: tensor("patch_proj.w", patch_dim, d)?,
        patch_proj_b: find("patch_proj.b")?.clone(),
        pos_enc: {
            let raw = find("pos_enc")?;
            Tensor2::from_vec(raw.len() / d, d, raw.clone())?
        },
        frozen_blocks: layers("frozen", cfg.frozen_layers)?,
        teacher_head: layers("teacher", cfg.adapter_layers)?,
        student_head: layers("student", cfg.adapter_layers)?,
        cfg,
    };
    Ok(Checkpoint { stack, tau })
}

pub fn write_checkpoint(path: &Path, stack: &EncoderStack, tau: f64) -> Result<()> {
    fs::write(path, checkpoint_bytes(stack, tau))?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    parse_checkpoint(&fs::read(path)?)
}
