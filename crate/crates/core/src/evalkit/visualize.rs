//! PCA feature visualization: one shared 3-component basis across the
//! modalities, shared min/max scaling, token grids rendered as RGB.

use crate::error::{Error, Result};
use crate::imaging::ImageRGB;
use crate::numerics::{pca_top_k, Tensor2};

const EIGENVALUE_FLOOR: f64 = 1e-12;

/// Project each modality's dense tokens onto the top three shared
/// principal components and render them as nearest-upscaled images.
///
/// The PCA basis is fit on the concatenation of all three modalities'
/// tokens; each component is min-max scaled with the min/max shared
/// across modalities so colors are comparable between the images.
/// Components with near-zero eigenvalue render as zero channels.
pub fn pca_visualize(
    dense: &[&Tensor2; 3],
    grid_h: usize,
    grid_w: usize,
    scale: usize,
) -> Result<[ImageRGB; 3]> {
    let tokens = grid_h * grid_w;
    if tokens == 0 || scale == 0 {
        return Err(Error::ConfigInvalid {
            context: "grid dimensions and scale must be >= 1".into(),
        });
    }
    let dim = dense[0].cols();
    for m in dense {
        if m.rows() != tokens || m.cols() != dim {
            return Err(Error::ShapeMismatch {
                context: format!(
                    "pca_visualize: expected {tokens}x{dim} tokens, got {}x{}",
                    m.rows(),
                    m.cols()
                ),
            });
        }
    }

    // Fit one basis on all modalities' tokens.
    let mut all = Vec::with_capacity(3 * tokens * dim);
    for m in dense {
        all.extend_from_slice(m.data());
    }
    let concat = Tensor2::from_vec(3 * tokens, dim, all)?;
    let k = 3.min(dim).min(3 * tokens);
    let pca = pca_top_k(&concat, k)?;

    // Per-modality projections onto the shared basis.
    let mut projections = Vec::with_capacity(3);
    for m in dense {
        let mut centered = (*m).clone();
        for i in 0..tokens {
            for (v, mu) in centered.row_mut(i).iter_mut().zip(&pca.mean) {
                *v -= mu;
            }
        }
        projections.push(centered.matmul_nt(&pca.components)?);
    }

    // Shared min/max per component across the three modalities.
    let mut lo = vec![f64::INFINITY; k];
    let mut hi = vec![f64::NEG_INFINITY; k];
    for proj in &projections {
        for i in 0..tokens {
            for (c, &v) in proj.row(i).iter().enumerate() {
                lo[c] = lo[c].min(v);
                hi[c] = hi[c].max(v);
            }
        }
    }

    let mut out = Vec::with_capacity(3);
    for proj in &projections {
        let mut img = ImageRGB::new(grid_h, grid_w);
        for gy in 0..grid_h {
            for gx in 0..grid_w {
                let t = gy * grid_w + gx;
                let mut px = [0.0f64; 3];
                for (c, slot) in px.iter_mut().enumerate().take(k) {
                    if pca.eigenvalues[c] < EIGENVALUE_FLOOR {
                        continue;
                    }
                    let span = hi[c] - lo[c];
                    if span < 1e-15 {
                        continue;
                    }
                    *slot = ((proj.get(t, c) - lo[c]) / span).clamp(0.0, 1.0);
                }
                img.set(gy, gx, px);
            }
        }
        out.push(img.resize_nearest(grid_h * scale, grid_w * scale));
    }
    let c = out.pop().unwrap();
    let b = out.pop().unwrap();
    let a = out.pop().unwrap();
    Ok([a, b, c])
}
