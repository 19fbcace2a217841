//! Natural colorization: re-render a scalar structural map with a palette
//! of mean RGB colors aggregated per intensity bin.
//!
//! The palette makes colorized depth/segmentation maps share the chromatic
//! distribution of the paired RGB image, denying any shortcut through
//! low-level color statistics.

use crate::error::{Error, Result};
use crate::imaging::{ImageRGB, ScalarMap};

pub const DEFAULT_BINS: usize = 64;
pub const DEFAULT_KERNEL: usize = 5;
pub const DEFAULT_EPS: f64 = 1e-6;

/// One palette slot: raw accumulators plus the smoothed mean color.
#[derive(Debug, Clone, PartialEq)]
pub struct PaletteBin {
    /// Per-channel color sum over pixels that landed in this bin.
    pub sum: [f64; 3],
    /// Pixel count of this bin.
    pub count: f64,
    /// Smoothed mean color: S̃ / (Ñ + eps).
    pub color: [f64; 3],
}

/// Scene-specific color palette over B intensity bins.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorPalette {
    pub bins: Vec<PaletteBin>,
    pub kernel: usize,
    pub eps: f64,
}

fn check_shapes(raw: &ScalarMap, rgb: &ImageRGB) -> Result<()> {
    if raw.height() != rgb.height() || raw.width() != rgb.width() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "colorize: raw {}x{} vs rgb {}x{}",
                raw.height(),
                raw.width(),
                rgb.height(),
                rgb.width()
            ),
        });
    }
    Ok(())
}

fn check_params(b: usize, k: usize) -> Result<()> {
    if b < 1 {
        return Err(Error::ConfigInvalid {
            context: "palette needs at least one bin".into(),
        });
    }
    if k < 1 {
        return Err(Error::ConfigInvalid {
            context: "smoothing kernel must have size >= 1".into(),
        });
    }
    Ok(())
}

/// Bin index per pixel: normalize to [0,1) by (x−min)/(max−min+eps), then
/// clip(⌊x·B⌋, 0, B−1). A constant map normalizes to 0 everywhere (the eps
/// denominator), putting every pixel in bin 0.
fn bin_indices(raw: &ScalarMap, b: usize, eps: f64) -> Vec<usize> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in raw.values() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let denom = hi - lo + eps;
    raw.values()
        .iter()
        .map(|&v| {
            let norm = (v - lo) / denom;
            ((norm * b as f64).floor() as i64).clamp(0, b as i64 - 1) as usize
        })
        .collect()
}

fn palette_from_bins(
    bin_of: &[usize],
    rgb: &ImageRGB,
    b: usize,
    k: usize,
    eps: f64,
) -> ColorPalette {
    let mut sums = vec![[0.0f64; 3]; b];
    let mut counts = vec![0.0f64; b];
    for (&bin, px) in bin_of.iter().zip(rgb.pixels().chunks_exact(3)) {
        for ch in 0..3 {
            sums[bin][ch] += px[ch];
        }
        counts[bin] += 1.0;
    }

    // All-ones kernel with zero padding at the ends of the bin axis.
    let half = (k - 1) / 2;
    let mut bins = Vec::with_capacity(b);
    for center in 0..b {
        let mut s = [0.0f64; 3];
        let mut n = 0.0f64;
        for j in 0..k {
            let src = center as i64 + j as i64 - half as i64;
            if src < 0 || src >= b as i64 {
                continue;
            }
            let src = src as usize;
            for (acc, v) in s.iter_mut().zip(&sums[src]) {
                *acc += v;
            }
            n += counts[src];
        }
        let color = [s[0] / (n + eps), s[1] / (n + eps), s[2] / (n + eps)];
        bins.push(PaletteBin {
            sum: sums[center],
            count: counts[center],
            color,
        });
    }
    ColorPalette {
        bins,
        kernel: k,
        eps,
    }
}

/// Accumulate and smooth the palette for a (raw, rgb) pair.
pub fn build_palette(
    raw: &ScalarMap,
    rgb: &ImageRGB,
    b: usize,
    k: usize,
    eps: f64,
) -> Result<ColorPalette> {
    check_shapes(raw, rgb)?;
    check_params(b, k)?;
    let bin_of = bin_indices(raw, b, eps);
    Ok(palette_from_bins(&bin_of, rgb, b, k, eps))
}

/// Re-render `raw` through the palette built from `rgb`.
pub fn natural_colorize(
    raw: &ScalarMap,
    rgb: &ImageRGB,
    b: usize,
    k: usize,
    eps: f64,
) -> Result<ImageRGB> {
    check_shapes(raw, rgb)?;
    check_params(b, k)?;
    let bin_of = bin_indices(raw, b, eps);
    let palette = palette_from_bins(&bin_of, rgb, b, k, eps);
    let mut out = ImageRGB::new(raw.height(), raw.width());
    for (i, &bin) in bin_of.iter().enumerate() {
        let c = palette.bins[bin].color;
        out.pixels_mut()[i * 3] = c[0].clamp(0.0, 1.0);
        out.pixels_mut()[i * 3 + 1] = c[1].clamp(0.0, 1.0);
        out.pixels_mut()[i * 3 + 2] = c[2].clamp(0.0, 1.0);
    }
    Ok(out)
}

/// `natural_colorize` at the default B=64, K=5, eps=1e-6.
pub fn natural_colorize_default(raw: &ScalarMap, rgb: &ImageRGB) -> Result<ImageRGB> {
    natural_colorize(raw, rgb, DEFAULT_BINS, DEFAULT_KERNEL, DEFAULT_EPS)
}
