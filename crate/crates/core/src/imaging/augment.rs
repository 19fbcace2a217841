//! Photometric distortions: brightness, saturation, hue, contrast.
//!
//! Hue and saturation go through the standard hexagonal HSV conversion;
//! contrast scales about the per-image mean luminance so gray images stay
//! fixed. Values are clamped to [0, 1] after every stage. Stages whose
//! drawn parameter equals the identity value are skipped, so a collapsed
//! config reproduces the input bit-exactly.

use crate::imaging::ImageRGB;
use crate::numerics::RngStream;

/// Ranges the four distortion scalars are drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub brightness_delta_range: (f64, f64),
    pub saturation_range: (f64, f64),
    pub hue_delta_range: (f64, f64),
    pub contrast_range: (f64, f64),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            brightness_delta_range: (-0.1, 0.1),
            saturation_range: (0.8, 1.2),
            hue_delta_range: (-0.03, 0.03),
            contrast_range: (0.8, 1.2),
        }
    }
}

impl AugmentConfig {
    /// Collapse every range so the augmentation becomes the identity.
    pub fn identity() -> Self {
        AugmentConfig {
            brightness_delta_range: (0.0, 0.0),
            saturation_range: (1.0, 1.0),
            hue_delta_range: (0.0, 0.0),
            contrast_range: (1.0, 1.0),
        }
    }
}

/// One concrete draw of the four distortion scalars.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub brightness_delta: f64,
    pub saturation_scale: f64,
    pub hue_delta: f64,
    pub contrast_scale: f64,
}

impl AugmentParams {
    /// Draw the scalars in pipeline order: brightness, saturation, hue,
    /// contrast. Exactly four uniforms are consumed.
    pub fn draw(cfg: &AugmentConfig, rng: &mut RngStream) -> Self {
        let (blo, bhi) = cfg.brightness_delta_range;
        let (slo, shi) = cfg.saturation_range;
        let (hlo, hhi) = cfg.hue_delta_range;
        let (clo, chi) = cfg.contrast_range;
        AugmentParams {
            brightness_delta: rng.next_range(blo, bhi),
            saturation_scale: rng.next_range(slo, shi),
            hue_delta: rng.next_range(hlo, hhi),
            contrast_scale: rng.next_range(clo, chi),
        }
    }
}

fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Hexagonal RGB → HSV, hue in [0, 1).
fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        (((g - b) / delta).rem_euclid(6.0)) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    (h, s, v)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let sector = (h6.floor() as usize) % 6;
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - f * s);
    let t = v * (1.0 - (1.0 - f) * s);
    match sector {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

fn luminance(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

fn for_each_pixel(img: &mut ImageRGB, f: impl Fn(f64, f64, f64) -> (f64, f64, f64)) {
    for px in img.pixels_mut().chunks_exact_mut(3) {
        let (r, g, b) = f(px[0], px[1], px[2]);
        px[0] = clamp01(r);
        px[1] = clamp01(g);
        px[2] = clamp01(b);
    }
}

/// Apply a fixed set of distortion scalars, in pipeline order.
pub fn photometric_augment_with(img: &ImageRGB, params: &AugmentParams) -> ImageRGB {
    let mut out = img.clone();

    if params.brightness_delta != 0.0 {
        let d = params.brightness_delta;
        for_each_pixel(&mut out, |r, g, b| (r + d, g + d, b + d));
    }

    if params.saturation_scale != 1.0 {
        let f = params.saturation_scale;
        for_each_pixel(&mut out, |r, g, b| {
            let (h, s, v) = rgb_to_hsv(r, g, b);
            hsv_to_rgb(h, (s * f).clamp(0.0, 1.0), v)
        });
    }

    if params.hue_delta != 0.0 {
        let d = params.hue_delta;
        for_each_pixel(&mut out, |r, g, b| {
            let (h, s, v) = rgb_to_hsv(r, g, b);
            hsv_to_rgb((h + d).rem_euclid(1.0), s, v)
        });
    }

    if params.contrast_scale != 1.0 {
        let f = params.contrast_scale;
        let mut mean = 0.0;
        for px in out.pixels().chunks_exact(3) {
            mean += luminance(px[0], px[1], px[2]);
        }
        mean /= (out.height() * out.width()) as f64;
        for_each_pixel(&mut out, |r, g, b| {
            (
                (r - mean) * f + mean,
                (g - mean) * f + mean,
                (b - mean) * f + mean,
            )
        });
    }

    out
}

/// Draw the four distortion scalars from `rng` and apply them.
pub fn photometric_augment(img: &ImageRGB, cfg: &AugmentConfig, rng: &mut RngStream) -> ImageRGB {
    let params = AugmentParams::draw(cfg, rng);
    photometric_augment_with(img, &params)
}
