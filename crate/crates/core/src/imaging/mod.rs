//! Image types and the data pipeline: photometric augmentation, natural
//! colorization, ImageNet normalization, and modality mixup.

mod augment;
mod palette;
mod resize;

pub use augment::{photometric_augment, photometric_augment_with, AugmentConfig, AugmentParams};
pub use palette::{
    build_palette, natural_colorize, natural_colorize_default, ColorPalette, PaletteBin,
    DEFAULT_BINS, DEFAULT_EPS, DEFAULT_KERNEL,
};

use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// RGB image with channel values in [0, 1], row-major H×W×3.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRGB {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl ImageRGB {
    /// All-black image. Dimensions must be at least 1×1.
    pub fn new(height: usize, width: usize) -> Self {
        assert!(height >= 1 && width >= 1, "image dimensions must be >= 1");
        ImageRGB {
            height,
            width,
            pixels: vec![0.0; height * width * 3],
        }
    }

    pub fn from_pixels(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height < 1 || width < 1 {
            return Err(Error::ConfigInvalid {
                context: "image dimensions must be >= 1".into(),
            });
        }
        if pixels.len() != height * width * 3 {
            return Err(Error::LengthMismatch {
                expected: height * width * 3,
                got: pixels.len(),
            });
        }
        if pixels.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::ConfigInvalid {
                context: "pixel values must lie in [0, 1]".into(),
            });
        }
        Ok(ImageRGB {
            height,
            width,
            pixels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub(crate) fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    pub fn get(&self, y: usize, x: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set(&mut self, y: usize, x: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i] = rgb[0];
        self.pixels[i + 1] = rgb[1];
        self.pixels[i + 2] = rgb[2];
    }

    pub fn same_shape(&self, other: &ImageRGB) -> bool {
        self.height == other.height && self.width == other.width
    }
}

/// Single-channel float map (depth values, segmentation ids, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl ScalarMap {
    pub fn new(height: usize, width: usize) -> Self {
        assert!(height >= 1 && width >= 1, "map dimensions must be >= 1");
        ScalarMap {
            height,
            width,
            values: vec![0.0; height * width],
        }
    }

    pub fn from_values(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height < 1 || width < 1 {
            return Err(Error::ConfigInvalid {
                context: "map dimensions must be >= 1".into(),
            });
        }
        if values.len() != height * width {
            return Err(Error::LengthMismatch {
                expected: height * width,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::ConfigInvalid {
                context: "map values must be finite".into(),
            });
        }
        Ok(ScalarMap {
            height,
            width,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: f64) {
        self.values[y * self.width + x] = v;
    }
}

/// Normalized image tensor, H×W×3 row-major, values unclamped.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

/// Channel-wise standardization constants.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationConstants {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Default for NormalizationConstants {
    /// ImageNet-1k statistics.
    fn default() -> Self {
        NormalizationConstants {
            mean: [0.485, 0.456, 0.406],
            std: [0.229, 0.224, 0.225],
        }
    }
}

/// Standardize a [0,1] image: per channel (value − mean) / std.
pub fn normalize_imagenet(img: &ImageRGB, c: &NormalizationConstants) -> ImageTensor {
    let mut data = Vec::with_capacity(img.pixels.len());
    for px in img.pixels.chunks_exact(3) {
        for ((v, mean), std) in px.iter().zip(&c.mean).zip(&c.std) {
            data.push((v - mean) / std);
        }
    }
    ImageTensor {
        height: img.height,
        width: img.width,
        data,
    }
}

/// Convex blend (1−α)·x_m + α·x_rgb, pixelwise.
pub fn modality_mixup(x_m: &ImageRGB, x_rgb_aug: &ImageRGB, alpha: f64) -> Result<ImageRGB> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::AlphaOutOfRange { alpha });
    }
    if !x_m.same_shape(x_rgb_aug) {
        return Err(Error::DimensionMismatch {
            context: format!(
                "mixup: {}x{} vs {}x{}",
                x_m.height, x_m.width, x_rgb_aug.height, x_rgb_aug.width
            ),
        });
    }
    let mut out = x_m.clone();
    for (o, (a, b)) in out
        .pixels
        .iter_mut()
        .zip(x_m.pixels.iter().zip(&x_rgb_aug.pixels))
    {
        *o = (1.0 - alpha) * a + alpha * b;
    }
    Ok(out)
}

/// Mixup coefficient drawn uniformly from [0, alpha_max].
pub fn sample_alpha(rng: &mut RngStream, alpha_max: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&alpha_max));
    rng.next_unit_float() * alpha_max
}
