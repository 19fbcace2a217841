//! Center crop and resize. Nearest-neighbor uses ⌊(i+0.5)·scale⌋ source
//! indexing; bilinear uses half-pixel centers. Resizing to the same size
//! is the identity for both methods.

use crate::imaging::{ImageRGB, ScalarMap};

fn nearest_index(dst: usize, src_len: usize, dst_len: usize) -> usize {
    let scale = src_len as f64 / dst_len as f64;
    (((dst as f64 + 0.5) * scale).floor() as usize).min(src_len - 1)
}

/// Source coordinate and blend weight for bilinear sampling.
fn bilinear_coords(dst: usize, src_len: usize, dst_len: usize) -> (usize, usize, f64) {
    let scale = src_len as f64 / dst_len as f64;
    let src = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
    let lo = src.floor() as usize;
    let hi = (lo + 1).min(src_len - 1);
    (lo, hi, src - lo as f64)
}

impl ImageRGB {
    /// Crop to the centered min(H, W) square.
    pub fn center_crop_square(&self) -> ImageRGB {
        let side = self.height().min(self.width());
        let y0 = (self.height() - side) / 2;
        let x0 = (self.width() - side) / 2;
        let mut out = ImageRGB::new(side, side);
        for y in 0..side {
            for x in 0..side {
                out.set(y, x, self.get(y0 + y, x0 + x));
            }
        }
        out
    }

    pub fn resize_nearest(&self, height: usize, width: usize) -> ImageRGB {
        assert!(height >= 1 && width >= 1);
        let mut out = ImageRGB::new(height, width);
        for y in 0..height {
            let sy = nearest_index(y, self.height(), height);
            for x in 0..width {
                let sx = nearest_index(x, self.width(), width);
                out.set(y, x, self.get(sy, sx));
            }
        }
        out
    }

    pub fn resize_bilinear(&self, height: usize, width: usize) -> ImageRGB {
        assert!(height >= 1 && width >= 1);
        let mut out = ImageRGB::new(height, width);
        for y in 0..height {
            let (y0, y1, ty) = bilinear_coords(y, self.height(), height);
            for x in 0..width {
                let (x0, x1, tx) = bilinear_coords(x, self.width(), width);
                let mut px = [0.0; 3];
                let (p00, p01) = (self.get(y0, x0), self.get(y0, x1));
                let (p10, p11) = (self.get(y1, x0), self.get(y1, x1));
                for ch in 0..3 {
                    px[ch] = (1.0 - ty) * (1.0 - tx) * p00[ch]
                        + (1.0 - ty) * tx * p01[ch]
                        + ty * (1.0 - tx) * p10[ch]
                        + ty * tx * p11[ch];
                }
                out.set(y, x, px);
            }
        }
        out
    }
}

impl ScalarMap {
    pub fn center_crop_square(&self) -> ScalarMap {
        let side = self.height().min(self.width());
        let y0 = (self.height() - side) / 2;
        let x0 = (self.width() - side) / 2;
        let mut out = ScalarMap::new(side, side);
        for y in 0..side {
            for x in 0..side {
                out.set(y, x, self.get(y0 + y, x0 + x));
            }
        }
        out
    }

    pub fn resize_nearest(&self, height: usize, width: usize) -> ScalarMap {
        assert!(height >= 1 && width >= 1);
        let mut out = ScalarMap::new(height, width);
        for y in 0..height {
            let sy = nearest_index(y, self.height(), height);
            for x in 0..width {
                let sx = nearest_index(x, self.width(), width);
                out.set(y, x, self.get(sy, sx));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::seeded_rng;

    fn random_image(seed: u64, h: usize, w: usize) -> ImageRGB {
        let mut rng = seeded_rng(seed);
        ImageRGB::from_pixels(h, w, (0..h * w * 3).map(|_| rng.next_unit_float()).collect())
            .unwrap()
    }

    #[test]
    fn same_size_resize_is_identity_for_both_methods() {
        let img = random_image(1, 5, 7);
        assert_eq!(img.resize_nearest(5, 7), img);
        assert_eq!(img.resize_bilinear(5, 7), img);
        let map = ScalarMap::from_values(3, 4, (0..12).map(|i| i as f64).collect()).unwrap();
        assert_eq!(map.resize_nearest(3, 4), map);
    }

    #[test]
    fn checkerboard_nearest_upscale_gives_blocks() {
        let mut img = ImageRGB::new(2, 2);
        img.set(0, 0, [1.0, 1.0, 1.0]);
        img.set(1, 1, [1.0, 1.0, 1.0]);
        let up = img.resize_nearest(4, 4);
        for y in 0..4 {
            for x in 0..4 {
                let expect = if (y / 2 + x / 2) % 2 == 0 { 1.0 } else { 0.0 };
                assert_eq!(up.get(y, x)[0], expect, "({y},{x})");
            }
        }
    }

    #[test]
    fn center_crop_keeps_middle_columns() {
        // 4x6 crops to 4x4 keeping columns 1..=4.
        let mut img = ImageRGB::new(4, 6);
        for x in 0..6 {
            for y in 0..4 {
                img.set(y, x, [x as f64 / 10.0, 0.0, 0.0]);
            }
        }
        let crop = img.center_crop_square();
        assert_eq!(crop.height(), 4);
        assert_eq!(crop.width(), 4);
        for x in 0..4 {
            assert!((crop.get(0, x)[0] - (x + 1) as f64 / 10.0).abs() < 1e-15);
        }
    }

    #[test]
    fn bilinear_midpoint_between_two_pixels() {
        let mut img = ImageRGB::new(1, 2);
        img.set(0, 0, [0.0, 0.0, 0.0]);
        img.set(0, 1, [1.0, 1.0, 1.0]);
        // Upscale 1x2 -> 1x4: interior samples hit 0.25/0.75 source coords.
        let up = img.resize_bilinear(1, 4);
        let got: Vec<f64> = (0..4).map(|x| up.get(0, x)[0]).collect();
        assert!((got[0] - 0.0).abs() < 1e-15);
        assert!((got[1] - 0.25).abs() < 1e-12);
        assert!((got[2] - 0.75).abs() < 1e-12);
        assert!((got[3] - 1.0).abs() < 1e-15);
    }
}
