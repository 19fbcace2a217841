//! Procedural paired RGB / depth / segmentation scenes.
//!
//! A scene is a small set of rectangles and discs over a background
//! gradient, drawn from a shared muted palette. A global horizontal
//! lighting-stripe field modulates every RGB pixel up and down; the
//! stripes exist only in RGB (and as a slight corrugation of object
//! depth), so colorization flattens them away and the modalities genuinely
//! diverge in appearance while sharing the underlying layout. Generation
//! is a pure function of (seed, index): the draw sequence is fixed, so two
//! calls with equal inputs are bit-identical.

use crate::error::{Error, Result};
use crate::imaging::{ImageRGB, ScalarMap};
use crate::numerics::RngStream;

/// Depth of the nearest background pixel; all object depths are smaller
/// (smaller = nearer).
pub const BACKGROUND_DEPTH: f64 = 10.0;

/// The background recedes by this much from its near edge to its far edge.
pub const BACKGROUND_DEPTH_SPAN: f64 = 1.5;

/// Std-dev of the per-pixel RGB noise.
pub const NOISE_SIGMA: f64 = 0.02;

/// Row band height of the global lighting-stripe field.
pub const STRIPE_BAND: usize = 2;

/// Per-channel amplitude of the lighting stripes.
pub const STRIPE_SWING: f64 = 0.42;

const OBJECT_STREAM_TAG: u64 = 0x5CE6_E001;
const RENDER_STREAM_TAG: u64 = 0x5CE6_E002;

/// +1 on bright stripe rows, −1 on dark ones.
fn stripe_sign(y: usize) -> f64 {
    if (y / STRIPE_BAND).is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Generator settings for one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    /// Inclusive [min, max] object count.
    pub n_objects_range: (usize, usize),
    pub background_palette: Vec<[f64; 3]>,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            height: 32,
            width: 32,
            n_objects_range: (2, 5),
            background_palette: vec![
                [0.70, 0.38, 0.32],
                [0.32, 0.64, 0.38],
                [0.34, 0.38, 0.70],
                [0.66, 0.62, 0.34],
                [0.58, 0.34, 0.62],
                [0.36, 0.60, 0.60],
            ],
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height < 1 || self.width < 1 {
            return Err(Error::ConfigInvalid {
                context: "scene dimensions must be >= 1".into(),
            });
        }
        let (lo, hi) = self.n_objects_range;
        if lo < 1 || lo > hi {
            return Err(Error::ConfigInvalid {
                context: format!("object count range [{lo}, {hi}] must satisfy 1 <= min <= max"),
            });
        }
        if self.background_palette.is_empty() {
            return Err(Error::ConfigInvalid {
                context: "background palette must not be empty".into(),
            });
        }
        Ok(())
    }
}

/// Paired modalities of one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneTriplet {
    pub rgb: ImageRGB,
    /// Frontmost surface depth per pixel; background is farthest.
    pub depth: ScalarMap,
    /// Frontmost object id per pixel; background is 0.
    pub seg: ScalarMap,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    /// Half-open pixel rectangle [y0, y1) × [x0, x1).
    Rect { y0: i64, x0: i64, y1: i64, x1: i64 },
    Disc { cy: f64, cx: f64, r: f64 },
}

/// One generated object, exposed so tests can cross-check the rendering.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    /// Segmentation id; 1-based since background is 0.
    pub id: usize,
    pub shape: Shape,
    /// Mean tone; the lighting stripes swing around it in RGB.
    pub color: [f64; 3],
    /// Depth of the bright stripe phase; smaller = nearer.
    pub depth: f64,
    /// Extra depth of the dark stripe phase (corrugated surface). Small
    /// enough that objects never leave their depth band, so the
    /// front-to-back object order is global.
    pub depth_step: f64,
}

impl SceneObject {
    pub fn contains(&self, y: usize, x: usize) -> bool {
        match &self.shape {
            Shape::Rect { y0, x0, y1, x1 } => {
                let (y, x) = (y as i64, x as i64);
                y >= *y0 && y < *y1 && x >= *x0 && x < *x1
            }
            Shape::Disc { cy, cx, r } => {
                let dy = y as f64 + 0.5 - cy;
                let dx = x as f64 + 0.5 - cx;
                dy * dy + dx * dx <= r * r
            }
        }
    }

    /// RGB color of this object at a pixel row.
    pub fn color_at(&self, y: usize) -> [f64; 3] {
        let s = stripe_sign(y) * STRIPE_SWING;
        [
            (self.color[0] + s).clamp(0.0, 1.0),
            (self.color[1] + s).clamp(0.0, 1.0),
            (self.color[2] + s).clamp(0.0, 1.0),
        ]
    }

    /// Depth of this object's surface at a pixel row: the dark stripe
    /// phase sits slightly deeper, so depth carries the stripe geometry.
    pub fn depth_at(&self, y: usize) -> f64 {
        if stripe_sign(y) > 0.0 {
            self.depth
        } else {
            self.depth + self.depth_step
        }
    }
}

/// The object list for scene `index`. Object draws ride their own derived
/// stream: count first, then per object shape kind, center y, center x,
/// half-size, palette pick, tone jitter (3 draws), depth jitter, depth
/// step.
pub fn scene_objects(cfg: &SceneConfig, index: u64) -> Result<Vec<SceneObject>> {
    cfg.validate()?;
    let mut rng = RngStream::derived(cfg.seed, &[OBJECT_STREAM_TAG, index]);
    let (lo, hi) = cfg.n_objects_range;
    let k = lo + rng.next_below(hi - lo + 1);

    let h = cfg.height as f64;
    let w = cfg.width as f64;
    let min_half = (h.min(w) / 8.0).max(1.0);
    let max_half = (h.min(w) / 3.0).max(2.0);
    let mut objects = Vec::with_capacity(k);
    for j in 0..k {
        let kind = rng.next_below(2);
        let cy = rng.next_range(0.0, h);
        let cx = rng.next_range(0.0, w);
        let half = rng.next_range(min_half, max_half);
        // Mean tones come from the shared palette with a small jitter, so
        // scenes stay hard to tell apart by color statistics alone.
        let base = cfg.background_palette[rng.next_below(cfg.background_palette.len())];
        let color = [
            (base[0] + rng.next_range(-0.10, 0.10)).clamp(0.02, 0.98),
            (base[1] + rng.next_range(-0.10, 0.10)).clamp(0.02, 0.98),
            (base[2] + rng.next_range(-0.10, 0.10)).clamp(0.02, 0.98),
        ];
        // Depth bands are disjoint per object: the base sits in the lower
        // middle of band j and the corrugation step stays under a quarter
        // band.
        let band_width = 8.0 / k as f64;
        let depth = 1.0 + band_width * (j as f64 + 0.25 + 0.25 * rng.next_unit_float());
        let depth_step = rng.next_range(0.05, 0.25) * band_width;
        let shape = if kind == 0 {
            Shape::Rect {
                y0: (cy - half).floor() as i64,
                x0: (cx - half).floor() as i64,
                y1: (cy + half).ceil() as i64,
                x1: (cx + half).ceil() as i64,
            }
        } else {
            Shape::Disc { cy, cx, r: half }
        };
        objects.push(SceneObject {
            id: j + 1,
            shape,
            color,
            depth,
            depth_step,
        });
    }
    Ok(objects)
}

/// Render scene `index` deterministically from (cfg.seed, index).
///
/// Rendering draws (background gradient endpoints, then per-pixel noise)
/// ride a second derived stream so the object list and the rendering can
/// evolve independently.
pub fn generate_scene(cfg: &SceneConfig, index: u64) -> Result<SceneTriplet> {
    let objects = scene_objects(cfg, index)?;
    let mut rng = RngStream::derived(cfg.seed, &[RENDER_STREAM_TAG, index]);
    let palette = &cfg.background_palette;
    let bg_left = palette[rng.next_below(palette.len())];
    let bg_right = palette[rng.next_below(palette.len())];

    let (height, width) = (cfg.height, cfg.width);
    let mut rgb = ImageRGB::new(height, width);
    let mut depth = ScalarMap::new(height, width);
    let mut seg = ScalarMap::new(height, width);

    for y in 0..height {
        let swing = stripe_sign(y) * STRIPE_SWING;
        for x in 0..width {
            let t = if width > 1 {
                x as f64 / (width - 1) as f64
            } else {
                0.0
            };
            // Background: horizontal palette gradient, modulated by the
            // lighting stripes. Depth recedes left to right like a wall
            // seen at an angle, so colorized depth keeps a horizontal ramp
            // where colorized segmentation collapses the background to one
            // flat color.
            let mut mean = [
                (1.0 - t) * bg_left[0] + t * bg_right[0],
                (1.0 - t) * bg_left[1] + t * bg_right[1],
                (1.0 - t) * bg_left[2] + t * bg_right[2],
            ];
            let mut d = BACKGROUND_DEPTH + BACKGROUND_DEPTH_SPAN * t;
            let mut id = 0usize;
            for obj in &objects {
                let od = obj.depth_at(y);
                if od < d && obj.contains(y, x) {
                    d = od;
                    id = obj.id;
                    mean = obj.color;
                }
            }
            let px = [
                (mean[0] + swing).clamp(0.0, 1.0),
                (mean[1] + swing).clamp(0.0, 1.0),
                (mean[2] + swing).clamp(0.0, 1.0),
            ];
            rgb.set(y, x, px);
            depth.set(y, x, d);
            seg.set(y, x, id as f64);
        }
    }

    // Per-pixel Gaussian noise on RGB only; depth and seg stay clean.
    for v in rgb.pixels_mut() {
        *v = (*v + NOISE_SIGMA * rng.next_gaussian()).clamp(0.0, 1.0);
    }

    Ok(SceneTriplet { rgb, depth, seg })
}
