//! Scene → model-input pipeline, and dataset embedding for evaluation.
//!
//! Training: photometric augmentation of RGB, natural colorization of the
//! structural maps from the augmented RGB, modality mixup with per-scene
//! α draws, then ImageNet normalization. Evaluation uses the same path
//! with augmentation skipped and both α fixed to 0.

use crate::error::Result;
use crate::imaging::{
    modality_mixup, natural_colorize_default, normalize_imagenet, photometric_augment,
    sample_alpha, AugmentConfig, ImageTensor, NormalizationConstants,
};
use crate::model::EncoderStack;
use crate::numerics::{RngStream, Tensor2};
use crate::objective::SceneFeatures;
use crate::synth::SceneTriplet;

/// Crop and resize so both sides are the largest multiple of `patch` that
/// fits the centered square. A conforming scene passes through unchanged.
pub fn conform_scene(scene: &SceneTriplet, patch: usize) -> SceneTriplet {
    let side = scene.rgb.height().min(scene.rgb.width());
    let target = (side / patch) * patch;
    // Images smaller than one patch pass through; the forward pass
    // reports the dimension error.
    if target == 0 || (scene.rgb.height() == target && scene.rgb.width() == target) {
        return scene.clone();
    }
    let rgb = scene.rgb.center_crop_square().resize_bilinear(target, target);
    let depth = scene.depth.center_crop_square().resize_nearest(target, target);
    let seg = scene.seg.center_crop_square().resize_nearest(target, target);
    SceneTriplet { rgb, depth, seg }
}

/// Training inputs for one scene, in modality order (rgb, depth, seg).
///
/// Draw order on `rng`: the four augmentation scalars, then α_seg, then
/// α_depth.
pub fn prepare_training_inputs(
    scene: &SceneTriplet,
    augment: &AugmentConfig,
    alpha_max: f64,
    rng: &mut RngStream,
) -> Result<[ImageTensor; 3]> {
    let rgb_aug = photometric_augment(&scene.rgb, augment, rng);
    let depth_color = natural_colorize_default(&scene.depth, &rgb_aug)?;
    let seg_color = natural_colorize_default(&scene.seg, &rgb_aug)?;
    let alpha_s = sample_alpha(rng, alpha_max);
    let alpha_d = sample_alpha(rng, alpha_max);
    let seg_mix = modality_mixup(&seg_color, &rgb_aug, alpha_s)?;
    let depth_mix = modality_mixup(&depth_color, &rgb_aug, alpha_d)?;
    let c = NormalizationConstants::default();
    Ok([
        normalize_imagenet(&rgb_aug, &c),
        normalize_imagenet(&depth_mix, &c),
        normalize_imagenet(&seg_mix, &c),
    ])
}

/// Evaluation inputs: colorization from the raw RGB, no augmentation, α=0.
pub fn prepare_eval_inputs(scene: &SceneTriplet) -> Result<[ImageTensor; 3]> {
    let depth_color = natural_colorize_default(&scene.depth, &scene.rgb)?;
    let seg_color = natural_colorize_default(&scene.seg, &scene.rgb)?;
    let c = NormalizationConstants::default();
    Ok([
        normalize_imagenet(&scene.rgb, &c),
        normalize_imagenet(&depth_color, &c),
        normalize_imagenet(&seg_color, &c),
    ])
}

/// Frozen features for one scene's three modalities.
pub fn scene_features(stack: &EncoderStack, inputs: &[ImageTensor; 3]) -> Result<SceneFeatures> {
    Ok(SceneFeatures {
        rgb: stack.frozen_forward(&inputs[0])?,
        depth: stack.frozen_forward(&inputs[1])?,
        seg: stack.frozen_forward(&inputs[2])?,
    })
}

/// Embeddings of a full dataset under the evaluation pipeline.
#[derive(Debug, Clone)]
pub struct EvalEmbeddings {
    /// Pooled student rows, one matrix per modality (N×D).
    pub pooled: [Tensor2; 3],
    /// Pooled teacher rows per modality.
    pub pooled_teacher: [Tensor2; 3],
    /// Full dense student rows per scene, per modality (unit rows).
    pub dense: Vec<[Tensor2; 3]>,
    /// Full dense teacher rows per scene, per modality.
    pub dense_teacher: Vec<[Tensor2; 3]>,
}

/// Embed every scene with α=0 and no augmentation.
pub fn embed_dataset_eval(
    stack: &EncoderStack,
    scenes: &[SceneTriplet],
) -> Result<EvalEmbeddings> {
    let dim = stack.embed_dim();
    let n = scenes.len();
    let mut pooled: Vec<Tensor2> = (0..3).map(|_| Tensor2::zeros(n, dim)).collect();
    let mut pooled_teacher: Vec<Tensor2> = (0..3).map(|_| Tensor2::zeros(n, dim)).collect();
    let mut dense = Vec::with_capacity(n);
    let mut dense_teacher = Vec::with_capacity(n);

    for (i, scene) in scenes.iter().enumerate() {
        let conformed = conform_scene(scene, stack.cfg.patch);
        let inputs = prepare_eval_inputs(&conformed)?;
        let mut scene_dense = Vec::with_capacity(3);
        let mut scene_dense_t = Vec::with_capacity(3);
        for (m, input) in inputs.iter().enumerate() {
            let z = stack.frozen_forward(input)?;
            let emb = stack.heads_forward(&z)?;
            pooled[m].row_mut(i).copy_from_slice(&emb.pooled_student);
            pooled_teacher[m]
                .row_mut(i)
                .copy_from_slice(&emb.pooled_teacher);
            scene_dense.push(emb.dense_student);
            scene_dense_t.push(emb.dense_teacher);
        }
        let to_arr = |mut v: Vec<Tensor2>| -> [Tensor2; 3] {
            let c = v.pop().unwrap();
            let b = v.pop().unwrap();
            let a = v.pop().unwrap();
            [a, b, c]
        };
        dense.push(to_arr(scene_dense));
        dense_teacher.push(to_arr(scene_dense_t));
    }

    let to_arr = |mut v: Vec<Tensor2>| -> [Tensor2; 3] {
        let c = v.pop().unwrap();
        let b = v.pop().unwrap();
        let a = v.pop().unwrap();
        [a, b, c]
    };
    Ok(EvalEmbeddings {
        pooled: to_arr(pooled),
        pooled_teacher: to_arr(pooled_teacher),
        dense,
        dense_teacher,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_stack, ModelConfig};
    use crate::numerics::seeded_rng;
    use crate::synth::{generate_scene, SceneConfig};

    fn small_model() -> ModelConfig {
        ModelConfig {
            patch: 4,
            embed_dim: 8,
            frozen_layers: 1,
            adapter_layers: 1,
            seed: 1,
            adapter_on_top: false,
        }
    }

    #[test]
    fn conform_is_identity_for_divisible_squares() {
        let cfg = SceneConfig {
            height: 8,
            width: 8,
            ..SceneConfig::default()
        };
        let scene = generate_scene(&cfg, 0).unwrap();
        let out = conform_scene(&scene, 4);
        assert_eq!(out, scene);
    }

    #[test]
    fn undersized_scene_passes_through_to_a_forward_error() {
        let cfg = SceneConfig {
            height: 3,
            width: 3,
            n_objects_range: (1, 1),
            ..SceneConfig::default()
        };
        let scene = generate_scene(&cfg, 0).unwrap();
        let out = conform_scene(&scene, 4);
        assert_eq!(out, scene);
        let stack = init_stack(&small_model()).unwrap();
        assert!(embed_dataset_eval(&stack, &[scene]).is_err());
    }

    #[test]
    fn conform_crops_to_patch_multiple() {
        let cfg = SceneConfig {
            height: 10,
            width: 14,
            ..SceneConfig::default()
        };
        let scene = generate_scene(&cfg, 0).unwrap();
        let out = conform_scene(&scene, 4);
        assert_eq!(out.rgb.height(), 8);
        assert_eq!(out.rgb.width(), 8);
        assert_eq!(out.seg.height(), 8);
    }

    #[test]
    fn training_pipeline_is_deterministic_per_stream() {
        let cfg = SceneConfig {
            height: 8,
            width: 8,
            ..SceneConfig::default()
        };
        let scene = generate_scene(&cfg, 1).unwrap();
        let aug = AugmentConfig::default();
        let a = prepare_training_inputs(&scene, &aug, 0.5, &mut seeded_rng(7)).unwrap();
        let b = prepare_training_inputs(&scene, &aug, 0.5, &mut seeded_rng(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn eval_embeddings_have_expected_shapes() {
        let stack = init_stack(&small_model()).unwrap();
        let cfg = SceneConfig {
            height: 8,
            width: 8,
            ..SceneConfig::default()
        };
        let scenes: Vec<_> = (0..3)
            .map(|i| generate_scene(&cfg, i).unwrap())
            .collect();
        let emb = embed_dataset_eval(&stack, &scenes).unwrap();
        assert_eq!(emb.pooled[0].rows(), 3);
        assert_eq!(emb.pooled[0].cols(), 8);
        assert_eq!(emb.dense.len(), 3);
        assert_eq!(emb.dense[0][0].rows(), 4); // 8/4 × 8/4 tokens
    }

    #[test]
    fn eval_pipeline_sees_identical_student_and_teacher_at_init() {
        let stack = init_stack(&small_model()).unwrap();
        let cfg = SceneConfig {
            height: 8,
            width: 8,
            ..SceneConfig::default()
        };
        let scenes: Vec<_> = (0..2)
            .map(|i| generate_scene(&cfg, i).unwrap())
            .collect();
        let emb = embed_dataset_eval(&stack, &scenes).unwrap();
        for m in 0..3 {
            assert_eq!(emb.pooled[m], emb.pooled_teacher[m]);
        }
    }
}
