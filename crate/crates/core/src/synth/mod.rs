//! Seeded procedural scene generation and bit-exact file formats.

mod dataset;
mod formats;
mod scene;

pub use dataset::{
    list_scene_dirs, read_dataset, read_scene_at, read_scene_dir, scene_dir_name, write_scene_dir,
};
pub use formats::{
    f32raw_bytes, features_bytes, parse_f32raw, parse_features, parse_pgm, parse_ppm, pgm_bytes,
    ppm_bytes, read_f32raw, read_features, read_pgm, read_ppm, write_f32raw, write_features,
    write_pgm, write_ppm, FeatureSetFile, F32RAW_MAGIC, F32RAW_VERSION, FEATURES_MAGIC,
    FEATURES_VERSION, MODALITY_DEPTH, MODALITY_RGB, MODALITY_SEG,
};
pub use scene::{
    generate_scene, scene_objects, SceneConfig, SceneObject, SceneTriplet, Shape,
    BACKGROUND_DEPTH, BACKGROUND_DEPTH_SPAN, NOISE_SIGMA, STRIPE_BAND, STRIPE_SWING,
};
