//! Run configuration: `key = value` lines under [section] headers.
//!
//! Unknown sections or keys are errors. Parsing then serializing is
//! canonical: fixed section and key order, stable value formatting.

use omnialign_core::imaging::AugmentConfig;
use omnialign_core::model::ModelConfig;
use omnialign_core::objective::LossConfig;
use omnialign_core::optim::{DataSource, TrainConfig};
use omnialign_core::synth::SceneConfig;
use omnialign_core::evalkit::EvalConfig;
use std::fmt::Write as _;
use std::path::PathBuf;

/// Training-section values not owned by a core type.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSection {
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub lr: f64,
    pub weight_decay: f64,
    pub alpha_max: f64,
    pub checkpoint_every: usize,
    pub augment: AugmentConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSection {
    pub height: usize,
    pub width: usize,
    pub n_scenes: usize,
    pub n_eval_scenes: usize,
    pub objects_min: usize,
    pub objects_max: usize,
    pub seed: u64,
    /// Non-empty: load scenes from this directory instead of generating.
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSection {
    pub batch: usize,
    pub tie_eps: f64,
    pub knn_tau: f64,
    pub knn_ks: Vec<usize>,
    pub pca_scale: usize,
    pub pairing_seed: u64,
}

/// The full config file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainSection,
    pub loss: LossConfig,
    pub data: DataSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train_defaults = TrainConfig::default();
        RunConfig {
            model: ModelConfig::default(),
            train: TrainSection {
                steps: train_defaults.steps,
                batch_size: train_defaults.batch_size,
                seed: train_defaults.seed,
                lr: train_defaults.lr,
                weight_decay: train_defaults.weight_decay,
                alpha_max: train_defaults.alpha_max,
                checkpoint_every: 0,
                augment: AugmentConfig::default(),
            },
            loss: train_defaults.loss,
            data: DataSection {
                height: 32,
                width: 32,
                n_scenes: 256,
                n_eval_scenes: 64,
                objects_min: 2,
                objects_max: 5,
                seed: 0,
                dir: None,
            },
            eval: EvalSection {
                batch: 2048,
                tie_eps: 1e-6,
                knn_tau: 0.07,
                knn_ks: vec![5, 10, 20, 50, 100],
                pca_scale: 16,
                pairing_seed: 123,
            },
        }
    }
}

fn parse_num<T: std::str::FromStr>(section: &str, key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("[{section}] {key}: cannot parse {value:?}"))
}

fn parse_bool(section: &str, key: &str, value: &str) -> Result<bool, String> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("[{section}] {key}: expected a boolean, got {value:?}")),
    }
}

fn parse_list(section: &str, key: &str, value: &str) -> Result<Vec<usize>, String> {
    value
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| format!("[{section}] {key}: bad list entry {s:?}"))
        })
        .collect()
}

impl RunConfig {
    /// Apply one `section.key = value` assignment.
    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<(), String> {
        let s = section;
        match (section, key) {
            ("model", "patch") => self.model.patch = parse_num(s, key, value)?,
            ("model", "embed_dim") => self.model.embed_dim = parse_num(s, key, value)?,
            ("model", "frozen_layers") => self.model.frozen_layers = parse_num(s, key, value)?,
            ("model", "adapter_layers") => self.model.adapter_layers = parse_num(s, key, value)?,
            ("model", "seed") => self.model.seed = parse_num(s, key, value)?,
            ("model", "adapter_on_top") => self.model.adapter_on_top = parse_bool(s, key, value)?,

            ("train", "steps") => self.train.steps = parse_num(s, key, value)?,
            ("train", "batch_size") => self.train.batch_size = parse_num(s, key, value)?,
            ("train", "seed") => self.train.seed = parse_num(s, key, value)?,
            ("train", "lr") => self.train.lr = parse_num(s, key, value)?,
            ("train", "weight_decay") => self.train.weight_decay = parse_num(s, key, value)?,
            ("train", "alpha_max") => self.train.alpha_max = parse_num(s, key, value)?,
            ("train", "checkpoint_every") => {
                self.train.checkpoint_every = parse_num(s, key, value)?
            }
            ("train", "brightness_min") => {
                self.train.augment.brightness_delta_range.0 = parse_num(s, key, value)?
            }
            ("train", "brightness_max") => {
                self.train.augment.brightness_delta_range.1 = parse_num(s, key, value)?
            }
            ("train", "saturation_min") => {
                self.train.augment.saturation_range.0 = parse_num(s, key, value)?
            }
            ("train", "saturation_max") => {
                self.train.augment.saturation_range.1 = parse_num(s, key, value)?
            }
            ("train", "hue_min") => {
                self.train.augment.hue_delta_range.0 = parse_num(s, key, value)?
            }
            ("train", "hue_max") => {
                self.train.augment.hue_delta_range.1 = parse_num(s, key, value)?
            }
            ("train", "contrast_min") => {
                self.train.augment.contrast_range.0 = parse_num(s, key, value)?
            }
            ("train", "contrast_max") => {
                self.train.augment.contrast_range.1 = parse_num(s, key, value)?
            }

            ("loss", "lambda_anchor") => self.loss.lambda_anchor = parse_num(s, key, value)?,
            ("loss", "tau_init") => self.loss.tau_init = parse_num(s, key, value)?,
            ("loss", "tau_min") => self.loss.tau_min = parse_num(s, key, value)?,
            ("loss", "tau_max") => self.loss.tau_max = parse_num(s, key, value)?,
            ("loss", "n_dense") => self.loss.n_dense = parse_num(s, key, value)?,
            ("loss", "dense_weight") => self.loss.dense_weight = parse_num(s, key, value)?,

            ("data", "height") => self.data.height = parse_num(s, key, value)?,
            ("data", "width") => self.data.width = parse_num(s, key, value)?,
            ("data", "n_scenes") => self.data.n_scenes = parse_num(s, key, value)?,
            ("data", "n_eval_scenes") => self.data.n_eval_scenes = parse_num(s, key, value)?,
            ("data", "objects_min") => self.data.objects_min = parse_num(s, key, value)?,
            ("data", "objects_max") => self.data.objects_max = parse_num(s, key, value)?,
            ("data", "seed") => self.data.seed = parse_num(s, key, value)?,
            ("data", "dir") => {
                self.data.dir = if value.is_empty() {
                    None
                } else {
                    Some(PathBuf::from(value))
                }
            }

            ("eval", "batch") => self.eval.batch = parse_num(s, key, value)?,
            ("eval", "tie_eps") => self.eval.tie_eps = parse_num(s, key, value)?,
            ("eval", "knn_tau") => self.eval.knn_tau = parse_num(s, key, value)?,
            ("eval", "knn_ks") => self.eval.knn_ks = parse_list(s, key, value)?,
            ("eval", "pca_scale") => self.eval.pca_scale = parse_num(s, key, value)?,
            ("eval", "pairing_seed") => self.eval.pairing_seed = parse_num(s, key, value)?,

            _ => return Err(format!("unknown config key [{section}] {key}")),
        }
        Ok(())
    }

    /// Parse a config file body.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                if !line.ends_with(']') {
                    return Err(format!("line {}: malformed section header", lineno + 1));
                }
                section = line[1..line.len() - 1].trim().to_string();
                if !["model", "train", "loss", "data", "eval"].contains(&section.as_str()) {
                    return Err(format!("line {}: unknown section [{section}]", lineno + 1));
                }
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(format!(
                "line {}: expected `key = value`, got {line:?}",
                lineno + 1
            ))?;
            if section.is_empty() {
                return Err(format!("line {}: key before any [section]", lineno + 1));
            }
            cfg.set(&section, key.trim(), value.trim())
                .map_err(|e| format!("line {}: {e}", lineno + 1))?;
        }
        Ok(cfg)
    }

    /// Canonical serialization: stable section and key order.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        let ks: Vec<String> = self.eval.knn_ks.iter().map(|k| k.to_string()).collect();
        let _ = write!(
            out,
            "[model]\n\
             patch = {}\n\
             embed_dim = {}\n\
             frozen_layers = {}\n\
             adapter_layers = {}\n\
             seed = {}\n\
             adapter_on_top = {}\n\
             \n[train]\n\
             steps = {}\n\
             batch_size = {}\n\
             seed = {}\n\
             lr = {}\n\
             weight_decay = {}\n\
             alpha_max = {}\n\
             checkpoint_every = {}\n\
             brightness_min = {}\n\
             brightness_max = {}\n\
             saturation_min = {}\n\
             saturation_max = {}\n\
             hue_min = {}\n\
             hue_max = {}\n\
             contrast_min = {}\n\
             contrast_max = {}\n\
             \n[loss]\n\
             lambda_anchor = {}\n\
             tau_init = {}\n\
             tau_min = {}\n\
             tau_max = {}\n\
             n_dense = {}\n\
             dense_weight = {}\n\
             \n[data]\n\
             height = {}\n\
             width = {}\n\
             n_scenes = {}\n\
             n_eval_scenes = {}\n\
             objects_min = {}\n\
             objects_max = {}\n\
             seed = {}\n\
             dir = {}\n\
             \n[eval]\n\
             batch = {}\n\
             tie_eps = {}\n\
             knn_tau = {}\n\
             knn_ks = {}\n\
             pca_scale = {}\n\
             pairing_seed = {}\n",
            self.model.patch,
            self.model.embed_dim,
            self.model.frozen_layers,
            self.model.adapter_layers,
            self.model.seed,
            self.model.adapter_on_top,
            self.train.steps,
            self.train.batch_size,
            self.train.seed,
            self.train.lr,
            self.train.weight_decay,
            self.train.alpha_max,
            self.train.checkpoint_every,
            self.train.augment.brightness_delta_range.0,
            self.train.augment.brightness_delta_range.1,
            self.train.augment.saturation_range.0,
            self.train.augment.saturation_range.1,
            self.train.augment.hue_delta_range.0,
            self.train.augment.hue_delta_range.1,
            self.train.augment.contrast_range.0,
            self.train.augment.contrast_range.1,
            self.loss.lambda_anchor,
            self.loss.tau_init,
            self.loss.tau_min,
            self.loss.tau_max,
            self.loss.n_dense,
            self.loss.dense_weight,
            self.data.height,
            self.data.width,
            self.data.n_scenes,
            self.data.n_eval_scenes,
            self.data.objects_min,
            self.data.objects_max,
            self.data.seed,
            self.data
                .dir
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            self.eval.batch,
            self.eval.tie_eps,
            self.eval.knn_tau,
            ks.join(","),
            self.eval.pca_scale,
            self.eval.pairing_seed,
        );
        out
    }

    pub fn scene_config(&self) -> SceneConfig {
        SceneConfig {
            height: self.data.height,
            width: self.data.width,
            n_objects_range: (self.data.objects_min, self.data.objects_max),
            seed: self.data.seed,
            ..SceneConfig::default()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let data = match &self.data.dir {
            Some(dir) => DataSource::Directory(dir.clone()),
            None => DataSource::Synthetic {
                scene: self.scene_config(),
                n_scenes: self.data.n_scenes,
            },
        };
        TrainConfig {
            steps: self.train.steps,
            batch_size: self.train.batch_size,
            seed: self.train.seed,
            lr: self.train.lr,
            weight_decay: self.train.weight_decay,
            alpha_max: self.train.alpha_max,
            model: self.model.clone(),
            loss: self.loss.clone(),
            augment: self.train.augment.clone(),
            data,
            checkpoint_every: self.train.checkpoint_every,
            checkpoint_prefix: None,
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            batch: self.eval.batch,
            tie_eps: self.eval.tie_eps,
            knn_tau: self.eval.knn_tau,
            knn_ks: self.eval.knn_ks.clone(),
        }
    }
}
