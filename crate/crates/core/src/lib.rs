//! Desk-scale cross-modal feature alignment.
//!
//! The crate covers the full recipe end to end: procedural paired
//! RGB/depth/segmentation scenes, the data pipeline (photometric
//! augmentation, natural colorization, modality mixup), a frozen-backbone
//! encoder with a trainable adapter head anchored to its frozen twin, the
//! symmetric InfoNCE + anchoring objective with exact hand-written
//! gradients, deterministic AdamW training, and the evaluation battery
//! (cross-modal retrieval, alignment diagnostics, k-NN, exact-token
//! correspondence, PCA visualization).

pub mod error;
pub mod evalkit;
pub mod imaging;
pub mod model;
pub mod numerics;
pub mod objective;
pub mod optim;
pub mod synth;
pub mod util;

pub use error::{Error, Result};
