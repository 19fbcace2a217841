//! Dense tensor arithmetic, seeded randomness, and the PCA kernel.
//!
//! Everything here is pure value semantics: identical inputs give
//! bit-identical outputs, and reductions run in a fixed left-to-right
//! order so results do not depend on work partitioning.

mod linalg;
mod pca;
mod rng;
mod tensor;

pub use linalg::{cosine_similarity_matrix, dot, l2_normalize, l2_normalize_rows, norm, ZERO_NORM_EPS};
pub use pca::{jacobi_eigen_symmetric, pca_top_k, Pca};
pub use rng::{mix64, seeded_rng, RngStream};
pub use tensor::Tensor2;
