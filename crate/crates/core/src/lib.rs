//! Reversible level-of-detail hierarchies for 3D Gaussian splats.
//!
//! A Gaussian set is simplified one merge at a time into a single root
//! ([`simplify`]), the merge log is turned into a binary tree with
//! breadth levels ([`hierarchy`]), every node is quantized into a
//! 14-attribute token ([`tokenize`]) and the token list gets one of three
//! attention masks for level-parallel decoding ([`masks`]). A small CPU
//! renderer with PSNR/SSIM ([`render`], [`metrics`]) measures what each
//! level of detail costs in image fidelity.

pub mod error;
pub mod fixtures;
pub mod gaussian;
pub mod hierarchy;
pub mod io;
pub mod masks;
pub mod metrics;
pub mod render;
pub mod set;
pub mod simplify;
pub mod tokenize;
pub mod verify;

pub use error::{Error, ErrorKind, Result};
pub use gaussian::{
    covariance, cross_gaussian, det_cov, merge, merge_detailed, moments, CrossGaussian,
    Gaussian3D, MomentSummary,
};
pub use hierarchy::{build_tree, level_sets, stats, HierarchyStats, HierarchyTree, LevelSets};
pub use masks::{
    build_mask, causal_mask, decode_cost, levelwise_mask, tree_mask, AttentionMask, MaskVariant,
};
pub use metrics::{psnr, ssim};
pub use render::{project, render, render_with_workers, Camera, Image};
pub use set::GaussianSet;
pub use simplify::{
    expand, nearest_partner, replay, simplify, MergeRecord, MergeSequence, NeighborSearch,
    SimplifyConfig,
};
pub use tokenize::{dequantize, fit_quant_spec, quantize, tokenize_tree, QuantSpec, TokenRecord};
