//! Cascade ensembles of neural networks for gridded regression.
//!
//! A cascade starts with a linear net and recruits progressively deeper
//! perceptrons trained on residual targets; a candidate stays only if it
//! lowers validation error. Samples are reduced by PCA first, and first-layer
//! weights can be projected back through the PCA basis to visualize what
//! spatial patterns each unit responds to.

pub mod cascade;
pub mod dataset;
pub mod error;
pub mod interpret;
pub mod linalg;
pub mod network;
pub mod pca;
pub mod persistence;
pub mod scg;

pub use error::{Error, Result};
