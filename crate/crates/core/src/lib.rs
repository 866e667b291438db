//! Layer-wise Hessian structure of fully-connected ReLU classifiers.
//!
//! The crate trains small MLPs, assembles exact layer-wise Hessians and their
//! Kronecker factors `E[M] ⊗ E[x̃x̃ᵀ]`, measures the spectral structure of
//! those matrices, checks the rank-`(c−1)` output-Hessian prediction at random
//! initialization and optimizes PAC-Bayes bounds in the Hessian eigenbasis.

pub mod datasets;
pub mod error;
pub mod hessian;
pub mod linalg;
pub mod metrics;
pub mod network;
pub mod pacbayes;
pub mod parallel;
pub mod registry;
pub mod rng;
pub mod theory;

pub use error::{Error, Result};
