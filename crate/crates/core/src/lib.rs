//! Manifold regularization as a deformed kernel.
//!
//! The crate builds dense Gaussian graphs and their Laplacians, the deformed
//! kernel whose RKHS norm carries the graph penalty, empirical Rademacher
//! bounds for both kernels, elbow selection of the penalty weight, square-loss
//! learners, and closed-form sample-size calculators.

pub mod bounds;
pub mod complexity;
pub mod data;
pub mod deform;
pub mod error;
pub mod graph;
pub mod kernel;
pub mod learner;
pub mod linalg;

pub use data::Dataset;
pub use deform::{build_deformed, DeformOperators, DeformedKernel};
pub use error::{Error, Result};
pub use graph::{laplacian, manifold_penalty, weight_matrix, GraphLaplacian};
pub use kernel::{bandwidth_to_sigma, cross_gram, gram, GramMatrix, KernelSpec};
