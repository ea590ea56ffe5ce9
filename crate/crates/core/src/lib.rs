//! Sparse coding with a second, invariant layer that pools first-layer
//! codes over time, inferred by hierarchical proximal gradient descent.
//!
//! The modules follow the pipeline: [`energy`] defines the layered
//! objectives, [`solver`] minimizes them, [`learning`] fits dictionaries,
//! [`datagen`] produces patches and stimuli, [`analysis`] measures trained
//! units and [`experiments`] wires these into complete runs.

// Parameter checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod datagen;
pub mod dictionary;
pub mod energy;
pub mod error;
pub mod experiments;
pub mod learning;
pub mod solver;

pub use dictionary::Dictionary;
pub use energy::{HierarchicalEnergy, InvariantProblem, LayerSpec, SignConstraint, SparseCodingProblem, UnifiedProblem};
pub use error::{Error, Result};
pub use learning::{Codes, Model, ModelKind, TrainOptions};
pub use solver::{CodeState, Momentum, SolverOptions, SolverTrace};
