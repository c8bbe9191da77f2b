//! Selective-labels experiment pipeline for legal judgment prediction.
//!
//! Cases decided by a *determinate* authority carry ground-truth labels; cases
//! decided by an *indeterminate* authority carry labels that could have been
//! overturned. The crate builds datasets from both, applies nine label
//! imputation strategies, trains a weighted soft-target logistic model per
//! strategy and balanced training set, and measures how the strategy changes
//! model behaviour. A synthetic world generator supplies counterfactual
//! outcomes so the same pipeline can be scored against known ground truth.
//!
//! Data-parallel loops (the method × set grid, nearest-neighbour search,
//! gradient accumulation) run on rayon when the `parallel` feature is enabled
//! and fall back to plain iterators otherwise. Results are bitwise identical
//! either way.

pub mod classifier;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod imputation;
pub mod parallel;
pub mod synthetic;

pub use error::{Error, Result};
