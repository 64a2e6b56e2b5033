//! Age estimation from aligned grayscale faces.
//!
//! The pipeline extracts dense GLOH descriptors ([`gloh`]), selects a small set
//! of informative histogram bins with a multi-task l2,1-regularized least
//! squares fit ([`mtl`]), refits per-task ridge regressors on those bins
//! ([`ridge`]) and evaluates the result leave-one-person-out ([`dataset`],
//! [`metrics`], [`pipeline`]).
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix the precision used by the command-line tool.

pub mod dataset;
pub mod gloh;
pub mod imageio;
pub mod metrics;
pub mod mtl;
pub mod pipeline;
pub mod ridge;
mod scalar;

pub use scalar::Real;

pub type FeatureVector64 = gloh::FeatureVector<f64>;
pub type FeatureVector32 = gloh::FeatureVector<f32>;
pub type GradientField64 = gloh::GradientField<f64>;
pub type TaskDataset64 = mtl::TaskDataset<f64>;
pub type TaskDataset32 = mtl::TaskDataset<f32>;
pub type WeightMatrix64 = mtl::WeightMatrix<f64>;
pub type WeightMatrix32 = mtl::WeightMatrix<f32>;
pub type SelectionResult64 = mtl::SelectionResult<f64>;
pub type SelectionResult32 = mtl::SelectionResult<f32>;
pub type RidgeModel64 = ridge::RidgeModel<f64>;
