//! Geographically weighted Poisson regression toolkit.
//!
//! Implements the conventional (quasi-)GWPR estimator, its linearized
//! single-loop variant (L-GWPR) with ridge-regularized and local-psi
//! extensions, global Poisson baselines, LOOCV and AICc bandwidth
//! selection, inference diagnostics, CSV ingestion/export, and a Monte
//! Carlo harness for accuracy and timing comparisons.
//!
//! All estimator math is generic over the floating-point type through
//! [`Scalar`]; the concrete `f64` aliases below are what the CLI and the
//! simulation harness use.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod glm;
pub mod gwpr;
pub mod io;
pub mod kernel;
pub mod lgwpr;
pub mod selection;
pub mod simulate;

mod linalg;
mod scalar;
#[cfg(test)]
pub(crate) mod testutil;

pub use error::{DataError, FitError};
pub use scalar::Scalar;

/// `f64` concrete aliases for the common types.
pub type Dataset = data::Dataset<f64>;
pub type KernelSpec = kernel::KernelSpec<f64>;
pub type GlmFit = glm::GlmFit<f64>;
pub type LocalFit = gwpr::LocalFit<f64>;
pub type ModelFit = gwpr::ModelFit<f64>;
pub type LgwprConfig = lgwpr::LgwprConfig<f64>;
pub type SelectionResult = selection::SelectionResult<f64>;
pub type SearchSettings = selection::SearchSettings<f64>;
pub type SignificanceTable = diagnostics::SignificanceTable<f64>;
