//! Mobility and transmission analysis for epidemic surveillance data.
//!
//! The crate covers the whole chain from origin-destination trip tables to
//! a functional regression of the reproduction number on mobility:
//!
//! - [`od`]: flow ingestion, hierarchical aggregation, per-unit mobility series
//! - [`rt`]: renewal-equation estimation of R_t by Metropolis-Hastings
//! - [`fda`]: B-spline smoothing with GCV, covariance components, shift registration
//! - [`fof`]: function-on-function regression with pointwise bands
//! - [`analysis`]: delay in mobility reduction and its correlation with incidence
//! - [`synth`]: synthetic ensembles with known ground truth
//! - [`pipeline`]: file-based stages, manifests and SVG reports behind the `epimob` binary

pub mod analysis;
pub mod error;
pub mod fda;
pub mod fof;
pub mod od;
pub mod pipeline;
pub mod rt;
pub mod series;
pub mod synth;

pub use error::{Error, Result};
