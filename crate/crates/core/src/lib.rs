//! Homogeneity testing and regional pooling for nonstationary GEV block maxima.
//!
//! The crate fits a scale-GEV model per location, tests whether locations
//! share a common distribution with bootstrap-calibrated Wald statistics,
//! corrects the resulting p-values for multiplicity and estimates local and
//! regional return levels on the pooled fit.

pub mod bootstrap;
pub mod dependence;
pub mod error;
pub mod fit;
pub mod gev;
pub mod gof;
pub mod linalg;
pub mod multitest;
pub mod optim;
pub mod panel;
pub mod return_levels;
pub mod seed;
pub mod sim;
pub mod uncertainty;
pub mod wald;

pub use error::{Error, Result};
