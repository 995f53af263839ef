//! Simulation and analytics for branching jump-diffusions modelling parasite
//! loads in a population of dividing and dying cells.
//!
//! The crate is split into:
//! - [`model`]: parametric laws, policies, sharing kernels and assumption checks;
//! - [`dynamics`]: single-cell trait integration and assumption probes;
//! - [`population`]: event-driven simulation of the whole cell population;
//! - [`spine`]: the auxiliary "typical cell" processes;
//! - [`analytics`]: closed-form exponents, regimes, moments and `G_a`;
//! - [`montecarlo`]: seeded replication, estimators and statistical tests.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod dynamics;
pub mod error;
pub mod model;
pub mod montecarlo;
pub mod numeric;
pub mod population;
pub mod spine;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
