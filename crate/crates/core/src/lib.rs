//! Estimation and inference for the average treatment effect on the treated
//! and its sample, conditional and mixed variants.
//!
//! A single doubly robust point estimate serves six estimands. What changes
//! between them is the target and therefore the asymptotic variance:
//!
//! | estimand | interpretation | variance estimator |
//! |----------|----------------|--------------------|
//! | `patt`   | both           | [`estimator::var_patt`] |
//! | `actt`   | figurative     | [`estimator::var_actt`] |
//! | `swatt`  | figurative     | conservative, see [`estimator::swatt_conservative`] |
//! | `catt`   | literal        | [`estimator::var_catt`] |
//! | `satt`   | literal        | [`estimator::var_satt`] |
//! | `matt`   | literal        | [`estimator::var_matt`] |
//!
//! The [`simulation`] module generates data with both potential outcomes so
//! the realized sample estimands are known, and checks coverage, variance
//! consistency and the variance ordering by Monte Carlo.

pub mod cli;
pub mod data;
pub mod error;
pub mod estimator;
pub mod json;
pub mod nuisance;
pub mod report;
pub mod simulation;

pub use data::{validate, Covariates, Dataset, EstimandKind, IfComponents, NuisanceValues, OutcomeKind, Taxonomy};
pub use error::{Error, ErrorCategory, Result};
pub use estimator::{estimate_all, EstimateConfig, VarianceBundle};
pub use nuisance::{compute_nuisances, NuisanceConfig, NuisanceNeeds, OracleNuisances};
pub use report::EstimateReport;
