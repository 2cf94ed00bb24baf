//! Synthetic data with both potential outcomes, brute-force truths, and
//! seeded Monte Carlo studies of the estimators.

pub mod dgp;
pub mod generate;
pub mod montecarlo;
pub mod rng;
pub mod truth;

pub use dgp::{Dependence, DgpSpec, XDist};
pub use generate::{generate, generate_with, psi_tilde, true_sample_estimands, PotentialDataset};
pub use montecarlo::{run_monte_carlo, McConfig, McKindStats, McReport, NuisanceMode, OrderingVerdict};
pub use truth::{
    covariate_truth, fh_sharpness_oracle, oracle_asymptotic_variances, psi_patt_true, psi_tau_true_and_var, McValue,
    OracleVariances, TauTruth,
};
