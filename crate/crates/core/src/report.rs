//! Structured estimation output.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{EstimandKind, Taxonomy};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservativeVariance {
    /// Smallest available choice; drives the interval.
    pub used: f64,
    pub conservative_simple: f64,
    pub conservative_sigma: Option<f64>,
    pub conservative_fh: Option<f64>,
}

/// A point variance estimate, or a set of conservative upper bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KindVariance {
    Point(f64),
    Conservative(ConservativeVariance),
}

impl KindVariance {
    pub fn used(&self) -> f64 {
        match self {
            KindVariance::Point(v) => *v,
            KindVariance::Conservative(c) => c.used,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindEstimate {
    pub taxonomy: Taxonomy,
    pub variance: KindVariance,
    pub std_error: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub nuisance_method: String,
    pub folds: usize,
    pub clip_eps: f64,
    /// Fold-assignment seed, present only when cross-fitting.
    pub seed: Option<u64>,
    pub v_sigma_bound: Option<f64>,
    pub v_fh_bound: Option<f64>,
    /// FH-based variant scaled by `Pn(A)^-1`; reported, never used.
    pub swatt_fh_alt: Option<f64>,
    /// Conservative variances that went negative and were floored at zero.
    pub floored: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub schema_version: u32,
    pub psi_hat: f64,
    pub n: usize,
    /// Treated fraction.
    pub p_n_a: f64,
    pub ci_level: f64,
    pub estimands: BTreeMap<EstimandKind, KindEstimate>,
    pub diagnostics: Diagnostics,
}

impl EstimateReport {
    pub fn get(&self, kind: EstimandKind) -> Option<&KindEstimate> {
        self.estimands.get(&kind)
    }

    pub fn variance(&self, kind: EstimandKind) -> Option<f64> {
        self.get(kind).map(|e| e.variance.used())
    }

    pub fn to_json(&self) -> String {
        crate::json::to_string_pretty(self)
    }
}
