//! Seeded replication studies.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{DgpSpec, PI_CLIP};
use super::generate::{generate_with, psi_tilde, true_sample_estimands, PotentialDataset};
use super::rng::{domain, stream_rng};
use super::truth::{covariate_truth, McValue};
use crate::data::{EstimandKind, NuisanceValues};
use crate::error::{Error, Result};
use crate::estimator::{estimate_with_nuisances, EstimateConfig};
use crate::nuisance::{compute_nuisances, NuisanceConfig};
use crate::report::{EstimateReport, KindVariance};

/// Where each replication's nuisances come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuisanceMode {
    /// The generator's true functions.
    Oracle,
    /// Fitted per replication; the fold seed is offset by the replication index.
    Fitted(NuisanceConfig),
    /// True functions with deliberately wrong ones swapped in. A wrong
    /// propensity flips the sign of every slope; a wrong outcome model adds
    /// `1 + sum(x)` to both arm means.
    Misspecified { wrong_propensity: bool, wrong_outcome: bool },
}

impl NuisanceMode {
    pub fn label(&self) -> String {
        match self {
            NuisanceMode::Oracle => "oracle".into(),
            NuisanceMode::Fitted(c) => format!("fitted({})", c.method_label()),
            NuisanceMode::Misspecified {
                wrong_propensity,
                wrong_outcome,
            } => format!("misspecified(propensity={wrong_propensity},outcome={wrong_outcome})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub ci_level: f64,
    pub nuisance: NuisanceMode,
    /// Covariate draws for the population value of `patt`.
    pub truth_draws: u64,
}

impl McConfig {
    pub fn new(n: usize, reps: usize, seed: u64) -> Self {
        Self {
            n,
            reps,
            seed,
            ci_level: 0.95,
            nuisance: NuisanceMode::Oracle,
            truth_draws: 1_000_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidConfig("reps must be at least 1".into()));
        }
        if self.n < 2 {
            return Err(Error::InvalidConfig(format!("n must be at least 2, got {}", self.n)));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::InvalidConfig(format!("ci_level must lie in (0, 1), got {}", self.ci_level)));
        }
        if let NuisanceMode::Fitted(c) = &self.nuisance {
            c.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McKindStats {
    pub target_mean: f64,
    pub mean_error: f64,
    pub mean_error_se: f64,
    /// `n * Var(psi_hat - psi*)` over replications (divisor `reps - 1`).
    pub empirical_var_scaled: f64,
    pub empirical_var_scaled_se: f64,
    pub mean_variance_estimate: f64,
    pub mean_variance_estimate_se: f64,
    pub coverage: f64,
    pub ci_level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwattVariantMeans {
    pub conservative_simple: f64,
    pub conservative_sigma: Option<f64>,
    pub conservative_fh: Option<f64>,
    pub fh_alt: Option<f64>,
    /// Replications in which some conservative variance was floored at zero.
    pub floored_reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauStats {
    pub tau_true: f64,
    pub mean_error: f64,
    pub empirical_var_scaled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TildeStats {
    /// Root mean square of `sqrt(n) (psi_hat - psi_tilde)`.
    pub rms_scaled_gap: f64,
    pub max_abs_scaled_gap: f64,
}

/// One comparison of scaled error variances, `lhs <= rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingVerdict {
    pub relation: String,
    pub lhs: f64,
    pub rhs: f64,
    pub diff: f64,
    pub diff_se: f64,
    /// `diff <= 3 * diff_se`.
    pub holds: bool,
    /// Part of the general partial order, as opposed to a scenario check.
    pub general: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub schema_version: u32,
    pub spec: DgpSpec,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub ci_level: f64,
    pub nuisance: String,
    pub psi_patt_true: McValue,
    pub estimands: BTreeMap<EstimandKind, McKindStats>,
    pub swatt_variants: SwattVariantMeans,
    pub psi_tau: TauStats,
    pub psi_tilde: TildeStats,
    pub failures: usize,
    pub failure_messages: Vec<String>,
    pub ordering: Vec<OrderingVerdict>,
    #[serde(skip)]
    errors: BTreeMap<EstimandKind, Vec<f64>>,
}

/// What one replication contributes.
#[derive(Debug, Clone)]
struct RepRecord {
    targets: BTreeMap<EstimandKind, f64>,
    report: EstimateReport,
    tau_hat: f64,
    tilde_gap: f64,
}

fn wrong_outcome_shift(x: &[f64]) -> f64 {
    1.0 + x.iter().sum::<f64>()
}

fn misspecified(spec: &DgpSpec, pd: &PotentialDataset, wrong_pi: bool, wrong_mu: bool) -> Result<NuisanceValues> {
    let truth = &pd.true_nuisances;
    let x = pd.dataset.x();
    let n = pd.dataset.n();
    let mut pi = truth.pi().to_vec();
    let mut mu0 = truth.mu0().to_vec();
    let mut mu1 = truth.mu1().expect("generated data carries mu1").to_vec();
    let flipped: Vec<f64> = spec
        .propensity_coeffs
        .iter()
        .enumerate()
        .map(|(j, &c)| if j == 0 { c } else { -c })
        .collect();
    let wrong_spec = DgpSpec {
        propensity_coeffs: flipped,
        ..spec.clone()
    };
    let mut row = vec![0.0; x.ncols()];
    for i in 0..n {
        x.row_into(i, &mut row);
        if wrong_pi {
            pi[i] = wrong_spec.propensity(&row).clamp(PI_CLIP, 1.0 - PI_CLIP);
        }
        if wrong_mu {
            let s = wrong_outcome_shift(&row);
            mu0[i] += s;
            mu1[i] += s;
        }
    }
    let sigma = truth.sigma0().zip(truth.sigma1()).map(|(a, b)| (a.to_vec(), b.to_vec()));
    NuisanceValues::new(pi, mu0, Some(mu1), sigma, truth.clip_eps())
}

fn one_rep(spec: &DgpSpec, cfg: &McConfig, psi_patt: f64, r: usize) -> Result<RepRecord> {
    let mut rng = stream_rng(cfg.seed, domain::REPLICATION, r as u64);
    let pd = generate_with(spec, cfg.n, &mut rng)?;
    let targets = true_sample_estimands(&pd, psi_patt)?;
    let ds = &pd.dataset;
    let nuis = match &cfg.nuisance {
        NuisanceMode::Oracle => pd.true_nuisances.clone(),
        NuisanceMode::Fitted(c) => {
            let c = NuisanceConfig {
                seed: c.seed.wrapping_add(r as u64),
                ..c.clone()
            };
            let ec = EstimateConfig {
                nuisance: c.clone(),
                ci_level: cfg.ci_level,
                estimands: EstimandKind::ALL.to_vec(),
            };
            compute_nuisances(ds, &c, None, ec.needs(ds.outcome_kind()))?
        }
        NuisanceMode::Misspecified {
            wrong_propensity,
            wrong_outcome,
        } => misspecified(spec, &pd, *wrong_propensity, *wrong_outcome)?,
    };
    let report = estimate_with_nuisances(ds, &nuis, cfg.ci_level, &EstimandKind::ALL)?;

    // treated mean of Y0 by the same augmented weighting
    let (pi, mu0) = (nuis.pi(), nuis.mu0());
    let sum: f64 = (0..ds.n())
        .map(|i| {
            let a = ds.a(i);
            a * mu0[i] + pi[i] * (1.0 - a) * (ds.y()[i] - mu0[i]) / (1.0 - pi[i])
        })
        .sum();
    let tau_hat = sum / ds.n_treated() as f64;
    let tilde_gap = (cfg.n as f64).sqrt() * (report.psi_hat - psi_tilde(&pd)?);
    Ok(RepRecord {
        targets,
        report,
        tau_hat,
        tilde_gap,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample variance (divisor `len - 1`); NaN for fewer than two values.
fn var_unbiased(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return f64::NAN;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

fn se_of_mean(v: &[f64]) -> f64 {
    (var_unbiased(v) / v.len() as f64).sqrt()
}

fn scaled_sq_dev(e: &[f64], n: f64) -> Vec<f64> {
    let m = mean(e);
    e.iter().map(|x| n * (x - m).powi(2)).collect()
}

/// Difference of scaled error variances with a paired standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceComparison {
    pub lhs: f64,
    pub rhs: f64,
    pub diff: f64,
    pub diff_se: f64,
}

impl McReport {
    /// Per-replication `psi_hat - psi*` for `kind`, in replication order
    /// (successful replications only).
    pub fn errors(&self, kind: EstimandKind) -> &[f64] {
        self.errors.get(&kind).map_or(&[], Vec::as_slice)
    }

    pub fn stats(&self, kind: EstimandKind) -> &McKindStats {
        &self.estimands[&kind]
    }

    /// `n Var(lhs errors) - n Var(rhs errors)`, paired across replications.
    pub fn compare(&self, lhs: EstimandKind, rhs: EstimandKind) -> VarianceComparison {
        let n = self.n as f64;
        let (e1, e2) = (self.errors(lhs), self.errors(rhs));
        let d1 = scaled_sq_dev(e1, n);
        let d2 = scaled_sq_dev(e2, n);
        let diffs: Vec<f64> = d1.iter().zip(&d2).map(|(a, b)| a - b).collect();
        let (l, r) = (self.stats(lhs).empirical_var_scaled, self.stats(rhs).empirical_var_scaled);
        VarianceComparison {
            lhs: l,
            rhs: r,
            diff: l - r,
            diff_se: se_of_mean(&diffs),
        }
    }

    /// One-line summary of the partial-order checks.
    pub fn ordering_summary(&self) -> String {
        let parts: Vec<String> = self
            .ordering
            .iter()
            .map(|v| format!("{} {}", v.relation, if v.holds { "ok" } else { "VIOLATED" }))
            .collect();
        let all = self.ordering.iter().filter(|v| v.general).all(|v| v.holds);
        format!(
            "ordering {}: {}",
            if all { "consistent" } else { "inconsistent" },
            parts.join("; ")
        )
    }

    pub fn to_json(&self) -> String {
        crate::json::to_string_pretty(self)
    }
}

pub fn run_monte_carlo(spec: &DgpSpec, cfg: &McConfig) -> Result<McReport> {
    spec.validate()?;
    cfg.validate()?;
    let cov = covariate_truth(spec, cfg.truth_draws, cfg.seed)?;
    let psi_patt = cov.psi_patt.value;

    let outcomes: Vec<Result<RepRecord>> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| one_rep(spec, cfg, psi_patt, r))
        .collect();

    let mut records = Vec::with_capacity(cfg.reps);
    let mut failure_messages = Vec::new();
    let mut failures = 0;
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(rec) => records.push(rec),
            Err(e) => {
                failures += 1;
                if failure_messages.len() < 10 {
                    failure_messages.push(format!("replication {r}: [{}] {e}", e.code()));
                }
            }
        }
    }
    if records.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "all {} replications failed; first: {}",
            cfg.reps,
            failure_messages.first().map_or("", String::as_str)
        )));
    }

    let n = cfg.n as f64;
    let mut estimands = BTreeMap::new();
    let mut errors = BTreeMap::new();
    for kind in EstimandKind::ALL {
        let err: Vec<f64> = records.iter().map(|r| r.report.psi_hat - r.targets[&kind]).collect();
        let targets: Vec<f64> = records.iter().map(|r| r.targets[&kind]).collect();
        let v_est: Vec<f64> = records.iter().map(|r| r.report.estimands[&kind].variance.used()).collect();
        let hits = records
            .iter()
            .filter(|r| {
                let e = &r.report.estimands[&kind];
                let t = r.targets[&kind];
                e.ci_lower <= t && t <= e.ci_upper
            })
            .count();
        let sq = scaled_sq_dev(&err, n);
        estimands.insert(
            kind,
            McKindStats {
                target_mean: mean(&targets),
                mean_error: mean(&err),
                mean_error_se: se_of_mean(&err),
                empirical_var_scaled: n * var_unbiased(&err),
                empirical_var_scaled_se: se_of_mean(&sq),
                mean_variance_estimate: mean(&v_est),
                mean_variance_estimate_se: se_of_mean(&v_est),
                coverage: hits as f64 / records.len() as f64,
                ci_level: cfg.ci_level,
            },
        );
        errors.insert(kind, err);
    }

    let conservative = |f: fn(&crate::report::ConservativeVariance) -> Option<f64>| -> Option<f64> {
        let vals: Option<Vec<f64>> = records
            .iter()
            .map(|r| match &r.report.estimands[&EstimandKind::Swatt].variance {
                KindVariance::Conservative(c) => f(c),
                KindVariance::Point(_) => None,
            })
            .collect();
        vals.map(|v| mean(&v))
    };
    let fh_alt: Option<Vec<f64>> = records.iter().map(|r| r.report.diagnostics.swatt_fh_alt).collect();
    let swatt_variants = SwattVariantMeans {
        conservative_simple: conservative(|c| Some(c.conservative_simple)).unwrap_or(f64::NAN),
        conservative_sigma: conservative(|c| c.conservative_sigma),
        conservative_fh: conservative(|c| c.conservative_fh),
        fh_alt: fh_alt.map(|v| mean(&v)),
        floored_reps: records.iter().filter(|r| !r.report.diagnostics.floored.is_empty()).count(),
    };

    let tau_err: Vec<f64> = records.iter().map(|r| r.tau_hat - cov.tau.value).collect();
    let gaps: Vec<f64> = records.iter().map(|r| r.tilde_gap).collect();

    let mut report = McReport {
        schema_version: 1,
        spec: spec.clone(),
        n: cfg.n,
        reps: cfg.reps,
        seed: cfg.seed,
        ci_level: cfg.ci_level,
        nuisance: cfg.nuisance.label(),
        psi_patt_true: cov.psi_patt,
        estimands,
        swatt_variants,
        psi_tau: TauStats {
            tau_true: cov.tau.value,
            mean_error: mean(&tau_err),
            empirical_var_scaled: n * var_unbiased(&tau_err),
        },
        psi_tilde: TildeStats {
            rms_scaled_gap: (gaps.iter().map(|g| g * g).sum::<f64>() / gaps.len() as f64).sqrt(),
            max_abs_scaled_gap: gaps.iter().fold(0.0f64, |m, g| m.max(g.abs())),
        },
        failures,
        failure_messages,
        ordering: Vec::new(),
        errors,
    };

    use EstimandKind::*;
    let checks = [
        (Matt, Catt, true),
        (Catt, Actt, true),
        (Actt, Patt, true),
        (Swatt, Actt, true),
        (Satt, Patt, false),
    ];
    report.ordering = checks
        .iter()
        .map(|&(l, r, general)| {
            let c = report.compare(l, r);
            OrderingVerdict {
                relation: format!("{l} <= {r}"),
                lhs: c.lhs,
                rhs: c.rhs,
                diff: c.diff,
                diff_se: c.diff_se,
                holds: c.diff <= 3.0 * c.diff_se || c.diff <= 0.0,
                general,
            }
        })
        .collect();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::estimate_with_nuisances;

    fn small() -> McConfig {
        McConfig {
            truth_draws: 50_000,
            ..McConfig::new(300, 1, 17)
        }
    }

    #[test]
    fn single_rep_matches_direct_estimate() {
        let spec = DgpSpec::example(2);
        let cfg = small();
        let rep = run_monte_carlo(&spec, &cfg).unwrap();
        let pd = generate_with(&spec, 300, &mut stream_rng(17, domain::REPLICATION, 0)).unwrap();
        let direct = estimate_with_nuisances(&pd.dataset, &pd.true_nuisances, 0.95, &EstimandKind::ALL).unwrap();
        let truth = rep.psi_patt_true.value;
        assert_eq!(rep.errors(EstimandKind::Patt), &[direct.psi_hat - truth]);
        assert_eq!(rep.reps, 1);
        assert!(rep.stats(EstimandKind::Patt).empirical_var_scaled.is_nan());
    }

    #[test]
    fn reports_are_reproducible() {
        let spec = DgpSpec::example(2);
        let cfg = McConfig { reps: 8, ..small() };
        let a = run_monte_carlo(&spec, &cfg).unwrap();
        let b = run_monte_carlo(&spec, &cfg).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        for s in a.estimands.values() {
            assert!((0.0..=1.0).contains(&s.coverage));
        }
    }

    #[test]
    fn failed_replications_are_counted() {
        let mut spec = DgpSpec::example(1);
        // almost nobody treated: tiny samples often have no treated unit
        spec.propensity_coeffs = vec![-10.0, 0.0];
        let cfg = McConfig {
            n: 20,
            reps: 40,
            ..small()
        };
        let rep = run_monte_carlo(&spec, &cfg).unwrap();
        assert!(rep.failures > 0);
        assert_eq!(rep.failures + rep.errors(EstimandKind::Patt).len(), 40);
        assert!(!rep.failure_messages.is_empty());
    }

    #[test]
    fn config_validation() {
        let spec = DgpSpec::example(1);
        assert!(run_monte_carlo(&spec, &McConfig { reps: 0, ..small() }).is_err());
        assert!(run_monte_carlo(&spec, &McConfig { ci_level: 1.0, ..small() }).is_err());
    }
}
