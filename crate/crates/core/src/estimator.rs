//! Point estimate, influence-function components and the variance
//! estimators for each estimand.
//!
//! All "sample variances" use divisor `n`, matching empirical-measure
//! averages. Variances are on the asymptotic scale: the standard error of
//! the point estimate is `sqrt(V / n)`.

use std::collections::BTreeMap;

use crate::data::{indicator, Dataset, EstimandKind, IfComponents, NuisanceValues, OutcomeKind};
use crate::error::{Error, Result};
use crate::nuisance::{compute_nuisances, NuisanceConfig, NuisanceNeeds, OracleNuisances};
use crate::report::{ConservativeVariance, Diagnostics, EstimateReport, KindEstimate, KindVariance, SCHEMA_VERSION};

/// Mean with divisor `n`.
pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Two-pass sample variance with divisor `n`.
pub fn sample_variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
}

fn check(dataset: &Dataset, nuis: &NuisanceValues) -> Result<f64> {
    nuis.check_matches(dataset)?;
    let abar = dataset.treated_fraction();
    if abar == 0.0 {
        return Err(Error::DegenerateTreatment("no treated units".into()));
    }
    Ok(abar)
}

/// The estimating-equation estimator with an explicit treated fraction.
pub fn psi_hat_from_parts(y: &[f64], treated: &[bool], pi: &[f64], mu0: &[f64], abar: f64) -> Result<f64> {
    if abar == 0.0 {
        return Err(Error::DegenerateTreatment("treated fraction is zero".into()));
    }
    let n = y.len();
    let total: f64 = (0..n)
        .map(|i| (indicator(treated[i]) - pi[i]) * (y[i] - mu0[i]) / (abar * (1.0 - pi[i])))
        .sum();
    Ok(total / n as f64)
}

/// `Pn[(A - pi)(Y - mu0) / (Pn(A) (1 - pi))]`.
pub fn estimate_psi_hat(dataset: &Dataset, nuis: &NuisanceValues) -> Result<f64> {
    let abar = check(dataset, nuis)?;
    psi_hat_from_parts(dataset.y(), dataset.treated(), nuis.pi(), nuis.mu0(), abar)
}

/// Per-unit plug-in influence function from its closed form; needs no `mu1`.
pub fn psi_dot_closed_form(dataset: &Dataset, nuis: &NuisanceValues, psi_hat: f64) -> Result<Vec<f64>> {
    let abar = check(dataset, nuis)?;
    let (y, pi, mu0) = (dataset.y(), nuis.pi(), nuis.mu0());
    Ok((0..dataset.n())
        .map(|i| {
            let a = dataset.a(i);
            (a - pi[i]) * (y[i] - mu0[i]) / (abar * (1.0 - pi[i])) - a * psi_hat / abar
        })
        .collect())
}

/// Outcome component of the treated-control-mean influence function.
pub fn tau_y(dataset: &Dataset, nuis: &NuisanceValues) -> Result<Vec<f64>> {
    let abar = check(dataset, nuis)?;
    let (y, pi, mu0) = (dataset.y(), nuis.pi(), nuis.mu0());
    Ok((0..dataset.n())
        .map(|i| (y[i] - mu0[i]) * (1.0 - dataset.a(i)) * pi[i] / (abar * (1.0 - pi[i])))
        .collect())
}

pub fn if_components(dataset: &Dataset, nuis: &NuisanceValues, psi_hat: f64) -> Result<IfComponents> {
    let abar = check(dataset, nuis)?;
    let mu1 = nuis.mu1().ok_or(Error::MissingMu1)?;
    let (y, pi, mu0) = (dataset.y(), nuis.pi(), nuis.mu0());
    let n = dataset.n();
    let mut out = IfComponents {
        psi_y: Vec::with_capacity(n),
        psi_a: Vec::with_capacity(n),
        psi_x: Vec::with_capacity(n),
        tau_y: Vec::with_capacity(n),
    };
    for i in 0..n {
        let a = dataset.a(i);
        let odds = pi[i] / (1.0 - pi[i]);
        let mu_obs = if dataset.treated()[i] { mu1[i] } else { mu0[i] };
        let contrast = mu1[i] - mu0[i] - psi_hat;
        out.psi_y.push((y[i] - mu_obs) * (a - (1.0 - a) * odds) / abar);
        out.psi_a.push((a - pi[i]) * contrast / abar);
        out.psi_x.push(pi[i] * contrast / abar);
        out.tau_y.push((y[i] - mu0[i]) * (1.0 - a) * odds / abar);
    }
    Ok(out)
}

pub fn var_patt(dataset: &Dataset, nuis: &NuisanceValues, psi_hat: f64) -> Result<f64> {
    Ok(sample_variance(&psi_dot_closed_form(dataset, nuis, psi_hat)?))
}

pub fn var_actt(dataset: &Dataset, nuis: &NuisanceValues, psi_hat: f64) -> Result<f64> {
    let c = if_components(dataset, nuis, psi_hat)?;
    let s: Vec<f64> = c.psi_y.iter().zip(&c.psi_a).map(|(y, a)| y + a).collect();
    Ok(sample_variance(&s))
}

pub fn var_catt(dataset: &Dataset, nuis: &NuisanceValues) -> Result<f64> {
    // the outcome component does not involve the point estimate
    let c = if_components(dataset, nuis, 0.0)?;
    Ok(sample_variance(&c.psi_y))
}

pub fn var_matt(dataset: &Dataset, nuis: &NuisanceValues) -> Result<f64> {
    Ok(sample_variance(&tau_y(dataset, nuis)?))
}

/// `Pn[pi (1 - A) / (1 - pi)^2 * ((Y - mu0) / Pn(A))^2]`.
pub fn var_satt(dataset: &Dataset, nuis: &NuisanceValues) -> Result<f64> {
    let abar = check(dataset, nuis)?;
    let (y, pi, mu0) = (dataset.y(), nuis.pi(), nuis.mu0());
    let total: f64 = (0..dataset.n())
        .map(|i| {
            let r = (y[i] - mu0[i]) / abar;
            pi[i] * (1.0 - dataset.a(i)) / (1.0 - pi[i]).powi(2) * r * r
        })
        .sum();
    Ok(total / dataset.n() as f64)
}

/// `Pn(A)^-2 Pn[pi^2 (sigma1 - sigma0)^2]`, a consistent estimate of a lower
/// bound on the term that separates the swatt variance from the actt one.
pub fn var_sigma_bound(dataset: &Dataset, nuis: &NuisanceValues) -> Result<f64> {
    let abar = check(dataset, nuis)?;
    let (s0, s1) = nuis.sigma0().zip(nuis.sigma1()).ok_or(Error::MissingSigma)?;
    let pi = nuis.pi();
    let total: f64 = (0..dataset.n()).map(|i| (pi[i] * (s1[i] - s0[i])).powi(2)).sum();
    Ok(total / dataset.n() as f64 / (abar * abar))
}

/// `Pn[pi^2 (|d| - d^2)]` with `d = mu1 - mu0`, both means clamped to [0, 1].
/// Only defined for outcomes declared binary.
pub fn var_fh_binary(dataset: &Dataset, nuis: &NuisanceValues) -> Result<f64> {
    if dataset.outcome_kind() != OutcomeKind::Binary {
        return Err(Error::NotBinaryOutcome);
    }
    nuis.check_matches(dataset)?;
    let mu1 = nuis.mu1().ok_or(Error::MissingMu1)?;
    Ok(fh_term_mean(nuis.pi(), nuis.mu0(), mu1))
}

pub(crate) fn fh_term(pi: f64, mu0: f64, mu1: f64) -> f64 {
    let d = (mu1.clamp(0.0, 1.0) - mu0.clamp(0.0, 1.0)).abs();
    pi * pi * (d - d * d)
}

fn fh_term_mean(pi: &[f64], mu0: &[f64], mu1: &[f64]) -> f64 {
    let total: f64 = (0..pi.len()).map(|i| fh_term(pi[i], mu0[i], mu1[i])).sum();
    total / pi.len() as f64
}

/// Conservative variance choices for the sample weighted estimand.
#[derive(Debug, Clone, PartialEq)]
pub struct SwattConservative {
    pub simple: f64,
    pub sigma: Option<f64>,
    pub fh: Option<f64>,
    /// FH variant scaling the bound by `Pn(A)^-1` instead of `Pn(A)^-2`.
    pub fh_alt: Option<f64>,
    pub sigma_floored: bool,
    pub fh_floored: bool,
    pub fh_alt_floored: bool,
}

impl SwattConservative {
    /// Smallest of the available conservative variances (`fh_alt` excluded).
    pub fn smallest(&self) -> f64 {
        [Some(self.simple), self.sigma, self.fh]
            .into_iter()
            .flatten()
            .fold(f64::INFINITY, f64::min)
    }
}

fn floor_at_zero(v: f64) -> (f64, bool) {
    if v < 0.0 {
        (0.0, true)
    } else {
        (v, false)
    }
}

pub fn swatt_conservative(v_actt: f64, v_sigma: Option<f64>, v_fh: Option<f64>, abar: f64) -> SwattConservative {
    let sigma = v_sigma.map(|s| floor_at_zero(v_actt - s));
    let fh = v_fh.map(|f| floor_at_zero(v_actt - f / (abar * abar)));
    let fh_alt = v_fh.map(|f| floor_at_zero(v_actt - f / abar));
    SwattConservative {
        simple: v_actt,
        sigma: sigma.map(|s| s.0),
        fh: fh.map(|s| s.0),
        fh_alt: fh_alt.map(|s| s.0),
        sigma_floored: sigma.is_some_and(|s| s.1),
        fh_floored: fh.is_some_and(|s| s.1),
        fh_alt_floored: fh_alt.is_some_and(|s| s.1),
    }
}

/// Every variance estimate for one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceBundle {
    pub v_patt: f64,
    pub v_actt: f64,
    pub v_catt: f64,
    pub v_matt: f64,
    pub v_satt: f64,
    pub v_sigma_bound: Option<f64>,
    pub v_fh_bound: Option<f64>,
    pub swatt: SwattConservative,
}

impl VarianceBundle {
    /// Requires `mu1`; the sigma and FH bounds are filled in when their
    /// inputs are available.
    pub fn compute(dataset: &Dataset, nuis: &NuisanceValues, psi_hat: f64) -> Result<Self> {
        let comps = if_components(dataset, nuis, psi_hat)?;
        let total = comps.total();
        let ya: Vec<f64> = comps.psi_y.iter().zip(&comps.psi_a).map(|(y, a)| y + a).collect();
        let v_actt = sample_variance(&ya);
        let v_sigma_bound = match var_sigma_bound(dataset, nuis) {
            Ok(v) => Some(v),
            Err(Error::MissingSigma) => None,
            Err(e) => return Err(e),
        };
        let v_fh_bound = match var_fh_binary(dataset, nuis) {
            Ok(v) => Some(v),
            Err(Error::NotBinaryOutcome) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            v_patt: sample_variance(&total),
            v_actt,
            v_catt: sample_variance(&comps.psi_y),
            v_matt: sample_variance(&comps.tau_y),
            v_satt: var_satt(dataset, nuis)?,
            v_sigma_bound,
            v_fh_bound,
            swatt: swatt_conservative(v_actt, v_sigma_bound, v_fh_bound, dataset.treated_fraction()),
        })
    }

    /// Variance used for inference on `kind` (smallest conservative choice for swatt).
    pub fn for_kind(&self, kind: EstimandKind) -> f64 {
        match kind {
            EstimandKind::Patt => self.v_patt,
            EstimandKind::Actt => self.v_actt,
            EstimandKind::Swatt => self.swatt.smallest(),
            EstimandKind::Catt => self.v_catt,
            EstimandKind::Satt => self.v_satt,
            EstimandKind::Matt => self.v_matt,
        }
    }
}

/// Standard normal quantile (Wichura's AS 241, relative accuracy about 1e-16).
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_608,
        133.141_667_891_784_377_45,
        1_971.590_950_306_551_442_7,
        13_731.693_765_509_461_125,
        45_921.953_931_549_871_457,
        67_265.770_927_008_700_853,
        33_430.575_583_588_128_105,
        2_509.080_928_730_122_672_7,
    ];
    const B: [f64; 8] = [
        1.0,
        42.313_330_701_600_911_252,
        687.187_007_492_057_908_3,
        5_394.196_021_424_751_107_7,
        21_213.794_301_586_595_867,
        39_307.895_800_092_710_61,
        28_729.085_735_721_942_674,
        5_226.495_278_852_854_561,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34,
        4.630_337_846_156_545_295_9,
        5.769_497_221_460_691_405_5,
        3.647_848_324_763_204_605_04,
        1.270_458_252_452_368_382_58,
        0.241_780_725_177_450_611_77,
        0.022_723_844_989_269_184_583_3,
        7.745_450_142_783_414_076_4e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_821_87,
        1.676_384_830_183_803_849_4,
        0.689_767_334_985_100_004_55,
        0.148_103_976_427_480_074_59,
        0.015_198_666_563_616_457_196_6,
        5.475_938_084_995_344_946e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_2,
        5.463_784_911_164_114_369_9,
        1.784_826_539_917_291_335_8,
        0.296_560_571_828_504_891_23,
        0.026_532_189_526_576_123_093,
        0.001_242_660_947_388_078_438_6,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        0.599_832_206_555_887_937_69,
        0.136_929_880_922_735_805_31,
        0.014_875_361_290_850_614_852_5,
        7.868_691_311_456_132_591e-4,
        1.846_318_317_510_054_681_8e-5,
        1.421_511_758_316_445_888_7e-7,
        2.044_263_103_389_939_785_64e-15,
    ];
    fn poly(c: &[f64; 8], x: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
    }

    if p.is_nan() || p <= 0.0 || p >= 1.0 {
        return match p {
            p if p == 0.0 => f64::NEG_INFINITY,
            p if p == 1.0 => f64::INFINITY,
            _ => f64::NAN,
        };
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// Wald interval `psi_hat +/- z * sqrt(variance / n)`.
pub fn confidence_interval(psi_hat: f64, variance: f64, n: usize, level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!("confidence level must lie in (0, 1), got {level}")));
    }
    if !(variance >= 0.0) || n == 0 {
        return Err(Error::InvalidConfig(format!("invalid variance {variance} or n {n}")));
    }
    let half = normal_quantile(0.5 * (1.0 + level)) * (variance / n as f64).sqrt();
    Ok((psi_hat - half, psi_hat + half))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateConfig {
    pub nuisance: NuisanceConfig,
    pub ci_level: f64,
    pub estimands: Vec<EstimandKind>,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            nuisance: NuisanceConfig::default(),
            ci_level: 0.95,
            estimands: EstimandKind::ALL.to_vec(),
        }
    }
}

impl EstimateConfig {
    pub fn needs(&self, outcome: OutcomeKind) -> NuisanceNeeds {
        let swatt = self.estimands.contains(&EstimandKind::Swatt);
        NuisanceNeeds {
            mu1: self.estimands.iter().any(|k| k.needs_mu1()) || (swatt && outcome == OutcomeKind::Binary),
            sigma: swatt,
        }
    }
}

/// Flags control residuals far outside their interquartile range.
pub fn residual_tail_warning(dataset: &Dataset, nuis: &NuisanceValues) -> Option<String> {
    let mut r: Vec<f64> = (0..dataset.n())
        .filter(|&i| !dataset.treated()[i])
        .map(|i| dataset.y()[i] - nuis.mu0()[i])
        .collect();
    if r.len() < 4 {
        return None;
    }
    r.sort_by(f64::total_cmp);
    let quantile = |q: f64| {
        let pos = q * (r.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        r[lo] + (pos - lo as f64) * (r[hi] - r[lo])
    };
    let iqr = quantile(0.75) - quantile(0.25);
    let max_abs = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (iqr > 0.0 && max_abs > 10.0 * iqr).then(|| {
        format!("largest control residual |{max_abs:.6}| exceeds 10x the residual IQR ({iqr:.6}); heavy tails weaken the bounded-residual condition")
    })
}

/// Nuisances, point estimate, variances and intervals for every requested
/// estimand. One point estimate serves all of them.
pub fn estimate_all(dataset: &Dataset, config: &EstimateConfig, oracle: Option<&OracleNuisances>) -> Result<EstimateReport> {
    if config.estimands.is_empty() {
        return Err(Error::InvalidConfig("no estimands requested".into()));
    }
    let nuis = compute_nuisances(dataset, &config.nuisance, oracle, config.needs(dataset.outcome_kind()))?;
    let mut report = estimate_with_nuisances(dataset, &nuis, config.ci_level, &config.estimands)?;
    report.diagnostics.nuisance_method = config.nuisance.method_label();
    report.diagnostics.folds = config.nuisance.folds;
    report.diagnostics.seed = (config.nuisance.folds > 1).then_some(config.nuisance.seed);
    Ok(report)
}

/// Same as [`estimate_all`] with nuisances already in hand.
pub fn estimate_with_nuisances(
    dataset: &Dataset,
    nuis: &NuisanceValues,
    ci_level: f64,
    estimands: &[EstimandKind],
) -> Result<EstimateReport> {
    let psi_hat = estimate_psi_hat(dataset, nuis)?;
    let n = dataset.n();
    let abar = dataset.treated_fraction();
    let mut diagnostics = Diagnostics {
        nuisance_method: "supplied".into(),
        folds: 1,
        clip_eps: nuis.clip_eps(),
        seed: None,
        v_sigma_bound: None,
        v_fh_bound: None,
        swatt_fh_alt: None,
        floored: Vec::new(),
        warnings: Vec::new(),
    };
    if let Some(w) = residual_tail_warning(dataset, nuis) {
        diagnostics.warnings.push(w);
    }

    let comps = if nuis.mu1().is_some() {
        Some(if_components(dataset, nuis, psi_hat)?)
    } else {
        None
    };
    let comps_or_err = || comps.as_ref().ok_or(Error::MissingMu1);

    let mut kinds: Vec<EstimandKind> = estimands.to_vec();
    kinds.sort();
    kinds.dedup();

    let mut out = BTreeMap::new();
    for kind in kinds {
        let variance = match kind {
            EstimandKind::Patt => KindVariance::Point(var_patt(dataset, nuis, psi_hat)?),
            EstimandKind::Actt => {
                let c = comps_or_err()?;
                let s: Vec<f64> = c.psi_y.iter().zip(&c.psi_a).map(|(y, a)| y + a).collect();
                KindVariance::Point(sample_variance(&s))
            }
            EstimandKind::Catt => KindVariance::Point(sample_variance(&comps_or_err()?.psi_y)),
            EstimandKind::Satt => KindVariance::Point(var_satt(dataset, nuis)?),
            EstimandKind::Matt => KindVariance::Point(var_matt(dataset, nuis)?),
            EstimandKind::Swatt => {
                let c = comps_or_err()?;
                let s: Vec<f64> = c.psi_y.iter().zip(&c.psi_a).map(|(y, a)| y + a).collect();
                let v_actt = sample_variance(&s);
                let v_sigma = match var_sigma_bound(dataset, nuis) {
                    Ok(v) => Some(v),
                    Err(Error::MissingSigma) => None,
                    Err(e) => return Err(e),
                };
                let v_fh = match var_fh_binary(dataset, nuis) {
                    Ok(v) => Some(v),
                    Err(Error::NotBinaryOutcome) => None,
                    Err(e) => return Err(e),
                };
                let sw = swatt_conservative(v_actt, v_sigma, v_fh, abar);
                diagnostics.v_sigma_bound = v_sigma;
                diagnostics.v_fh_bound = v_fh;
                diagnostics.swatt_fh_alt = sw.fh_alt;
                if sw.sigma_floored {
                    diagnostics.floored.push("swatt_conservative_sigma".into());
                }
                if sw.fh_floored {
                    diagnostics.floored.push("swatt_conservative_fh".into());
                }
                if sw.fh_alt_floored {
                    diagnostics.floored.push("swatt_fh_alt".into());
                }
                KindVariance::Conservative(ConservativeVariance {
                    used: sw.smallest(),
                    conservative_simple: sw.simple,
                    conservative_sigma: sw.sigma,
                    conservative_fh: sw.fh,
                })
            }
        };
        let v = variance.used();
        let (ci_lower, ci_upper) = confidence_interval(psi_hat, v, n, ci_level)?;
        out.insert(
            kind,
            KindEstimate {
                taxonomy: kind.taxonomy(),
                variance,
                std_error: (v / n as f64).sqrt(),
                ci_lower,
                ci_upper,
            },
        );
    }

    Ok(EstimateReport {
        schema_version: SCHEMA_VERSION,
        psi_hat,
        n,
        p_n_a: abar,
        ci_level,
        estimands: out,
        diagnostics,
    })
}
