//! Brute-force Monte Carlo truths under the data-generating process.
//!
//! Draws are split into fixed-size chunks, each with its own keyed stream;
//! chunk sums are combined in chunk order, so results do not depend on
//! the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::DgpSpec;
use super::rng::{domain, stream_rng, StreamRng};
use crate::data::{EstimandKind, OutcomeKind};
use crate::error::{Error, Result};

const CHUNK: u64 = 1 << 16;

/// Monte Carlo value with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McValue {
    pub value: f64,
    pub se: f64,
}

/// Raw power sums of one per-draw quantity.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Sums {
    s1: f64,
    s2: f64,
    s4: f64,
}

impl Sums {
    fn push(&mut self, w: f64) {
        let w2 = w * w;
        self.s1 += w;
        self.s2 += w2;
        self.s4 += w2 * w2;
    }

    fn merge(&mut self, o: &Sums) {
        self.s1 += o.s1;
        self.s2 += o.s2;
        self.s4 += o.s4;
    }

    fn mean(&self, n: f64) -> McValue {
        let m = self.s1 / n;
        let var = (self.s2 / n - m * m).max(0.0);
        McValue {
            value: m,
            se: (var / n).sqrt(),
        }
    }

    /// Variance of the quantity; the SE uses fourth moments (mean treated as known).
    fn variance(&self, n: f64) -> McValue {
        let m = self.s1 / n;
        let m2 = self.s2 / n;
        McValue {
            value: m2 - m * m,
            se: ((self.s4 / n - m2 * m2).max(0.0) / n).sqrt(),
        }
    }
}

fn chunked<T, F, G>(draws: u64, seed: u64, dom: u64, init: impl Fn() -> T + Sync, per_draw: F, merge: G) -> T
where
    T: Send,
    F: Fn(&mut T, &mut StreamRng, &mut Vec<f64>) + Sync,
    G: Fn(&mut T, T),
{
    let chunks = draws.div_ceil(CHUNK);
    let parts: Vec<T> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, dom, c);
            let len = CHUNK.min(draws - c * CHUNK);
            let mut acc = init();
            let mut x = Vec::new();
            for _ in 0..len {
                per_draw(&mut acc, &mut rng, &mut x);
            }
            acc
        })
        .collect();
    let mut total = init();
    for p in parts {
        merge(&mut total, p);
    }
    total
}

fn check_draws(draws: u64) -> Result<()> {
    if draws < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 Monte Carlo draws, got {draws}")));
    }
    Ok(())
}

/// Population quantities that only need the covariate law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovariateTruth {
    /// `P(A = 1) = E[pi]`.
    pub p_a: McValue,
    /// `E[pi (mu1 - mu0)] / E[pi]`.
    pub psi_patt: McValue,
    /// `E[pi mu0] / E[pi]`, the treated mean of `Y0`.
    pub tau: McValue,
}

#[derive(Default)]
struct XSums {
    pi: f64,
    pi2: f64,
    num: [f64; 2],
    num2: [f64; 2],
    cross: [f64; 2],
}

pub fn covariate_truth(spec: &DgpSpec, draws: u64, seed: u64) -> Result<CovariateTruth> {
    spec.validate()?;
    check_draws(draws)?;
    let d = spec.d;
    let s = chunked(
        draws,
        seed,
        domain::ORACLE_X,
        XSums::default,
        |acc, rng, x| {
            x.resize(d, 0.0);
            spec.draw_x(rng, x);
            let t = spec.truth_at(x);
            let nums = [t.pi * t.cate(), t.pi * t.mu0];
            acc.pi += t.pi;
            acc.pi2 += t.pi * t.pi;
            for k in 0..2 {
                acc.num[k] += nums[k];
                acc.num2[k] += nums[k] * nums[k];
                acc.cross[k] += nums[k] * t.pi;
            }
        },
        |tot, p| {
            tot.pi += p.pi;
            tot.pi2 += p.pi2;
            for k in 0..2 {
                tot.num[k] += p.num[k];
                tot.num2[k] += p.num2[k];
                tot.cross[k] += p.cross[k];
            }
        },
    );
    let n = draws as f64;
    let e_pi = s.pi / n;
    let ratio = |k: usize| {
        let r = s.num[k] / s.pi;
        // linearization (num - r pi) / E[pi]
        let m2 = s.num2[k] / n - 2.0 * r * s.cross[k] / n + r * r * s.pi2 / n;
        let m1 = s.num[k] / n - r * e_pi;
        McValue {
            value: r,
            se: ((m2 - m1 * m1).max(0.0) / n).sqrt() / e_pi,
        }
    };
    Ok(CovariateTruth {
        p_a: McValue {
            value: e_pi,
            se: ((s.pi2 / n - e_pi * e_pi).max(0.0) / n).sqrt(),
        },
        psi_patt: ratio(0),
        tau: ratio(1),
    })
}

/// `E[pi (mu1 - mu0)] / E[pi]` over `draws` covariate draws.
pub fn psi_patt_true(spec: &DgpSpec, draws: u64, seed: u64) -> Result<McValue> {
    Ok(covariate_truth(spec, draws, seed)?.psi_patt)
}

/// True asymptotic variances of `sqrt(n)(psi_hat - psi*)` for each estimand,
/// plus the bounds and cross-checks that enter them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleVariances {
    pub schema_version: u32,
    pub draws: u64,
    pub seed: u64,
    pub p_a: McValue,
    pub psi_patt: McValue,
    pub patt: McValue,
    pub actt: McValue,
    pub swatt: McValue,
    pub catt: McValue,
    pub satt: McValue,
    pub matt: McValue,
    /// Satt limit from the per-unit expansion that uses `Y0` directly.
    pub satt_direct: McValue,
    /// Swatt limit from the per-unit expansion that uses `Y1 - Y0` directly.
    pub swatt_direct: McValue,
    /// `P(A)^-2 E[pi^2 var(Y1 - Y0 | X)]` from joint draws.
    pub effect_variance_term: McValue,
    /// Same term from the closed-form conditional variance.
    pub effect_variance_term_closed_form: McValue,
    /// `P(A)^-2 E[pi^2 (sigma1 - sigma0)^2]`.
    pub sigma_bound: McValue,
    /// `E[pi^2 (|d| - d^2)]` with `d = mu1 - mu0`; binary outcomes only.
    pub fh_bound: Option<McValue>,
    pub tau: McValue,
    pub var_tau_dot: McValue,
}

impl OracleVariances {
    pub fn for_kind(&self, kind: EstimandKind) -> McValue {
        match kind {
            EstimandKind::Patt => self.patt,
            EstimandKind::Actt => self.actt,
            EstimandKind::Swatt => self.swatt,
            EstimandKind::Catt => self.catt,
            EstimandKind::Satt => self.satt,
            EstimandKind::Matt => self.matt,
        }
    }
}

#[derive(Default)]
struct FullSums {
    patt: Sums,
    actt: Sums,
    catt: Sums,
    matt: Sums,
    satt_extra: Sums,
    satt_direct: Sums,
    h2: Sums,
    h_closed: Sums,
    swatt_direct: Sums,
    swatt_combined: Sums,
    sigma: Sums,
    fh: Sums,
    tau_dot: Sums,
}

impl FullSums {
    fn merge(&mut self, o: &FullSums) {
        self.patt.merge(&o.patt);
        self.actt.merge(&o.actt);
        self.catt.merge(&o.catt);
        self.matt.merge(&o.matt);
        self.satt_extra.merge(&o.satt_extra);
        self.satt_direct.merge(&o.satt_direct);
        self.h2.merge(&o.h2);
        self.h_closed.merge(&o.h_closed);
        self.swatt_direct.merge(&o.swatt_direct);
        self.swatt_combined.merge(&o.swatt_combined);
        self.sigma.merge(&o.sigma);
        self.fh.merge(&o.fh);
        self.tau_dot.merge(&o.tau_dot);
    }
}

fn combine_se(a: McValue, b: McValue, value: f64) -> McValue {
    McValue {
        value,
        se: a.se.hypot(b.se),
    }
}

/// Two passes of `draws` each: covariates only (for `P(A)`, `psi_patt`,
/// `tau`), then complete units evaluated with the true nuisances.
pub fn oracle_asymptotic_variances(spec: &DgpSpec, draws: u64, seed: u64) -> Result<OracleVariances> {
    let cov = covariate_truth(spec, draws, seed)?;
    let (pa, psi, tau) = (cov.p_a.value, cov.psi_patt.value, cov.tau.value);
    let d = spec.d;
    let binary = spec.outcome_kind == OutcomeKind::Binary;

    let s = chunked(
        draws,
        seed,
        domain::ORACLE_FULL,
        FullSums::default,
        |acc, rng, x| {
            x.resize(d, 0.0);
            let u = spec.draw_unit(rng, x);
            let t = u.truth;
            let a = if u.a { 1.0 } else { 0.0 };
            let y = u.y();
            let odds = t.pi / (1.0 - t.pi);
            let mu_obs = if u.a { t.mu1 } else { t.mu0 };
            let contrast = t.cate() - psi;
            let psi_y = (y - mu_obs) * (a - (1.0 - a) * odds) / pa;
            let psi_a = (a - t.pi) * contrast / pa;
            let psi_x = t.pi * contrast / pa;
            let tau_y = (y - t.mu0) * (1.0 - a) * odds / pa;
            let h = t.pi * (u.y1 - u.y0 - t.cate());

            acc.patt.push(psi_y + psi_a + psi_x);
            acc.actt.push(psi_y + psi_a);
            acc.catt.push(psi_y);
            acc.matt.push(tau_y);
            acc.satt_extra.push((1.0 - a) * odds * (y - t.mu0).powi(2) / (pa * pa));
            acc.satt_direct.push(-tau_y + a * (u.y0 - t.mu0) / pa);
            acc.h2.push(h * h / (pa * pa));
            acc.h_closed.push(t.pi * t.pi * spec.var_effect_given_x(&t) / (pa * pa));
            acc.swatt_direct.push(psi_y + psi_a - h / pa);
            acc.swatt_combined.push((psi_y + psi_a).powi(2) - h * h / (pa * pa));
            acc.sigma.push((t.pi * (t.sigma1 - t.sigma0)).powi(2) / (pa * pa));
            if binary {
                let dd = (t.mu1.clamp(0.0, 1.0) - t.mu0.clamp(0.0, 1.0)).abs();
                acc.fh.push(t.pi * t.pi * (dd - dd * dd));
            }
            acc.tau_dot.push(tau_y + a * (t.mu0 - tau) / pa);
        },
        |tot, p| tot.merge(&p),
    );
    let n = draws as f64;
    let matt = s.matt.variance(n);
    let extra = s.satt_extra.mean(n);
    let actt = s.actt.variance(n);
    let h2 = s.h2.mean(n);
    let swatt_combined = s.swatt_combined.mean(n);
    Ok(OracleVariances {
        schema_version: 1,
        draws,
        seed,
        p_a: cov.p_a,
        psi_patt: cov.psi_patt,
        patt: s.patt.variance(n),
        actt,
        swatt: McValue {
            value: actt.value - h2.value,
            se: swatt_combined.se,
        },
        catt: s.catt.variance(n),
        satt: combine_se(matt, extra, matt.value + extra.value),
        matt,
        satt_direct: s.satt_direct.variance(n),
        swatt_direct: s.swatt_direct.variance(n),
        effect_variance_term: h2,
        effect_variance_term_closed_form: s.h_closed.mean(n),
        sigma_bound: s.sigma.mean(n),
        fh_bound: binary.then(|| s.fh.mean(n)),
        tau: cov.tau,
        var_tau_dot: s.tau_dot.variance(n),
    })
}

/// Treated mean of `Y0` and the variance of its influence function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauTruth {
    pub tau: McValue,
    pub var_tau_dot: McValue,
}

pub fn psi_tau_true_and_var(spec: &DgpSpec, draws: u64, seed: u64) -> Result<TauTruth> {
    let o = oracle_asymptotic_variances(spec, draws, seed)?;
    Ok(TauTruth {
        tau: o.tau,
        var_tau_dot: o.var_tau_dot,
    })
}

/// Largest `E[Y1 Y0] = P(Y1 = 1, Y0 = 1)` over joint Bernoulli laws with
/// margins `p` and `q`, by enumerating the one-parameter family of joint
/// pmfs on a grid that includes both ends of the feasible interval.
pub fn fh_sharpness_oracle(p: f64, q: f64) -> f64 {
    const STEPS: u32 = 4096;
    assert!((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&q), "margins must be probabilities");
    let lo = (p + q - 1.0).max(0.0);
    let hi = p.min(q);
    let valid = |t: f64| t >= 0.0 && p - t >= 0.0 && q - t >= 0.0 && 1.0 - p - q + t >= -1e-15;
    let interior = (1..STEPS).map(|k| lo + (hi - lo) * f64::from(k) / f64::from(STEPS));
    [lo, hi]
        .into_iter()
        .chain(interior)
        .filter(|&t| valid(t))
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::dgp::Dependence;

    #[test]
    fn constant_effect_gives_constant_truth() {
        let mut s = DgpSpec::example(2);
        s.mu1_coeffs = s.mu0_coeffs.clone();
        s.mu1_coeffs[0] += 1.25;
        let v = psi_patt_true(&s, 20_000, 1).unwrap();
        assert!((v.value - 1.25).abs() < 1e-12);
        assert!(v.se < 1e-12);
    }

    #[test]
    fn se_halves_when_draws_quadruple() {
        let s = DgpSpec::example(1);
        let a = psi_patt_true(&s, 100_000, 3).unwrap();
        let b = psi_patt_true(&s, 400_000, 3).unwrap();
        let r = a.se / b.se;
        assert!((r - 2.0).abs() < 0.2 * 2.0, "ratio {r}");
    }

    #[test]
    fn chunking_is_deterministic() {
        let s = DgpSpec::example(2);
        let a = oracle_asymptotic_variances(&s, 150_000, 9).unwrap();
        let b = oracle_asymptotic_variances(&s, 150_000, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn comonotone_equal_sd_swatt_equals_actt() {
        let mut s = DgpSpec::example(2);
        s.dependence = Dependence::Comonotone;
        s.noise1_sd_coeffs = s.noise0_sd_coeffs.clone();
        let o = oracle_asymptotic_variances(&s, 100_000, 2).unwrap();
        assert!(o.effect_variance_term.value.abs() < 1e-20);
        assert!((o.swatt.value - o.actt.value).abs() < 1e-12);
    }

    #[test]
    fn effect_term_matches_closed_form() {
        let s = DgpSpec::example(2);
        let o = oracle_asymptotic_variances(&s, 400_000, 4).unwrap();
        let (a, b) = (o.effect_variance_term, o.effect_variance_term_closed_form);
        assert!((a.value - b.value).abs() < 4.0 * a.se.hypot(b.se), "{a:?} {b:?}");
        let (a, b) = (o.satt, o.satt_direct);
        assert!((a.value - b.value).abs() < 4.0 * a.se.hypot(b.se), "{a:?} {b:?}");
        let (a, b) = (o.swatt, o.swatt_direct);
        assert!((a.value - b.value).abs() < 4.0 * a.se.hypot(b.se), "{a:?} {b:?}");
    }

    #[test]
    fn fh_oracle_small_cases() {
        assert_eq!(fh_sharpness_oracle(0.3, 0.3), 0.3);
        assert_eq!(fh_sharpness_oracle(0.7, 0.0), 0.0);
        assert_eq!(fh_sharpness_oracle(0.2, 0.9), 0.2);
    }

    #[test]
    fn rejects_too_few_draws() {
        assert!(psi_patt_true(&DgpSpec::example(1), 0, 1).is_err());
    }
}
