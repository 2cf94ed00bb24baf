//! Data-generating process: covariate law, logit-linear propensity, linear
//! conditional means and standard deviations, and the joint law of the two
//! potential outcomes given `X`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::OutcomeKind;
use crate::error::{Error, Result};

pub const DGP_SCHEMA_VERSION: u32 = 1;
pub const PI_CLIP: f64 = 0.02;
pub const SD_FLOOR: f64 = 0.05;
/// Bernoulli success probabilities are clamped to `[P_CLIP, 1 - P_CLIP]`.
pub const P_CLIP: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XDist {
    StdNormal,
    Uniform01,
}

/// Coupling of `(Y0, Y1)` given `X`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dependence {
    Independent,
    /// Shared standard normal (or shared uniform for binary outcomes).
    Comonotone,
    /// Negated normal (or `1 - U` for binary outcomes).
    Antitone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub schema_version: u32,
    pub d: usize,
    pub x_dist: XDist,
    /// Intercept first; length `d + 1`.
    pub propensity_coeffs: Vec<f64>,
    pub mu0_coeffs: Vec<f64>,
    pub mu1_coeffs: Vec<f64>,
    pub noise0_sd_coeffs: Vec<f64>,
    pub noise1_sd_coeffs: Vec<f64>,
    pub dependence: Dependence,
    #[serde(default)]
    pub outcome_kind: OutcomeKind,
    /// Zero noise: `Y^a = mu_a(X)`. Continuous outcomes only.
    #[serde(default)]
    pub exact: bool,
}

fn linear(coeffs: &[f64], x: &[f64]) -> f64 {
    coeffs[0] + coeffs[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
}

fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// Conditional quantities at one covariate value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitTruth {
    pub pi: f64,
    pub mu0: f64,
    pub mu1: f64,
    pub sigma0: f64,
    pub sigma1: f64,
}

impl UnitTruth {
    pub fn cate(&self) -> f64 {
        self.mu1 - self.mu0
    }
}

/// One complete draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitDraw {
    pub truth: UnitTruth,
    pub a: bool,
    pub y0: f64,
    pub y1: f64,
}

impl UnitDraw {
    pub fn y(&self) -> f64 {
        if self.a {
            self.y1
        } else {
            self.y0
        }
    }
}

impl DgpSpec {
    /// Homogeneous-effect, independent-noise default used by docs and tests.
    pub fn example(d: usize) -> Self {
        let mut propensity = vec![-0.3];
        let mut mu0 = vec![1.0];
        let mut mu1 = vec![2.0];
        for j in 0..d {
            propensity.push(if j % 2 == 0 { 0.6 } else { -0.4 });
            mu0.push(0.5 + 0.25 * j as f64);
            mu1.push(1.0 - 0.25 * j as f64);
        }
        let mut sd0 = vec![1.0];
        let mut sd1 = vec![1.5];
        sd0.resize(d + 1, 0.0);
        sd1.resize(d + 1, 0.0);
        Self {
            schema_version: DGP_SCHEMA_VERSION,
            d,
            x_dist: XDist::StdNormal,
            propensity_coeffs: propensity,
            mu0_coeffs: mu0,
            mu1_coeffs: mu1,
            noise0_sd_coeffs: sd0,
            noise1_sd_coeffs: sd1,
            dependence: Dependence::Independent,
            outcome_kind: OutcomeKind::Continuous,
            exact: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != DGP_SCHEMA_VERSION {
            return Err(Error::InvalidSpec(format!(
                "schema_version {} is not supported (expected {DGP_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        for (name, c) in [
            ("propensity_coeffs", &self.propensity_coeffs),
            ("mu0_coeffs", &self.mu0_coeffs),
            ("mu1_coeffs", &self.mu1_coeffs),
            ("noise0_sd_coeffs", &self.noise0_sd_coeffs),
            ("noise1_sd_coeffs", &self.noise1_sd_coeffs),
        ] {
            if c.len() != self.d + 1 {
                return Err(Error::InvalidSpec(format!("{name} has length {}, expected d + 1 = {}", c.len(), self.d + 1)));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidSpec(format!("{name} contains a non-finite value")));
            }
        }
        if self.exact && self.outcome_kind == OutcomeKind::Binary {
            return Err(Error::InvalidSpec("`exact` applies to continuous outcomes only".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn propensity(&self, x: &[f64]) -> f64 {
        logistic(linear(&self.propensity_coeffs, x)).clamp(PI_CLIP, 1.0 - PI_CLIP)
    }

    pub fn truth_at(&self, x: &[f64]) -> UnitTruth {
        let pi = self.propensity(x);
        let m0 = linear(&self.mu0_coeffs, x);
        let m1 = linear(&self.mu1_coeffs, x);
        match self.outcome_kind {
            OutcomeKind::Continuous => {
                let (sigma0, sigma1) = if self.exact {
                    (0.0, 0.0)
                } else {
                    (
                        linear(&self.noise0_sd_coeffs, x).max(SD_FLOOR),
                        linear(&self.noise1_sd_coeffs, x).max(SD_FLOOR),
                    )
                };
                UnitTruth {
                    pi,
                    mu0: m0,
                    mu1: m1,
                    sigma0,
                    sigma1,
                }
            }
            OutcomeKind::Binary => {
                let p0 = m0.clamp(P_CLIP, 1.0 - P_CLIP);
                let p1 = m1.clamp(P_CLIP, 1.0 - P_CLIP);
                UnitTruth {
                    pi,
                    mu0: p0,
                    mu1: p1,
                    sigma0: (p0 * (1.0 - p0)).sqrt(),
                    sigma1: (p1 * (1.0 - p1)).sqrt(),
                }
            }
        }
    }

    /// `var(Y1 - Y0 | X)` in closed form under the coupling.
    pub fn var_effect_given_x(&self, t: &UnitTruth) -> f64 {
        match self.outcome_kind {
            OutcomeKind::Continuous => {
                let (s0, s1) = (t.sigma0, t.sigma1);
                match self.dependence {
                    Dependence::Independent => s1 * s1 + s0 * s0,
                    Dependence::Comonotone => (s1 - s0).powi(2),
                    Dependence::Antitone => (s1 + s0).powi(2),
                }
            }
            OutcomeKind::Binary => {
                let (p1, p0) = (t.mu1, t.mu0);
                let both = match self.dependence {
                    Dependence::Independent => p1 * p0,
                    Dependence::Comonotone => p1.min(p0),
                    Dependence::Antitone => (p1 + p0 - 1.0).max(0.0),
                };
                // var(Y1 - Y0) = p1 + p0 - 2 P(1,1) - (p1 - p0)^2
                p1 + p0 - 2.0 * both - (p1 - p0).powi(2)
            }
        }
    }

    /// Draws covariates into `x`.
    pub fn draw_x<R: Rng + ?Sized>(&self, rng: &mut R, x: &mut [f64]) {
        for v in x.iter_mut() {
            *v = match self.x_dist {
                XDist::StdNormal => rng.sample(StandardNormal),
                XDist::Uniform01 => rng.random::<f64>(),
            };
        }
    }

    /// Draws one complete unit; `x` receives the covariates.
    pub fn draw_unit<R: Rng + ?Sized>(&self, rng: &mut R, x: &mut [f64]) -> UnitDraw {
        self.draw_x(rng, x);
        let truth = self.truth_at(x);
        let a = rng.random::<f64>() < truth.pi;
        let (y0, y1) = match self.outcome_kind {
            OutcomeKind::Continuous => {
                let z1: f64 = rng.sample(StandardNormal);
                let z0 = match self.dependence {
                    Dependence::Independent => rng.sample(StandardNormal),
                    Dependence::Comonotone => z1,
                    Dependence::Antitone => -z1,
                };
                (truth.mu0 + truth.sigma0 * z0, truth.mu1 + truth.sigma1 * z1)
            }
            OutcomeKind::Binary => {
                let u1: f64 = rng.random();
                let u0 = match self.dependence {
                    Dependence::Independent => rng.random(),
                    Dependence::Comonotone => u1,
                    Dependence::Antitone => 1.0 - u1,
                };
                (f64::from(u8::from(u0 < truth.mu0)), f64::from(u8::from(u1 < truth.mu1)))
            }
        };
        UnitDraw { truth, a, y0, y1 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::rng::{domain, stream_rng};

    #[test]
    fn validation_catches_bad_specs() {
        let good = DgpSpec::example(2);
        assert!(good.validate().is_ok());
        let mut bad = good.clone();
        bad.mu0_coeffs.pop();
        assert!(bad.validate().is_err());
        let mut bad = good.clone();
        bad.schema_version = 2;
        assert!(bad.validate().is_err());
        let mut bad = good;
        bad.outcome_kind = OutcomeKind::Binary;
        bad.exact = true;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn propensity_is_clipped_and_sd_floored() {
        let mut s = DgpSpec::example(1);
        s.propensity_coeffs = vec![0.0, 100.0];
        s.noise0_sd_coeffs = vec![-3.0, 0.0];
        assert_eq!(s.propensity(&[1.0]), 1.0 - PI_CLIP);
        assert_eq!(s.propensity(&[-1.0]), PI_CLIP);
        assert_eq!(s.truth_at(&[0.0]).sigma0, SD_FLOOR);
        s.exact = true;
        assert_eq!(s.truth_at(&[0.0]).sigma0, 0.0);
    }

    #[test]
    fn exact_outcomes_equal_means() {
        let mut s = DgpSpec::example(2);
        s.exact = true;
        let mut rng = stream_rng(1, domain::GENERATE, 0);
        let mut x = [0.0; 2];
        for _ in 0..50 {
            let u = s.draw_unit(&mut rng, &mut x);
            assert_eq!(u.y0, u.truth.mu0);
            assert_eq!(u.y1, u.truth.mu1);
        }
    }

    #[test]
    fn antitone_noise_is_mirrored() {
        let mut s = DgpSpec::example(1);
        s.dependence = Dependence::Antitone;
        s.noise1_sd_coeffs = s.noise0_sd_coeffs.clone();
        let mut rng = stream_rng(2, domain::GENERATE, 0);
        let mut x = [0.0];
        for _ in 0..50 {
            let u = s.draw_unit(&mut rng, &mut x);
            assert!(((u.y0 - u.truth.mu0) + (u.y1 - u.truth.mu1)).abs() < 1e-12);
        }
    }

    #[test]
    fn binary_effect_variance_by_coupling() {
        let mut s = DgpSpec::example(1);
        s.outcome_kind = OutcomeKind::Binary;
        let t = UnitTruth {
            pi: 0.5,
            mu0: 0.3,
            mu1: 0.6,
            sigma0: 0.0,
            sigma1: 0.0,
        };
        s.dependence = Dependence::Comonotone;
        // P(Y1 - Y0 = 1) = 0.3, never -1
        assert!((s.var_effect_given_x(&t) - 0.3 * 0.7).abs() < 1e-15);
        s.dependence = Dependence::Independent;
        let v = 0.6 + 0.3 - 2.0 * 0.18 - 0.09;
        assert!((s.var_effect_given_x(&t) - v).abs() < 1e-15);
    }

    #[test]
    fn json_round_trip() {
        let s = DgpSpec::example(3);
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(DgpSpec::from_json(&text).unwrap(), s);
        assert!(DgpSpec::from_json("{\"schema_version\": 1}").is_err());
    }
}
