use std::collections::BTreeMap;

use rand::Rng;

use super::dgp::DgpSpec;
use super::rng::{domain, stream_rng};
use crate::data::{indicator, Covariates, Dataset, EstimandKind, NuisanceValues};
use crate::error::{Error, Result};

/// Observed data together with both potential outcomes and the exact
/// nuisance functions evaluated at every unit.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialDataset {
    pub dataset: Dataset,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    pub true_nuisances: NuisanceValues,
}

/// Clip level attached to the true nuisances; below the generator's own
/// propensity clip, so it never binds.
pub const TRUE_CLIP_EPS: f64 = 0.01;

pub fn generate(spec: &DgpSpec, n: usize, seed: u64) -> Result<PotentialDataset> {
    generate_with(spec, n, &mut stream_rng(seed, domain::GENERATE, 0))
}

/// Draws `n` i.i.d. units from `rng`. Fails only if the draw has no treated
/// or no control units (or `n < 2`).
pub fn generate_with<R: Rng + ?Sized>(spec: &DgpSpec, n: usize, rng: &mut R) -> Result<PotentialDataset> {
    spec.validate()?;
    let d = spec.d;
    let mut cols = vec![Vec::with_capacity(n); d];
    let mut x = vec![0.0; d];
    let (mut y, mut a, mut y0, mut y1) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    let (mut pi, mut mu0, mut mu1, mut s0, mut s1) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for _ in 0..n {
        let u = spec.draw_unit(rng, &mut x);
        for (c, v) in cols.iter_mut().zip(&x) {
            c.push(*v);
        }
        y.push(u.y());
        a.push(u.a);
        y0.push(u.y0);
        y1.push(u.y1);
        pi.push(u.truth.pi);
        mu0.push(u.truth.mu0);
        mu1.push(u.truth.mu1);
        s0.push(u.truth.sigma0);
        s1.push(u.truth.sigma1);
    }
    let covariates = Covariates::from_columns(n, cols)?;
    let dataset = crate::data::validate(Dataset::from_flags(y, a, covariates, spec.outcome_kind)?)?;
    let true_nuisances = NuisanceValues::new(pi, mu0, Some(mu1), Some((s0, s1)), TRUE_CLIP_EPS)?;
    Ok(PotentialDataset {
        dataset,
        y0,
        y1,
        true_nuisances,
    })
}

impl PotentialDataset {
    fn mu1(&self) -> &[f64] {
        self.true_nuisances.mu1().expect("generated data carries mu1")
    }
}

/// Realized value of every sample or mixed estimand, using the true
/// nuisances; `patt` maps to the supplied population value.
pub fn true_sample_estimands(pd: &PotentialDataset, psi_patt_true: f64) -> Result<BTreeMap<EstimandKind, f64>> {
    let ds = &pd.dataset;
    let n_treated = ds.n_treated();
    if n_treated == 0 {
        return Err(Error::DegenerateTreatment("no treated units".into()));
    }
    let (pi, mu0, mu1) = (pd.true_nuisances.pi(), pd.true_nuisances.mu0(), pd.mu1());
    let (mut satt, mut catt, mut matt) = (0.0, 0.0, 0.0);
    let (mut actt, mut swatt, mut pi_sum) = (0.0, 0.0, 0.0);
    for i in 0..ds.n() {
        let a = ds.a(i);
        satt += a * (pd.y1[i] - pd.y0[i]);
        catt += a * (mu1[i] - mu0[i]);
        matt += a * (ds.y()[i] - mu0[i]);
        actt += pi[i] * (mu1[i] - mu0[i]);
        swatt += pi[i] * (pd.y1[i] - pd.y0[i]);
        pi_sum += pi[i];
    }
    let nt = n_treated as f64;
    Ok(BTreeMap::from([
        (EstimandKind::Patt, psi_patt_true),
        (EstimandKind::Actt, actt / pi_sum),
        (EstimandKind::Swatt, swatt / pi_sum),
        (EstimandKind::Catt, catt / nt),
        (EstimandKind::Satt, satt / nt),
        (EstimandKind::Matt, matt / nt),
    ]))
}

/// `Pn[(A - pi (1 - A) / (1 - pi)) (Y - mu0)] / Pn(A)` with true nuisances.
pub fn psi_tilde(pd: &PotentialDataset) -> Result<f64> {
    let ds = &pd.dataset;
    if ds.n_treated() == 0 {
        return Err(Error::DegenerateTreatment("no treated units".into()));
    }
    let (pi, mu0) = (pd.true_nuisances.pi(), pd.true_nuisances.mu0());
    let total: f64 = (0..ds.n())
        .map(|i| {
            let a = indicator(ds.treated()[i]);
            (a - pi[i] * (1.0 - a) / (1.0 - pi[i])) * (ds.y()[i] - mu0[i])
        })
        .sum();
    Ok(total / ds.n_treated() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::OutcomeKind;
    use crate::simulation::dgp::Dependence;

    #[test]
    fn observed_outcome_is_the_realized_potential_outcome() {
        let pd = generate(&DgpSpec::example(2), 500, 11).unwrap();
        for i in 0..500 {
            let a = pd.dataset.a(i);
            assert_eq!(pd.dataset.y()[i], a * pd.y1[i] + (1.0 - a) * pd.y0[i]);
        }
    }

    #[test]
    fn same_seed_same_data() {
        let s = DgpSpec::example(2);
        assert_eq!(generate(&s, 300, 5).unwrap(), generate(&s, 300, 5).unwrap());
        assert_ne!(generate(&s, 300, 5).unwrap(), generate(&s, 300, 6).unwrap());
    }

    #[test]
    fn constant_effect_makes_all_estimands_equal() {
        let mut s = DgpSpec::example(2);
        s.dependence = Dependence::Comonotone;
        s.noise1_sd_coeffs = s.noise0_sd_coeffs.clone();
        s.mu1_coeffs = s.mu0_coeffs.clone();
        s.mu1_coeffs[0] += 0.75;
        let pd = generate(&s, 400, 3).unwrap();
        let t = true_sample_estimands(&pd, 0.75).unwrap();
        // matt still carries the treated units' outcome noise
        for (k, v) in t.iter().filter(|(k, _)| **k != EstimandKind::Matt) {
            assert!((v - 0.75).abs() < 1e-12, "{k}: {t:?}");
        }
    }

    fn three_rows() -> PotentialDataset {
        // (a, y0, y1, pi, mu0, mu1)
        let dataset = Dataset::new(vec![2.0, 0.5, 4.0], vec![1.0, 0.0, 1.0], Covariates::empty(3), OutcomeKind::Continuous).unwrap();
        PotentialDataset {
            dataset,
            y0: vec![1.0, 0.5, 1.5],
            y1: vec![2.0, 3.0, 4.0],
            true_nuisances: NuisanceValues::new(
                vec![0.5, 0.25, 0.75],
                vec![0.0, 1.0, 2.0],
                Some(vec![1.0, 2.0, 2.5]),
                None,
                0.01,
            )
            .unwrap(),
        }
    }

    #[test]
    fn three_row_arithmetic() {
        let pd = three_rows();
        let t = true_sample_estimands(&pd, 9.0).unwrap();
        assert_eq!(t[&EstimandKind::Patt], 9.0);
        // satt: ((2-1) + (4-1.5)) / 2
        assert!((t[&EstimandKind::Satt] - 1.75).abs() < 1e-15);
        // catt: ((1-0) + (2.5-2)) / 2
        assert!((t[&EstimandKind::Catt] - 0.75).abs() < 1e-15);
        // matt: ((2-0) + (4-2)) / 2
        assert!((t[&EstimandKind::Matt] - 2.0).abs() < 1e-15);
        // actt: (0.5*1 + 0.25*1 + 0.75*0.5) / 1.5
        assert!((t[&EstimandKind::Actt] - 1.125 / 1.5).abs() < 1e-15);
        // swatt: (0.5*1 + 0.25*2.5 + 0.75*2.5) / 1.5
        assert!((t[&EstimandKind::Swatt] - 3.0 / 1.5).abs() < 1e-15);
        // tilde: (2 - (0.25/0.75)(0.5-1) + 2) / 2
        assert!((psi_tilde(&pd).unwrap() - (4.0 + 1.0 / 6.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn tilde_vanishes_with_zero_residuals() {
        let mut pd = three_rows();
        pd.true_nuisances =
            NuisanceValues::new(vec![0.3; 3], pd.dataset.y().to_vec(), Some(vec![0.0; 3]), None, 0.01).unwrap();
        assert_eq!(psi_tilde(&pd).unwrap(), 0.0);
    }
}
