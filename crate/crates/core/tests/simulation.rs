use attvar::simulation::{
    covariate_truth, fh_sharpness_oracle, generate, oracle_asymptotic_variances, psi_patt_true, run_monte_carlo,
    true_sample_estimands, Dependence, DgpSpec, McConfig, XDist,
};
use attvar::{EstimandKind, OutcomeKind};

fn one_d(prop: [f64; 2], mu0: [f64; 2], mu1: [f64; 2], sd0: f64, sd1: f64) -> DgpSpec {
    DgpSpec {
        schema_version: 1,
        d: 1,
        x_dist: XDist::StdNormal,
        propensity_coeffs: prop.to_vec(),
        mu0_coeffs: mu0.to_vec(),
        mu1_coeffs: mu1.to_vec(),
        noise0_sd_coeffs: vec![sd0, 0.0],
        noise1_sd_coeffs: vec![sd1, 0.0],
        dependence: Dependence::Independent,
        outcome_kind: OutcomeKind::Continuous,
        exact: false,
    }
}

#[test]
fn treated_fraction_matches_mean_propensity() {
    let spec = DgpSpec::example(2);
    let n = 1_000_000;
    let pd = generate(&spec, n, 21).unwrap();
    let p_hat = pd.dataset.treated_fraction();
    let truth = covariate_truth(&spec, 10_000_000, 5).unwrap().p_a.value;
    let tol = 3.0 * (truth * (1.0 - truth) / n as f64).sqrt();
    assert!((p_hat - truth).abs() < tol, "{p_hat} vs {truth} (tol {tol})");
}

/// Trapezoid rule on a fine grid over the standard normal density.
fn gaussian_quadrature(f: impl Fn(f64) -> f64) -> f64 {
    let (lo, hi, m) = (-12.0, 12.0, 240_000);
    let h = (hi - lo) / m as f64;
    let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    (0..=m)
        .map(|k| {
            let x = lo + h * k as f64;
            let w = if k == 0 || k == m { 0.5 } else { 1.0 };
            w * f(x) * phi(x)
        })
        .sum::<f64>()
        * h
}

#[test]
fn population_effect_matches_quadrature() {
    let spec = one_d([0.2, 0.5], [0.0, 1.0], [1.0, 2.5], 1.0, 1.0);
    let logistic = |x: f64| 1.0 / (1.0 + (-(0.2 + 0.5 * x)).exp());
    let num = gaussian_quadrature(|x| logistic(x) * (1.0 + 1.5 * x));
    let den = gaussian_quadrature(logistic);
    let exact = num / den;
    let mc = psi_patt_true(&spec, 4_000_000, 8).unwrap();
    assert!((mc.value - exact).abs() < 4.0 * mc.se, "{mc:?} vs {exact}");
}

#[test]
fn sample_estimands_converge_to_population_value() {
    let spec = DgpSpec::example(2);
    let truth = psi_patt_true(&spec, 4_000_000, 1).unwrap().value;
    let n = 1_000_000;
    let pd = generate(&spec, n, 2).unwrap();
    let t = true_sample_estimands(&pd, truth).unwrap();
    let tol = 4.0 * 10f64.sqrt() / (n as f64).sqrt();
    for (k, v) in &t {
        assert!((v - truth).abs() < tol, "{k}: {v} vs {truth}");
    }
}

#[test]
fn treatment_is_ignorable_within_strata() {
    let spec = one_d([0.0, 0.8], [0.0, 1.0], [1.0, 1.0], 1.0, 1.0);
    let pd = generate(&spec, 1_000_000, 4).unwrap();
    let x = pd.dataset.x().column(0);
    for (lo, hi) in [(-0.5, -0.45), (0.0, 0.05), (0.7, 0.75)] {
        let idx: Vec<usize> = (0..x.len()).filter(|&i| x[i] >= lo && x[i] < hi).collect();
        let m = idx.len() as f64;
        for pot in [&pd.y0, &pd.y1] {
            let a: Vec<f64> = idx.iter().map(|&i| pd.dataset.a(i)).collect();
            let y: Vec<f64> = idx.iter().map(|&i| pot[i]).collect();
            let (ma, my) = (a.iter().sum::<f64>() / m, y.iter().sum::<f64>() / m);
            let cov: f64 = a.iter().zip(&y).map(|(p, q)| (p - ma) * (q - my)).sum::<f64>() / m;
            let va: f64 = a.iter().map(|p| (p - ma).powi(2)).sum::<f64>() / m;
            let vy: f64 = y.iter().map(|q| (q - my).powi(2)).sum::<f64>() / m;
            let corr = cov / (va * vy).sqrt();
            assert!(corr.abs() < 3.0 / m.sqrt(), "stratum [{lo}, {hi}): corr {corr}");
        }
    }
}

#[test]
fn oracle_values_are_seed_stable() {
    let spec = DgpSpec::example(2);
    let a = oracle_asymptotic_variances(&spec, 10_000_000, 100).unwrap();
    let b = oracle_asymptotic_variances(&spec, 10_000_000, 200).unwrap();
    for k in EstimandKind::ALL {
        let (x, y) = (a.for_kind(k).value, b.for_kind(k).value);
        assert!((x - y).abs() < 0.01 * x.abs(), "{k}: {x} vs {y}");
    }
    let (x, y) = (a.var_tau_dot.value, b.var_tau_dot.value);
    assert!((x - y).abs() < 0.01 * x);
    // independent noise: the effect-variance term has a closed form
    let (t, c) = (a.effect_variance_term, a.effect_variance_term_closed_form);
    assert!((t.value - c.value).abs() < 4.0 * t.se.hypot(c.se));
}

#[test]
fn constant_control_mean_fixes_tau() {
    let spec = one_d([0.1, 0.7], [2.0, 0.0], [3.0, 1.0], 1.0, 1.0);
    let o = oracle_asymptotic_variances(&spec, 200_000, 3).unwrap();
    assert!((o.tau.value - 2.0).abs() < 1e-12);
}

#[test]
fn treated_mean_influence_versus_effect_influence() {
    // With a homogeneous effect, the effect influence function is smaller
    // exactly when E[A (Y1 - mu1)^2] < E[A (mu0 - tau)^2].
    for (sd1, slope, effect_smaller) in [(0.05, 2.0, true), (3.0, 0.1, false)] {
        let spec = one_d([0.0, 0.5], [0.0, slope], [1.0, slope], 1.0, sd1);
        let o = oracle_asymptotic_variances(&spec, 2_000_000, 6).unwrap();
        let pd = generate(&spec, 2_000_000, 7).unwrap();
        let mu0 = pd.true_nuisances.mu0();
        let mu1 = pd.true_nuisances.mu1().unwrap();
        let n = pd.dataset.n() as f64;
        let lhs: f64 = (0..pd.dataset.n()).map(|i| pd.dataset.a(i) * (pd.y1[i] - mu1[i]).powi(2)).sum::<f64>() / n;
        let rhs: f64 = (0..pd.dataset.n()).map(|i| pd.dataset.a(i) * (mu0[i] - o.tau.value).powi(2)).sum::<f64>() / n;
        assert_eq!(lhs < rhs, effect_smaller);
        assert_eq!(o.patt.value < o.var_tau_dot.value, effect_smaller, "{o:?}");
    }
}

#[test]
fn fh_oracle_grid() {
    for i in 1..=9 {
        for j in 1..=9 {
            let (p, q) = (f64::from(i) / 10.0, f64::from(j) / 10.0);
            assert_eq!(fh_sharpness_oracle(p, q), p.min(q));
        }
    }
    assert_eq!(fh_sharpness_oracle(0.4, 0.0), 0.0);
}

#[test]
fn errors_shrink_with_sample_size() {
    let spec = DgpSpec::example(2);
    let rms = |n: usize| {
        let cfg = McConfig {
            truth_draws: 2_000_000,
            ..McConfig::new(n, 60, 12)
        };
        let r = run_monte_carlo(&spec, &cfg).unwrap();
        EstimandKind::ALL.map(|k| {
            let e = r.errors(k);
            (e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64).sqrt()
        })
    };
    let (small, large) = (rms(2_000), rms(20_000));
    for (k, (s, l)) in EstimandKind::ALL.iter().zip(small.iter().zip(&large)) {
        assert!(l < s, "{k}: {l} !< {s}");
    }
}

#[test]
fn conservative_swatt_variances_cover_the_truth() {
    let spec = DgpSpec::example(2);
    let o = oracle_asymptotic_variances(&spec, 2_000_000, 31).unwrap();
    let cfg = McConfig {
        truth_draws: 1_000_000,
        ..McConfig::new(2000, 200, 32)
    };
    let r = run_monte_carlo(&spec, &cfg).unwrap();
    let sigma = r.swatt_variants.conservative_sigma.unwrap();
    let actt = r.stats(EstimandKind::Actt).mean_variance_estimate;
    let se = r.stats(EstimandKind::Actt).mean_variance_estimate_se.hypot(o.swatt.se);
    assert!(sigma >= o.swatt.value - 3.0 * se, "{sigma} vs {}", o.swatt.value);
    assert!(actt >= o.swatt.value - 3.0 * se);
}
