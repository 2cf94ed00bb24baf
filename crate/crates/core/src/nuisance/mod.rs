//! Nuisance estimation: propensity score, arm-specific outcome means and
//! conditional standard deviations, with optional K-fold cross-fitting.

mod linalg;
mod linear;
mod logistic;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use linalg::Standardizer;
pub use linear::LinearModel;
pub use logistic::{IrlsSettings, LogisticModel};

use crate::data::{Dataset, NuisanceValues};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropensityMethod {
    LogisticIrls,
    OracleSupplied,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeMethod {
    LeastSquares,
    OracleSupplied,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdMethod {
    SquaredResidualRegression,
    OracleSupplied,
    Skip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceConfig {
    pub propensity_method: PropensityMethod,
    pub outcome_method: OutcomeMethod,
    pub sd_method: SdMethod,
    /// 1 disables cross-fitting.
    pub folds: usize,
    pub clip_eps: f64,
    pub irls_max_iter: usize,
    pub irls_tol: f64,
    pub ridge_lambda: f64,
    /// Seeds the fold assignment.
    pub seed: u64,
}

impl Default for NuisanceConfig {
    fn default() -> Self {
        Self {
            propensity_method: PropensityMethod::LogisticIrls,
            outcome_method: OutcomeMethod::LeastSquares,
            sd_method: SdMethod::SquaredResidualRegression,
            folds: 1,
            clip_eps: 0.01,
            irls_max_iter: 100,
            irls_tol: 1e-8,
            ridge_lambda: 1e-8,
            seed: 0,
        }
    }
}

impl NuisanceConfig {
    /// Every nuisance taken from caller-supplied values.
    pub fn oracle() -> Self {
        Self {
            propensity_method: PropensityMethod::OracleSupplied,
            outcome_method: OutcomeMethod::OracleSupplied,
            sd_method: SdMethod::OracleSupplied,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.clip_eps > 0.0 && self.clip_eps < 0.5) {
            return Err(Error::InvalidConfig(format!("clip_eps must lie in (0, 0.5), got {}", self.clip_eps)));
        }
        if self.folds == 0 {
            return Err(Error::InvalidConfig("folds must be at least 1".into()));
        }
        if !(self.ridge_lambda >= 0.0 && self.ridge_lambda.is_finite()) {
            return Err(Error::InvalidConfig("ridge_lambda must be a finite nonnegative number".into()));
        }
        if self.irls_max_iter == 0 || !(self.irls_tol > 0.0) {
            return Err(Error::InvalidConfig("irls_max_iter and irls_tol must be positive".into()));
        }
        Ok(())
    }

    /// Short label recorded in report diagnostics.
    pub fn method_label(&self) -> String {
        let p = match self.propensity_method {
            PropensityMethod::LogisticIrls => "logistic_irls",
            PropensityMethod::OracleSupplied => "oracle",
        };
        let o = match self.outcome_method {
            OutcomeMethod::LeastSquares => "least_squares",
            OutcomeMethod::OracleSupplied => "oracle",
        };
        let s = match self.sd_method {
            SdMethod::SquaredResidualRegression => "squared_residual_regression",
            SdMethod::OracleSupplied => "oracle",
            SdMethod::Skip => "skip",
        };
        format!("propensity={p};outcome={o};sd={s}")
    }

    fn irls(&self) -> IrlsSettings {
        IrlsSettings {
            max_iter: self.irls_max_iter,
            tol: self.irls_tol,
            ridge: self.ridge_lambda,
            clip_eps: self.clip_eps,
        }
    }
}

/// Caller-supplied nuisance values; any subset may be present.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OracleNuisances {
    pub pi: Option<Vec<f64>>,
    pub mu0: Option<Vec<f64>>,
    pub mu1: Option<Vec<f64>>,
    pub sigma0: Option<Vec<f64>>,
    pub sigma1: Option<Vec<f64>>,
}

impl From<&NuisanceValues> for OracleNuisances {
    fn from(v: &NuisanceValues) -> Self {
        Self {
            pi: Some(v.pi().to_vec()),
            mu0: Some(v.mu0().to_vec()),
            mu1: v.mu1().map(<[f64]>::to_vec),
            sigma0: v.sigma0().map(<[f64]>::to_vec),
            sigma1: v.sigma1().map(<[f64]>::to_vec),
        }
    }
}

/// Which optional nuisances downstream estimators require.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NuisanceNeeds {
    pub mu1: bool,
    pub sigma: bool,
}

impl NuisanceNeeds {
    pub const ALL: Self = Self { mu1: true, sigma: true };
    pub const MINIMAL: Self = Self { mu1: false, sigma: false };
}

fn all_rows(n: usize) -> Vec<usize> {
    (0..n).collect()
}

fn arm_rows(dataset: &Dataset, rows: &[usize], arm: u8) -> Vec<usize> {
    let want = arm == 1;
    rows.iter().copied().filter(|&i| dataset.treated()[i] == want).collect()
}

fn check_arm(dataset: &Dataset, rows: &[usize], arm: u8) -> Result<()> {
    let need = dataset.d() + 1;
    if rows.len() < need {
        return Err(Error::InsufficientArmData {
            arm,
            have: rows.len(),
            need,
        });
    }
    Ok(())
}

fn check_arm_value(arm: u8) -> Result<()> {
    if arm > 1 {
        return Err(Error::InvalidConfig(format!("arm must be 0 or 1, got {arm}")));
    }
    Ok(())
}

/// Logistic regression of the treatment indicator on `(1, x)` over `rows`.
pub fn fit_propensity_on(dataset: &Dataset, rows: &[usize], config: &NuisanceConfig) -> Result<LogisticModel> {
    LogisticModel::fit(dataset.x(), rows, |i| dataset.a(i), config.irls())
}

pub fn fit_propensity(dataset: &Dataset, config: &NuisanceConfig) -> Result<LogisticModel> {
    fit_propensity_on(dataset, &all_rows(dataset.n()), config)
}

/// Least squares of `y` on `(1, x)` among the units of `rows` in `arm`.
pub fn fit_outcome_mean_on(dataset: &Dataset, rows: &[usize], arm: u8, config: &NuisanceConfig) -> Result<LinearModel> {
    check_arm_value(arm)?;
    let rows = arm_rows(dataset, rows, arm);
    check_arm(dataset, &rows, arm)?;
    LinearModel::fit(dataset.x(), &rows, |i| dataset.y()[i], config.ridge_lambda)
}

pub fn fit_outcome_mean(dataset: &Dataset, arm: u8, config: &NuisanceConfig) -> Result<LinearModel> {
    fit_outcome_mean_on(dataset, &all_rows(dataset.n()), arm, config)
}

/// Conditional standard deviation model: `sqrt(max(0, fitted))` of a
/// regression of squared residuals on `(1, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SdModel {
    variance: LinearModel,
}

impl SdModel {
    pub fn predict(&self, raw: &[f64]) -> f64 {
        self.variance.predict(raw).max(0.0).sqrt()
    }

    pub fn predict_rows(&self, x: &crate::data::Covariates, rows: &[usize]) -> Vec<f64> {
        self.variance
            .predict_rows(x, rows)
            .into_iter()
            .map(|v| v.max(0.0).sqrt())
            .collect()
    }

    /// Coefficients of the squared-residual regression, original coordinates.
    pub fn variance_coefficients(&self) -> (f64, Vec<f64>) {
        self.variance.coefficients()
    }
}

fn fit_sd_with_residuals(
    dataset: &Dataset,
    rows: &[usize],
    arm: u8,
    mean_at: impl Fn(usize) -> f64,
    config: &NuisanceConfig,
) -> Result<SdModel> {
    check_arm_value(arm)?;
    let rows = arm_rows(dataset, rows, arm);
    check_arm(dataset, &rows, arm)?;
    let variance = LinearModel::fit(
        dataset.x(),
        &rows,
        |i| (dataset.y()[i] - mean_at(i)).powi(2),
        config.ridge_lambda,
    )?;
    Ok(SdModel { variance })
}

pub fn fit_conditional_sd_on(
    dataset: &Dataset,
    rows: &[usize],
    arm: u8,
    mean_model: &LinearModel,
    config: &NuisanceConfig,
) -> Result<SdModel> {
    let x = dataset.x();
    let mut buf = vec![0.0; x.ncols()];
    let means: Vec<f64> = (0..dataset.n())
        .map(|i| {
            x.row_into(i, &mut buf);
            mean_model.predict(&buf)
        })
        .collect();
    fit_sd_with_residuals(dataset, rows, arm, |i| means[i], config)
}

pub fn fit_conditional_sd(dataset: &Dataset, arm: u8, mean_model: &LinearModel, config: &NuisanceConfig) -> Result<SdModel> {
    fit_conditional_sd_on(dataset, &all_rows(dataset.n()), arm, mean_model, config)
}

/// Fold index for every unit: seeded Fisher-Yates shuffle, then contiguous
/// blocks whose sizes differ by at most one.
pub fn assign_folds(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let base = n / folds;
    let extra = n % folds;
    let mut fold_of = vec![0; n];
    let mut pos = 0;
    for k in 0..folds {
        let size = base + usize::from(k < extra);
        for &i in &order[pos..pos + size] {
            fold_of[i] = k;
        }
        pos += size;
    }
    fold_of
}

/// Predictions for `predict_rows` from models trained on `train_rows`.
#[derive(Debug, Default)]
struct PartialFit {
    pi: Option<Vec<f64>>,
    mu0: Option<Vec<f64>>,
    mu1: Option<Vec<f64>>,
    sigma0: Option<Vec<f64>>,
    sigma1: Option<Vec<f64>>,
}

struct Plan<'a> {
    dataset: &'a Dataset,
    config: &'a NuisanceConfig,
    oracle: &'a OracleNuisances,
    want_mu1: bool,
    want_sigma: bool,
}

impl Plan<'_> {
    fn fit(&self, train: &[usize], predict: &[usize]) -> Result<PartialFit> {
        let ds = self.dataset;
        let x = ds.x();
        let mut out = PartialFit::default();

        if self.config.propensity_method == PropensityMethod::LogisticIrls {
            let model = fit_propensity_on(ds, train, self.config)?;
            out.pi = Some(model.predict_rows(x, predict));
        }

        let fitted_means = self.config.outcome_method == OutcomeMethod::LeastSquares;
        let fit_sigma = self.want_sigma && self.config.sd_method == SdMethod::SquaredResidualRegression;
        let mean0 = if fitted_means {
            Some(fit_outcome_mean_on(ds, train, 0, self.config)?)
        } else {
            None
        };
        let mean1 = if fitted_means && (self.want_mu1 || fit_sigma) {
            Some(fit_outcome_mean_on(ds, train, 1, self.config)?)
        } else {
            None
        };
        if let Some(m) = &mean0 {
            out.mu0 = Some(m.predict_rows(x, predict));
        }
        if self.want_mu1 {
            if let Some(m) = &mean1 {
                out.mu1 = Some(m.predict_rows(x, predict));
            }
        }

        if fit_sigma {
            let mut sds = Vec::with_capacity(2);
            for (arm, model) in [(0u8, &mean0), (1u8, &mean1)] {
                let sd = match model {
                    Some(m) => fit_conditional_sd_on(ds, train, arm, m, self.config)?,
                    None => {
                        let field = if arm == 0 { "mu0" } else { "mu1" };
                        let supplied = if arm == 0 { &self.oracle.mu0 } else { &self.oracle.mu1 };
                        let mu = supplied.as_ref().ok_or(Error::MissingOracle(field))?;
                        fit_sd_with_residuals(ds, train, arm, |i| mu[i], self.config)?
                    }
                };
                sds.push(sd.predict_rows(x, predict));
            }
            out.sigma1 = sds.pop();
            out.sigma0 = sds.pop();
        }
        Ok(out)
    }
}

fn oracle_vec<'a>(v: &'a Option<Vec<f64>>, field: &'static str, n: usize) -> Result<&'a [f64]> {
    let v = v.as_deref().ok_or(Error::MissingOracle(field))?;
    if v.len() != n {
        return Err(Error::LengthMismatch {
            field,
            expected: n,
            got: v.len(),
        });
    }
    Ok(v)
}

/// Per-unit nuisance predictions for `dataset`.
///
/// With `folds = K >= 2` every unit is predicted by models trained on the
/// other `K - 1` folds. Fold fits may run concurrently; results are always
/// assembled in fold order.
pub fn compute_nuisances(
    dataset: &Dataset,
    config: &NuisanceConfig,
    oracle: Option<&OracleNuisances>,
    needs: NuisanceNeeds,
) -> Result<NuisanceValues> {
    config.validate()?;
    let n = dataset.n();
    let empty = OracleNuisances::default();
    let oracle = oracle.unwrap_or(&empty);
    let want_sigma = needs.sigma && config.sd_method != SdMethod::Skip;
    let plan = Plan {
        dataset,
        config,
        oracle,
        want_mu1: needs.mu1,
        want_sigma,
    };

    let mut pi = vec![0.0; n];
    let mut mu0 = vec![0.0; n];
    let mut mu1 = vec![0.0; n];
    let mut sigma0 = vec![0.0; n];
    let mut sigma1 = vec![0.0; n];

    let any_fitted = config.propensity_method == PropensityMethod::LogisticIrls
        || config.outcome_method == OutcomeMethod::LeastSquares
        || (want_sigma && config.sd_method == SdMethod::SquaredResidualRegression);

    if any_fitted {
        let groups: Vec<(Vec<usize>, Vec<usize>)> = if config.folds == 1 {
            vec![(all_rows(n), all_rows(n))]
        } else {
            fold_groups(dataset, config)?
        };
        let fits: Vec<Result<PartialFit>> = groups.par_iter().map(|(train, pred)| plan.fit(train, pred)).collect();
        for ((_, pred), fit) in groups.iter().zip(fits) {
            let fit = fit?;
            let targets: [(&Option<Vec<f64>>, &mut Vec<f64>); 5] = [
                (&fit.pi, &mut pi),
                (&fit.mu0, &mut mu0),
                (&fit.mu1, &mut mu1),
                (&fit.sigma0, &mut sigma0),
                (&fit.sigma1, &mut sigma1),
            ];
            for (src, dst) in targets {
                if let Some(vals) = src {
                    for (&i, &v) in pred.iter().zip(vals) {
                        dst[i] = v;
                    }
                }
            }
        }
    }

    if config.propensity_method == PropensityMethod::OracleSupplied {
        pi.copy_from_slice(oracle_vec(&oracle.pi, "pi", n)?);
    }
    if config.outcome_method == OutcomeMethod::OracleSupplied {
        mu0.copy_from_slice(oracle_vec(&oracle.mu0, "mu0", n)?);
        if needs.mu1 {
            mu1.copy_from_slice(oracle_vec(&oracle.mu1, "mu1", n)?);
        }
    }
    if want_sigma && config.sd_method == SdMethod::OracleSupplied {
        sigma0.copy_from_slice(oracle_vec(&oracle.sigma0, "sigma0", n)?);
        sigma1.copy_from_slice(oracle_vec(&oracle.sigma1, "sigma1", n)?);
    }

    NuisanceValues::new(
        pi,
        mu0,
        needs.mu1.then_some(mu1),
        want_sigma.then_some((sigma0, sigma1)),
        config.clip_eps,
    )
}

/// `(training rows, prediction rows)` per fold.
fn fold_groups(dataset: &Dataset, config: &NuisanceConfig) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    let k = config.folds;
    let (treated, control) = (dataset.n_treated(), dataset.n_control());
    if k > treated || k > control {
        return Err(Error::FoldTooSmall {
            folds: k,
            reason: format!("need folds <= n_treated ({treated}) and <= n_control ({control})"),
        });
    }
    let fold_of = assign_folds(dataset.n(), k, config.seed);
    let need = dataset.d() + 1;
    let mut groups = Vec::with_capacity(k);
    for fold in 0..k {
        let (pred, train): (Vec<usize>, Vec<usize>) = (0..dataset.n()).partition(|&i| fold_of[i] == fold);
        let t = train.iter().filter(|&&i| dataset.treated()[i]).count();
        let c = train.len() - t;
        if t.min(c) < need.max(1) {
            return Err(Error::FoldTooSmall {
                folds: k,
                reason: format!("complement of fold {fold} has {t} treated and {c} control units, need {need} of each"),
            });
        }
        groups.push((train, pred));
    }
    Ok(groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Covariates, OutcomeKind};

    #[test]
    fn folds_are_balanced_and_deterministic() {
        let f = assign_folds(10, 3, 7);
        let mut counts = [0; 3];
        for &k in &f {
            counts[k] += 1;
        }
        counts.sort();
        assert_eq!(counts, [3, 3, 4]);
        assert_eq!(f, assign_folds(10, 3, 7));
        assert_ne!(f, assign_folds(10, 3, 8));
    }

    #[test]
    fn intercept_only_propensity_is_sample_fraction() {
        let mut a = vec![1.0; 30];
        a.extend(vec![0.0; 70]);
        let ds = Dataset::new(vec![0.0; 100], a, Covariates::empty(100), OutcomeKind::Continuous).unwrap();
        let m = fit_propensity(&ds, &NuisanceConfig::default()).unwrap();
        assert!((m.predict(&[]) - 0.30).abs() < 1e-9);
    }

    #[test]
    fn constant_outcome_fit() {
        let xs: Vec<f64> = (0..8).map(|i| i as f64 * 0.7 - 2.0).collect();
        let ds = Dataset::new(
            vec![3.0, 9.0, 3.0, -1.0, 3.0, 4.0, 3.0, 0.5],
            vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
            Covariates::from_columns(8, vec![xs]).unwrap(),
            OutcomeKind::Continuous,
        )
        .unwrap();
        let m = fit_outcome_mean(&ds, 0, &NuisanceConfig::default()).unwrap();
        for x in [-5.0, 0.0, 12.0] {
            assert!((m.predict(&[x]) - 3.0).abs() < 1e-12);
        }
        let sd = fit_conditional_sd(&ds, 0, &m, &NuisanceConfig::default()).unwrap();
        assert_eq!(sd.predict(&[1.0]), 0.0);
        assert!(matches!(fit_outcome_mean(&ds, 2, &NuisanceConfig::default()), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn insufficient_arm_data() {
        let x = Covariates::from_columns(4, vec![vec![0.0, 1.0, 2.0, 3.0], vec![1.0, 0.0, 1.0, 0.0]]).unwrap();
        let ds = Dataset::new(vec![0.0; 4], vec![1.0, 0.0, 0.0, 0.0], x, OutcomeKind::Continuous).unwrap();
        let err = fit_outcome_mean(&ds, 1, &NuisanceConfig::default()).unwrap_err();
        assert_eq!(err, Error::InsufficientArmData { arm: 1, have: 1, need: 3 });
    }

    #[test]
    fn too_many_folds() {
        let ds = Dataset::new(
            vec![0.0; 6],
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
            Covariates::empty(6),
            OutcomeKind::Continuous,
        )
        .unwrap();
        let cfg = NuisanceConfig {
            folds: 3,
            ..NuisanceConfig::default()
        };
        assert!(matches!(
            compute_nuisances(&ds, &cfg, None, NuisanceNeeds::MINIMAL),
            Err(Error::FoldTooSmall { .. })
        ));
    }

    #[test]
    fn oracle_pass_through_clips_pi() {
        let ds = Dataset::new(
            vec![1.0, 2.0, 3.0, 4.0],
            vec![1.0, 0.0, 1.0, 0.0],
            Covariates::empty(4),
            OutcomeKind::Continuous,
        )
        .unwrap();
        let oracle = OracleNuisances {
            pi: Some(vec![0.001, 0.5, 0.7, 0.999]),
            mu0: Some(vec![1.0, 1.5, 2.0, 2.5]),
            mu1: Some(vec![2.0, 2.5, 3.0, 3.5]),
            sigma0: Some(vec![1.0; 4]),
            sigma1: Some(vec![2.0; 4]),
        };
        let nv = compute_nuisances(&ds, &NuisanceConfig::oracle(), Some(&oracle), NuisanceNeeds::ALL).unwrap();
        assert_eq!(nv.pi(), &[0.01, 0.5, 0.7, 0.99]);
        assert_eq!(nv.mu0(), oracle.mu0.as_deref().unwrap());
        assert_eq!(nv.mu1(), oracle.mu1.as_deref());
        assert_eq!(nv.sigma1(), oracle.sigma1.as_deref());

        let missing = OracleNuisances {
            mu1: None,
            ..oracle.clone()
        };
        assert_eq!(
            compute_nuisances(&ds, &NuisanceConfig::oracle(), Some(&missing), NuisanceNeeds::ALL),
            Err(Error::MissingOracle("mu1"))
        );
        let skip = NuisanceConfig {
            sd_method: SdMethod::Skip,
            ..NuisanceConfig::oracle()
        };
        let nv = compute_nuisances(&ds, &skip, Some(&missing), NuisanceNeeds::MINIMAL).unwrap();
        assert!(nv.mu1().is_none() && nv.sigma0().is_none());
    }
}
