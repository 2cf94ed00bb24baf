//! Ridge-penalized logistic regression by iteratively reweighted least
//! squares with step halving.

use nalgebra::{DMatrix, DVector};

use super::linalg::{inverse_spd, solve_spd, Standardizer};
use crate::data::Covariates;
use crate::error::{Error, Result};

const MIN_WEIGHT: f64 = 1e-12;
const MAX_HALVINGS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    standardizer: Standardizer,
    /// Intercept first, slopes on the standardized scale.
    coef: Vec<f64>,
    std_errors: Vec<f64>,
    clip_eps: f64,
    iterations: usize,
    objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct IrlsSettings {
    pub max_iter: usize,
    pub tol: f64,
    pub ridge: f64,
    pub clip_eps: f64,
}

fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

struct Problem<'a> {
    z: &'a [f64],
    labels: &'a [f64],
    p: usize,
    ridge: f64,
}

impl Problem<'_> {
    fn eta(&self, r: usize, beta: &[f64]) -> f64 {
        let zr = &self.z[r * (self.p - 1)..(r + 1) * (self.p - 1)];
        beta[0] + zr.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Penalized log-likelihood.
    fn objective(&self, beta: &[f64]) -> f64 {
        let ll: f64 = (0..self.labels.len())
            .map(|r| {
                let eta = self.eta(r, beta);
                self.labels[r] * eta - softplus(eta)
            })
            .sum();
        ll - 0.5 * self.ridge * beta.iter().map(|b| b * b).sum::<f64>()
    }

    /// Gradient and (negated) Hessian of the penalized log-likelihood.
    fn newton_system(&self, beta: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        let p = self.p;
        let mut h = DMatrix::<f64>::zeros(p, p);
        let mut g = DVector::<f64>::zeros(p);
        let mut row = vec![0.0; p];
        row[0] = 1.0;
        for r in 0..self.labels.len() {
            row[1..].copy_from_slice(&self.z[r * (p - 1)..(r + 1) * (p - 1)]);
            let prob = sigmoid(self.eta(r, beta));
            let w = (prob * (1.0 - prob)).max(MIN_WEIGHT);
            let resid = self.labels[r] - prob;
            for j in 0..p {
                g[j] += row[j] * resid;
                for k in 0..=j {
                    h[(j, k)] += w * row[j] * row[k];
                }
            }
        }
        for j in 0..p {
            for k in 0..j {
                h[(k, j)] = h[(j, k)];
            }
            h[(j, j)] += self.ridge;
            g[j] -= self.ridge * beta[j];
        }
        (h, g)
    }
}

impl LogisticModel {
    /// Fits `P(label = 1 | x)` on `rows`. `label(i)` must return 0.0 or 1.0.
    pub fn fit(x: &Covariates, rows: &[usize], label: impl Fn(usize) -> f64, settings: IrlsSettings) -> Result<Self> {
        let standardizer = Standardizer::fit(x, rows);
        let p = standardizer.dim() + 1;
        let z = standardizer.design(x, rows);
        let labels: Vec<f64> = rows.iter().map(|&i| label(i)).collect();
        let problem = Problem {
            z: &z,
            labels: &labels,
            p,
            ridge: settings.ridge,
        };

        let frac = labels.iter().sum::<f64>() / labels.len().max(1) as f64;
        let frac = frac.clamp(1e-6, 1.0 - 1e-6);
        let mut beta = vec![0.0; p];
        beta[0] = (frac / (1.0 - frac)).ln();
        let mut obj = problem.objective(&beta);
        let mut trace = vec![obj];
        let mut converged = false;
        let mut iterations = 0;

        while iterations < settings.max_iter {
            iterations += 1;
            let (h, g) = problem.newton_system(&beta);
            let step = solve_spd(h, &g).map_err(|_| Error::IrlsDiverged {
                iterations,
                reason: "working Hessian not positive definite".into(),
            })?;
            if step.iter().any(|s| !s.is_finite()) {
                return Err(Error::IrlsDiverged {
                    iterations,
                    reason: "non-finite Newton step".into(),
                });
            }

            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..MAX_HALVINGS {
                let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + t * s).collect();
                let cand_obj = problem.objective(&cand);
                if cand_obj.is_finite() && cand_obj >= obj {
                    accepted = Some((cand, cand_obj));
                    break;
                }
                t *= 0.5;
            }
            let Some((cand, cand_obj)) = accepted else {
                // no ascent direction survives halving: numerically stationary
                converged = true;
                break;
            };
            let rel = (cand_obj - obj).abs() / (cand_obj.abs() + 0.1);
            beta = cand;
            obj = cand_obj;
            trace.push(obj);
            if rel < settings.tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::IrlsDiverged {
                iterations,
                reason: format!("no convergence within {} iterations", settings.max_iter),
            });
        }

        let (h, _) = problem.newton_system(&beta);
        let std_errors = match inverse_spd(h) {
            Ok(inv) => (0..p).map(|j| inv[(j, j)].max(0.0).sqrt()).collect(),
            Err(_) => vec![f64::NAN; p],
        };

        Ok(Self {
            standardizer,
            coef: beta,
            std_errors,
            clip_eps: settings.clip_eps,
            iterations,
            objective_trace: trace,
        })
    }

    /// Clipped probability at a raw covariate vector.
    pub fn predict(&self, raw: &[f64]) -> f64 {
        sigmoid(self.linear_predictor(raw)).clamp(self.clip_eps, 1.0 - self.clip_eps)
    }

    pub fn linear_predictor(&self, raw: &[f64]) -> f64 {
        let mut eta = self.coef[0];
        for j in 0..self.standardizer.dim() {
            eta += self.coef[j + 1] * (raw[j] - self.standardizer.mean()[j]) / self.standardizer.scale()[j];
        }
        eta
    }

    pub fn predict_rows(&self, x: &Covariates, rows: &[usize]) -> Vec<f64> {
        let mut buf = vec![0.0; x.ncols()];
        rows.iter()
            .map(|&i| {
                x.row_into(i, &mut buf);
                self.predict(&buf)
            })
            .collect()
    }

    /// Coefficients on the standardized scale (intercept first).
    pub fn coefficients(&self) -> &[f64] {
        &self.coef
    }

    /// Standard errors of [`Self::coefficients`] from the inverse penalized
    /// information at the optimum.
    pub fn standard_errors(&self) -> &[f64] {
        &self.std_errors
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Penalized log-likelihood after each accepted iteration (initial value first).
    pub fn objective_trace(&self) -> &[f64] {
        &self.objective_trace
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings() -> IrlsSettings {
        IrlsSettings {
            max_iter: 100,
            tol: 1e-8,
            ridge: 1e-8,
            clip_eps: 0.01,
        }
    }

    #[test]
    fn stable_helpers() {
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0);
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn known_two_group_mle() {
        // x in {0,1}; 1 of 4 treated at x=0, 3 of 4 at x=1: saturated MLE p = 0.25, 0.75
        let xs = vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        let a = [1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0];
        let x = Covariates::from_columns(8, vec![xs]).unwrap();
        let rows: Vec<usize> = (0..8).collect();
        let m = LogisticModel::fit(&x, &rows, |i| a[i], settings()).unwrap();
        assert!((m.predict(&[0.0]) - 0.25).abs() < 1e-7);
        assert!((m.predict(&[1.0]) - 0.75).abs() < 1e-7);
    }

    #[test]
    fn objective_never_decreases() {
        let xs: Vec<f64> = (0..40).map(|i| (i as f64 - 20.0) / 7.0).collect();
        let a: Vec<f64> = (0..40).map(|i| if (i * 7919) % 11 < 5 + i / 8 { 1.0 } else { 0.0 }).collect();
        let x = Covariates::from_columns(40, vec![xs]).unwrap();
        let rows: Vec<usize> = (0..40).collect();
        let m = LogisticModel::fit(&x, &rows, |i| a[i], settings()).unwrap();
        for w in m.objective_trace().windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn separated_sample_gives_clipped_monotone_predictions() {
        let xs: Vec<f64> = vec![-5.0, -4.0, -3.0, -2.0, -1.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let x = Covariates::from_columns(10, vec![xs.clone()]).unwrap();
        let rows: Vec<usize> = (0..10).collect();
        let m = LogisticModel::fit(&x, &rows, |i| if xs[i] > 0.0 { 1.0 } else { 0.0 }, settings()).unwrap();
        let p = m.predict_rows(&x, &rows);
        assert!(p.iter().all(|v| v.is_finite() && (0.01..=0.99).contains(v)));
        assert!(p.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn iteration_cap_reports_divergence() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64 - 4.5).collect();
        let x = Covariates::from_columns(10, vec![xs.clone()]).unwrap();
        let rows: Vec<usize> = (0..10).collect();
        let s = IrlsSettings { max_iter: 1, ..settings() };
        let err = LogisticModel::fit(&x, &rows, |i| if xs[i] > 0.0 { 1.0 } else { 0.0 }, s).unwrap_err();
        assert!(matches!(err, Error::IrlsDiverged { .. }));
    }
}
