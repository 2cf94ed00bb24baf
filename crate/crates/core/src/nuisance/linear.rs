//! Ridge-stabilized least squares for the outcome means and conditional
//! standard deviations.

use nalgebra::{DMatrix, DVector};

use super::linalg::{solve_spd, Standardizer};
use crate::data::Covariates;
use crate::error::Result;

/// Least-squares fit of a target on `(1, x)`.
///
/// Covariates are standardized over the training rows, so the intercept
/// decouples from the slopes and is the training mean of the target; the
/// ridge term only touches the slopes.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    standardizer: Standardizer,
    intercept: f64,
    slopes: Vec<f64>,
}

impl LinearModel {
    pub fn fit(x: &Covariates, rows: &[usize], target: impl Fn(usize) -> f64, ridge: f64) -> Result<Self> {
        let standardizer = Standardizer::fit(x, rows);
        let d = standardizer.dim();
        let m = rows.len() as f64;
        let ys: Vec<f64> = rows.iter().map(|&i| target(i)).collect();
        let intercept = ys.iter().sum::<f64>() / m;
        if d == 0 {
            return Ok(Self {
                standardizer,
                intercept,
                slopes: Vec::new(),
            });
        }
        let z = standardizer.design(x, rows);
        let mut gram = DMatrix::<f64>::zeros(d, d);
        let mut rhs = DVector::<f64>::zeros(d);
        for (r, &y) in ys.iter().enumerate() {
            let zr = &z[r * d..(r + 1) * d];
            let centered = y - intercept;
            for j in 0..d {
                rhs[j] += zr[j] * centered;
                for k in 0..=j {
                    gram[(j, k)] += zr[j] * zr[k];
                }
            }
        }
        for j in 0..d {
            for k in 0..j {
                gram[(k, j)] = gram[(j, k)];
            }
            gram[(j, j)] += ridge;
        }
        let beta = solve_spd(gram, &rhs)?;
        Ok(Self {
            standardizer,
            intercept,
            slopes: beta.iter().copied().collect(),
        })
    }

    pub fn predict(&self, raw: &[f64]) -> f64 {
        let mut acc = self.intercept;
        for (j, b) in self.slopes.iter().enumerate() {
            acc += b * (raw[j] - self.standardizer.mean()[j]) / self.standardizer.scale()[j];
        }
        acc
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

    /// Intercept and slopes in the original covariate coordinates.
    pub fn coefficients(&self) -> (f64, Vec<f64>) {
        let mut intercept = self.intercept;
        let slopes: Vec<f64> = self
            .slopes
            .iter()
            .enumerate()
            .map(|(j, b)| {
                let s = b / self.standardizer.scale()[j];
                intercept -= s * self.standardizer.mean()[j];
                s
            })
            .collect();
        (intercept, slopes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_is_recovered() {
        let xs = vec![-1.0, 0.0, 0.5, 2.0, 3.0];
        let x = Covariates::from_columns(5, vec![xs.clone()]).unwrap();
        let rows: Vec<usize> = (0..5).collect();
        let m = LinearModel::fit(&x, &rows, |i| 2.0 * xs[i] + 1.0, 1e-8).unwrap();
        let (b0, b) = m.coefficients();
        assert!((b0 - 1.0).abs() < 1e-6 && (b[0] - 2.0).abs() < 1e-6);
        assert!((m.predict(&[10.0]) - 21.0).abs() < 1e-6);
    }

    #[test]
    fn intercept_only_is_mean() {
        let x = Covariates::empty(4);
        let vals = [1.0, 2.0, 4.0, 9.0];
        let m = LinearModel::fit(&x, &[0, 2, 3], |i| vals[i], 1e-8).unwrap();
        assert_eq!(m.predict(&[]), (1.0 + 4.0 + 9.0) / 3.0);
    }
}
