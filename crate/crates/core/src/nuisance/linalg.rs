use nalgebra::{DMatrix, DVector};

use crate::data::Covariates;
use crate::error::{Error, Result};

/// Per-column centering and scaling learned from a set of training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Covariates, rows: &[usize]) -> Self {
        let d = x.ncols();
        let m = rows.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        let mut scale = vec![1.0; d];
        for j in 0..d {
            let col = x.column(j);
            let mu = rows.iter().map(|&i| col[i]).sum::<f64>() / m;
            let var = rows.iter().map(|&i| (col[i] - mu).powi(2)).sum::<f64>() / m;
            mean[j] = mu;
            // constant columns stay centered at zero; the ridge term pins their coefficient
            scale[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        Self { mean, scale }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    /// Writes the standardized row into `out`.
    pub fn apply(&self, raw: &[f64], out: &mut [f64]) {
        for j in 0..self.mean.len() {
            out[j] = (raw[j] - self.mean[j]) / self.scale[j];
        }
    }

    /// Standardized design rows for `rows`, flattened row-major.
    pub fn design(&self, x: &Covariates, rows: &[usize]) -> Vec<f64> {
        let d = self.dim();
        let mut z = vec![0.0; rows.len() * d];
        for (r, &i) in rows.iter().enumerate() {
            for j in 0..d {
                z[r * d + j] = (x.get(i, j) - self.mean[j]) / self.scale[j];
            }
        }
        z
    }
}

/// Solves a symmetric positive-definite system by Cholesky.
pub fn solve_spd(mat: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let chol = mat.cholesky().ok_or(Error::Singular)?;
    let sol = chol.solve(rhs);
    if sol.iter().all(|v| v.is_finite()) {
        Ok(sol)
    } else {
        Err(Error::Singular)
    }
}

pub fn inverse_spd(mat: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = mat.cholesky().ok_or(Error::Singular)?;
    Ok(chol.inverse())
}
