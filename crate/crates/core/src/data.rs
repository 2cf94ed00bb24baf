//! Observed data, nuisance predictions and the estimand taxonomy.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeKind {
    #[default]
    Continuous,
    Binary,
}

/// Covariate matrix stored column-major. `d = 0` is allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariates {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl Covariates {
    /// Builds from columns; every column must have length `n`.
    pub fn from_columns(n: usize, columns: Vec<Vec<f64>>) -> Result<Self> {
        let d = columns.len();
        let mut data = Vec::with_capacity(n * d);
        for col in columns {
            if col.len() != n {
                return Err(Error::LengthMismatch {
                    field: "x",
                    expected: n,
                    got: col.len(),
                });
            }
            data.extend(col);
        }
        Ok(Self { n, d, data })
    }

    /// Builds from a row-major buffer of `n * d` values.
    pub fn from_row_major(n: usize, d: usize, values: &[f64]) -> Result<Self> {
        if values.len() != n * d {
            return Err(Error::LengthMismatch {
                field: "x",
                expected: n * d,
                got: values.len(),
            });
        }
        let mut data = vec![0.0; n * d];
        for i in 0..n {
            for j in 0..d {
                data[j * n + i] = values[i * d + j];
            }
        }
        Ok(Self { n, d, data })
    }

    pub fn empty(n: usize) -> Self {
        Self {
            n,
            d: 0,
            data: Vec::new(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.d
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.n..(j + 1) * self.n]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.n + i]
    }

    /// Copies row `i` into `buf` (which must have length `d`).
    pub fn row_into(&self, i: usize, buf: &mut [f64]) {
        for (j, slot) in buf.iter_mut().enumerate() {
            *slot = self.data[j * self.n + i];
        }
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        let mut buf = vec![0.0; self.d];
        self.row_into(i, &mut buf);
        buf
    }
}

/// Observed triples `(y, a, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    a: Vec<bool>,
    x: Covariates,
    outcome_kind: OutcomeKind,
}

impl Dataset {
    /// Validating constructor. `a` must hold exactly 0.0 or 1.0.
    pub fn new(y: Vec<f64>, a: Vec<f64>, x: Covariates, outcome_kind: OutcomeKind) -> Result<Self> {
        let n = y.len();
        if a.len() != n {
            return Err(Error::LengthMismatch {
                field: "a",
                expected: n,
                got: a.len(),
            });
        }
        let mut flags = Vec::with_capacity(n);
        for (row, &v) in a.iter().enumerate() {
            if v == 1.0 {
                flags.push(true);
            } else if v == 0.0 {
                flags.push(false);
            } else {
                return Err(Error::NonBinaryTreatment { row, value: v });
            }
        }
        validate(Self {
            y,
            a: flags,
            x,
            outcome_kind,
        })
    }

    pub fn from_flags(y: Vec<f64>, a: Vec<bool>, x: Covariates, outcome_kind: OutcomeKind) -> Result<Self> {
        validate(Self {
            y,
            a,
            x,
            outcome_kind,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn treated(&self) -> &[bool] {
        &self.a
    }

    /// Treatment indicator as 0.0/1.0.
    pub fn a(&self, i: usize) -> f64 {
        indicator(self.a[i])
    }

    pub fn x(&self) -> &Covariates {
        &self.x
    }

    pub fn outcome_kind(&self) -> OutcomeKind {
        self.outcome_kind
    }

    pub fn n_treated(&self) -> usize {
        self.a.iter().filter(|&&t| t).count()
    }

    pub fn n_control(&self) -> usize {
        self.n() - self.n_treated()
    }

    /// `Pn(A)`, the sample fraction treated.
    pub fn treated_fraction(&self) -> f64 {
        self.n_treated() as f64 / self.n() as f64
    }

    pub fn with_outcome_kind(mut self, kind: OutcomeKind) -> Result<Self> {
        self.outcome_kind = kind;
        validate(self)
    }
}

#[inline]
pub(crate) fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Checks every [`Dataset`] invariant and hands the dataset back unchanged.
pub fn validate(dataset: Dataset) -> Result<Dataset> {
    let n = dataset.y.len();
    if dataset.a.len() != n {
        return Err(Error::LengthMismatch {
            field: "a",
            expected: n,
            got: dataset.a.len(),
        });
    }
    if dataset.x.nrows() != n {
        return Err(Error::LengthMismatch {
            field: "x",
            expected: n,
            got: dataset.x.nrows(),
        });
    }
    if n < 2 {
        return Err(Error::TooFewRows { min: 2, got: n });
    }
    if let Some(row) = dataset.y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { field: "y", row });
    }
    for j in 0..dataset.x.ncols() {
        if let Some(row) = dataset.x.column(j).iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { field: "x", row });
        }
    }
    let treated = dataset.n_treated();
    if treated == 0 {
        return Err(Error::DegenerateTreatment("no treated units".into()));
    }
    if treated == n {
        return Err(Error::DegenerateTreatment("no control units".into()));
    }
    if dataset.outcome_kind == OutcomeKind::Binary {
        if let Some(row) = dataset.y.iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::NonBinaryOutcome {
                row,
                value: dataset.y[row],
            });
        }
    }
    Ok(dataset)
}

/// Which interpretation of "effect on the treated" an estimand follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Taxonomy {
    /// Averages over the treated units only.
    Literal,
    /// Propensity-weighted average over all units.
    Figurative,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimandKind {
    Patt,
    Actt,
    Swatt,
    Catt,
    Satt,
    Matt,
}

impl EstimandKind {
    pub const ALL: [EstimandKind; 6] = [
        EstimandKind::Patt,
        EstimandKind::Actt,
        EstimandKind::Swatt,
        EstimandKind::Catt,
        EstimandKind::Satt,
        EstimandKind::Matt,
    ];

    pub fn taxonomy(self) -> Taxonomy {
        match self {
            EstimandKind::Patt => Taxonomy::Both,
            EstimandKind::Actt | EstimandKind::Swatt => Taxonomy::Figurative,
            EstimandKind::Catt | EstimandKind::Satt | EstimandKind::Matt => Taxonomy::Literal,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EstimandKind::Patt => "patt",
            EstimandKind::Actt => "actt",
            EstimandKind::Swatt => "swatt",
            EstimandKind::Catt => "catt",
            EstimandKind::Satt => "satt",
            EstimandKind::Matt => "matt",
        }
    }

    /// Whether variance estimation for this estimand needs a treated-arm
    /// outcome model.
    pub fn needs_mu1(self) -> bool {
        matches!(self, EstimandKind::Actt | EstimandKind::Swatt | EstimandKind::Catt)
    }

    /// Stable integer code used across the C ABI.
    pub fn code(self) -> u32 {
        match self {
            EstimandKind::Patt => 0,
            EstimandKind::Actt => 1,
            EstimandKind::Swatt => 2,
            EstimandKind::Catt => 3,
            EstimandKind::Satt => 4,
            EstimandKind::Matt => 5,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for EstimandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimandKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown estimand `{s}`")))
    }
}

/// Per-unit nuisance predictions. Propensities are clipped on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceValues {
    pi: Vec<f64>,
    mu0: Vec<f64>,
    mu1: Option<Vec<f64>>,
    sigma0: Option<Vec<f64>>,
    sigma1: Option<Vec<f64>>,
    clip_eps: f64,
}

impl NuisanceValues {
    pub fn new(
        pi: Vec<f64>,
        mu0: Vec<f64>,
        mu1: Option<Vec<f64>>,
        sigma: Option<(Vec<f64>, Vec<f64>)>,
        clip_eps: f64,
    ) -> Result<Self> {
        if !(clip_eps > 0.0 && clip_eps < 0.5) {
            return Err(Error::InvalidConfig(format!("clip_eps must lie in (0, 0.5), got {clip_eps}")));
        }
        let n = pi.len();
        check_vec("mu0", &mu0, n)?;
        for (row, &p) in pi.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::InvalidNuisance { field: "pi", row, value: p });
            }
        }
        let pi = pi.into_iter().map(|p| p.clamp(clip_eps, 1.0 - clip_eps)).collect();
        if let Some(m) = &mu1 {
            check_vec("mu1", m, n)?;
        }
        let (sigma0, sigma1) = match sigma {
            Some((s0, s1)) => {
                check_vec("sigma0", &s0, n)?;
                check_vec("sigma1", &s1, n)?;
                for (field, s) in [("sigma0", &s0), ("sigma1", &s1)] {
                    if let Some(row) = s.iter().position(|&v| v < 0.0) {
                        return Err(Error::InvalidNuisance {
                            field,
                            row,
                            value: s[row],
                        });
                    }
                }
                (Some(s0), Some(s1))
            }
            None => (None, None),
        };
        Ok(Self {
            pi,
            mu0,
            mu1,
            sigma0,
            sigma1,
            clip_eps,
        })
    }

    pub fn n(&self) -> usize {
        self.pi.len()
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn mu0(&self) -> &[f64] {
        &self.mu0
    }

    pub fn mu1(&self) -> Option<&[f64]> {
        self.mu1.as_deref()
    }

    pub fn sigma0(&self) -> Option<&[f64]> {
        self.sigma0.as_deref()
    }

    pub fn sigma1(&self) -> Option<&[f64]> {
        self.sigma1.as_deref()
    }

    pub fn clip_eps(&self) -> f64 {
        self.clip_eps
    }

    /// Fails unless these predictions were computed for `dataset`.
    pub fn check_matches(&self, dataset: &Dataset) -> Result<()> {
        if self.n() != dataset.n() {
            return Err(Error::LengthMismatch {
                field: "nuisances",
                expected: dataset.n(),
                got: self.n(),
            });
        }
        Ok(())
    }
}

fn check_vec(field: &'static str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::LengthMismatch {
            field,
            expected: n,
            got: v.len(),
        });
    }
    if let Some(row) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::InvalidNuisance {
            field,
            row,
            value: v[row],
        });
    }
    Ok(())
}

/// Per-unit plug-in values of the influence-function components.
#[derive(Debug, Clone, PartialEq)]
pub struct IfComponents {
    /// Outcome-distribution component.
    pub psi_y: Vec<f64>,
    /// Treatment-assignment component.
    pub psi_a: Vec<f64>,
    /// Covariate-distribution component.
    pub psi_x: Vec<f64>,
    /// Outcome component of the influence function of the treated mean of `Y0`.
    pub tau_y: Vec<f64>,
}

impl IfComponents {
    pub fn total(&self) -> Vec<f64> {
        self.psi_y
            .iter()
            .zip(&self.psi_a)
            .zip(&self.psi_x)
            .map(|((y, a), x)| y + a + x)
            .collect()
    }
}
