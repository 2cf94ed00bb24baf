//! CSV ingestion: header `y,a,x1,...,xd` plus optional
//! `pi,mu0,mu1,sigma0,sigma1` columns, in any order.

use std::io::Read;

use super::CliError;
use crate::data::{Covariates, Dataset, OutcomeKind};
use crate::nuisance::OracleNuisances;

const ORACLE_COLUMNS: [&str; 5] = ["pi", "mu0", "mu1", "sigma0", "sigma1"];

#[derive(Debug, Clone)]
pub struct CsvInput {
    pub y: Vec<f64>,
    pub a: Vec<f64>,
    /// Covariate columns in `x1..xd` order.
    pub x: Vec<Vec<f64>>,
    pub oracle: OracleNuisances,
}

impl CsvInput {
    pub fn has_oracle(&self) -> bool {
        self.oracle.pi.is_some() && self.oracle.mu0.is_some()
    }

    pub fn into_dataset(self, kind: OutcomeKind) -> crate::Result<(Dataset, OracleNuisances)> {
        let n = self.y.len();
        let x = Covariates::from_columns(n, self.x)?;
        let ds = crate::data::validate(Dataset::new(self.y, self.a, x, kind)?)?;
        Ok((ds, self.oracle))
    }
}

fn covariate_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('x')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0') {
        return None;
    }
    digits.parse().ok()
}

pub fn read_csv<R: Read>(reader: R) -> Result<CsvInput, CliError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::parse("CsvParse", format!("cannot read CSV header: {e}")))?
        .iter()
        .map(str::to_owned)
        .collect();

    let mut seen = std::collections::BTreeSet::new();
    let mut y_col = None;
    let mut a_col = None;
    let mut x_cols: Vec<(usize, usize)> = Vec::new();
    let mut oracle_cols: [Option<usize>; 5] = [None; 5];
    for (c, name) in headers.iter().enumerate() {
        if !seen.insert(name.as_str()) {
            return Err(CliError::parse("CsvParse", format!("duplicate column `{name}`")));
        }
        match name.as_str() {
            "y" => y_col = Some(c),
            "a" => a_col = Some(c),
            other => {
                if let Some(k) = covariate_index(other) {
                    x_cols.push((k, c));
                } else if let Some(j) = ORACLE_COLUMNS.iter().position(|&o| o == other) {
                    oracle_cols[j] = Some(c);
                } else {
                    return Err(CliError::parse("CsvParse", format!("unknown column `{other}`")));
                }
            }
        }
    }
    let y_col = y_col.ok_or_else(|| CliError::parse("MissingColumn", "missing required column `y`".into()))?;
    let a_col = a_col.ok_or_else(|| CliError::parse("MissingColumn", "missing required column `a`".into()))?;
    x_cols.sort_unstable();
    for (expect, &(k, _)) in (1..).zip(&x_cols) {
        if k != expect {
            return Err(CliError::parse("MissingColumn", format!("missing covariate column `x{expect}`")));
        }
    }

    let mut y = Vec::new();
    let mut a = Vec::new();
    let mut x = vec![Vec::new(); x_cols.len()];
    let mut oracle: [Option<Vec<f64>>; 5] = Default::default();
    for (j, c) in oracle_cols.iter().enumerate() {
        if c.is_some() {
            oracle[j] = Some(Vec::new());
        }
    }
    for (r, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| CliError::parse("CsvParse", format!("data row {}: {e}", r + 1)))?;
        if record.len() != headers.len() {
            return Err(CliError::parse(
                "CsvParse",
                format!("data row {} has {} fields, header has {}", r + 1, record.len(), headers.len()),
            ));
        }
        let field = |c: usize| -> Result<f64, CliError> {
            record[c].parse::<f64>().map_err(|_| {
                CliError::parse(
                    "CsvParse",
                    format!("data row {}, column `{}`: `{}` is not a number", r + 1, headers[c], &record[c]),
                )
            })
        };
        y.push(field(y_col)?);
        a.push(field(a_col)?);
        for (col, &(_, c)) in x.iter_mut().zip(&x_cols) {
            col.push(field(c)?);
        }
        for (j, c) in oracle_cols.iter().enumerate() {
            if let (Some(c), Some(v)) = (c, oracle[j].as_mut()) {
                v.push(field(*c)?);
            }
        }
    }
    let [pi, mu0, mu1, sigma0, sigma1] = oracle;
    Ok(CsvInput {
        y,
        a,
        x,
        oracle: OracleNuisances {
            pi,
            mu0,
            mu1,
            sigma0,
            sigma1,
        },
    })
}
