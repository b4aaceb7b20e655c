use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

/// Named design matrix (rows = observations).
#[derive(Debug, Clone)]
pub struct Design {
    pub names: Vec<String>,
    pub x: DMatrix<f64>,
}

impl Design {
    pub fn new(names: Vec<String>, x: DMatrix<f64>) -> Result<Self> {
        if names.len() != x.ncols() {
            return Err(Error::InvalidInput(format!(
                "design has {} columns but {} names",
                x.ncols(),
                names.len()
            )));
        }
        Ok(Design { names, x })
    }

    /// Build from row vectors.
    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let k = names.len();
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != k) {
            return Err(Error::InvalidInput(format!(
                "design row {i} has {} entries, expected {k}",
                r.len()
            )));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Design::new(names, DMatrix::from_row_slice(rows.len(), k, &flat))
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    /// Keep only the listed rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Design {
        Design {
            names: self.names.clone(),
            x: self.x.select_rows(rows),
        }
    }

    /// Append a column.
    pub fn with_column(&self, name: &str, col: &[f64]) -> Result<Design> {
        if col.len() != self.nrows() {
            return Err(Error::InvalidInput(format!(
                "column {name} has {} rows, design has {}",
                col.len(),
                self.nrows()
            )));
        }
        let mut x = self.x.clone().insert_column(self.ncols(), 0.0);
        let k = self.ncols();
        for (i, v) in col.iter().enumerate() {
            x[(i, k)] = *v;
        }
        let mut names = self.names.clone();
        names.push(name.to_string());
        Ok(Design { names, x })
    }

    /// Columns that are (numerically) linear combinations of earlier ones,
    /// found by modified Gram–Schmidt.
    pub fn collinear_columns(&self) -> Vec<String> {
        let n = self.nrows();
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let mut bad = Vec::new();
        for j in 0..self.ncols() {
            let mut v: Vec<f64> = self.x.column(j).iter().copied().collect();
            let norm0 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            for q in &basis {
                let dot: f64 = (0..n).map(|i| q[i] * v[i]).sum();
                for i in 0..n {
                    v[i] -= dot * q[i];
                }
            }
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm0 == 0.0 || norm <= 1e-10 * norm0 {
                bad.push(self.names[j].clone());
            } else {
                basis.push(v.iter().map(|a| a / norm).collect());
            }
        }
        bad
    }

    pub fn check_rank(&self) -> Result<()> {
        let bad = self.collinear_columns();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::SingularDesign(bad))
        }
    }
}

/// Output of any fitter: named coefficients with their covariance.
#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    #[serde(skip)]
    pub covariance: DMatrix<f64>,
    pub loglik: Option<f64>,
    pub n: usize,
    pub converged: bool,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn coef(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.coefficients[i])
    }

    pub fn se(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| diag_se(self.covariance[(i, i)]))
    }

    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.coefficients.len())
            .map(|i| diag_se(self.covariance[(i, i)]))
            .collect()
    }

    /// Covariance of a subset of coefficients, in the given order.
    pub fn sub_covariance(&self, idx: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(idx.len(), idx.len(), |i, j| self.covariance[(idx[i], idx[j])])
    }
}

/// Replace `m` by (m + mᵀ)/2.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let k = m.nrows();
    for i in 0..k {
        for j in (i + 1)..k {
            let a = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = a;
            m[(j, i)] = a;
        }
    }
}

/// Standard error from a variance; NaN (not zero) when the variance is
/// unavailable or negative.
pub fn diag_se(v: f64) -> f64 {
    if v < 0.0 {
        f64::NAN
    } else {
        v.sqrt()
    }
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let mut inv = m.clone().cholesky()?.inverse();
    symmetrize(&mut inv);
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_duplicate_column() {
        let d = Design::from_rows(
            vec!["c".into(), "x".into(), "x_dup".into()],
            &[vec![1.0, 0.0, 0.0], vec![1.0, 1.0, 1.0], vec![1.0, 2.0, 2.0]],
        )
        .unwrap();
        assert_eq!(d.collinear_columns(), vec!["x_dup".to_string()]);
    }
}
