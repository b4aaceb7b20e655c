use nalgebra::DMatrix;

use super::fit::{diag_se, symmetrize};
use crate::error::{Error, Result};

/// Transformed estimates with their delta-method covariance.
#[derive(Debug, Clone)]
pub struct DeltaResult {
    pub values: Vec<f64>,
    pub jacobian: DMatrix<f64>,
    pub covariance: DMatrix<f64>,
    pub se: Vec<f64>,
}

/// Central-difference Jacobian of `g` at `theta`, step max(1e-6, 1e-6·|θ_k|).
pub fn jacobian(g: &dyn Fn(&[f64]) -> Vec<f64>, theta: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let base = g(theta);
    if let Some(i) = base.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "transformation is not finite at the estimate (output {i})"
        )));
    }
    let m = base.len();
    let p = theta.len();
    let mut jac = DMatrix::zeros(m, p);
    let mut t = theta.to_vec();
    for k in 0..p {
        let h = (1e-6 * theta[k].abs()).max(1e-6);
        t[k] = theta[k] + h;
        let up = g(&t);
        t[k] = theta[k] - h;
        let down = g(&t);
        t[k] = theta[k];
        if up.len() != m || down.len() != m {
            return Err(Error::InvalidInput("transformation changed output length".into()));
        }
        for i in 0..m {
            let d = (up[i] - down[i]) / (2.0 * h);
            if !d.is_finite() {
                return Err(Error::NonFinite { coordinate: k });
            }
            jac[(i, k)] = d;
        }
    }
    Ok((base, jac))
}

/// Delta-method standard errors: sqrt(diag(J·Σ·Jᵀ)).
pub fn delta_method(
    g: &dyn Fn(&[f64]) -> Vec<f64>,
    theta: &[f64],
    cov: &DMatrix<f64>,
) -> Result<DeltaResult> {
    if cov.nrows() != theta.len() || cov.ncols() != theta.len() {
        return Err(Error::InvalidInput(format!(
            "covariance is {}x{} but theta has {} entries",
            cov.nrows(),
            cov.ncols(),
            theta.len()
        )));
    }
    let (values, jac) = jacobian(g, theta)?;
    let mut covariance = &jac * cov * jac.transpose();
    symmetrize(&mut covariance);
    let se = (0..values.len())
        .map(|i| diag_se(covariance[(i, i)]))
        .collect();
    Ok(DeltaResult {
        values,
        jacobian: jac,
        covariance,
        se,
    })
}
