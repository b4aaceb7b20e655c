use nalgebra::{DMatrix, DVector};

use super::fit::{symmetrize, Design, FitResult};
use crate::error::{Error, Result};

/// Least-squares fit with its residuals.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub fit: FitResult,
    pub residuals: Vec<f64>,
    /// σ̂² = RSS / (n − k).
    pub sigma2: f64,
    pub rss: f64,
}

/// Ordinary least squares via Householder QR; covariance σ̂²(XᵀX)⁻¹.
pub fn ols_fit(design: &Design, y: &[f64]) -> Result<OlsFit> {
    let n = design.nrows();
    let k = design.ncols();
    if y.len() != n {
        return Err(Error::InvalidInput(format!(
            "response has {} rows, design has {n}",
            y.len()
        )));
    }
    if n <= k {
        return Err(Error::InvalidInput(format!(
            "OLS needs more observations than regressors (n = {n}, k = {k})"
        )));
    }
    design.check_rank()?;

    let yv = DVector::from_column_slice(y);
    let qr = design.x.clone().qr();
    let r = qr.r();
    let qty = qr.q().transpose() * &yv;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::SingularDesign(design.names.clone()))?;

    let fitted = &design.x * &beta;
    let residuals: Vec<f64> = (0..n).map(|i| y[i] - fitted[i]).collect();
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let sigma2 = rss / (n - k) as f64;

    let r_inv = r
        .try_inverse()
        .ok_or_else(|| Error::SingularDesign(design.names.clone()))?;
    let mut covariance: DMatrix<f64> = (&r_inv * r_inv.transpose()) * sigma2;
    symmetrize(&mut covariance);

    Ok(OlsFit {
        fit: FitResult {
            names: design.names.clone(),
            coefficients: beta.iter().copied().collect(),
            covariance,
            loglik: None,
            n,
            converged: true,
            iterations: 1,
            warnings: Vec::new(),
        },
        residuals,
        sigma2,
        rss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design(xs: &[f64]) -> Design {
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![1.0, x]).collect();
        Design::from_rows(vec!["const".into(), "x".into()], &rows).unwrap()
    }

    #[test]
    fn exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = xs.iter().map(|x| 2.0 * x).collect();
        let f = ols_fit(&design(&xs), &y).unwrap();
        assert!(f.fit.coefficients[0].abs() < 1e-12);
        assert!((f.fit.coefficients[1] - 2.0).abs() < 1e-12);
        assert!(f.residuals.iter().all(|e| e.abs() < 1e-12));
    }

    #[test]
    fn hand_solved_normal_equations() {
        let f = ols_fit(&design(&[0.0, 1.0, 2.0]), &[1.0, 3.0, 4.0]).unwrap();
        assert!((f.fit.coefficients[1] - 1.5).abs() < 1e-12);
        assert!((f.fit.coefficients[0] - 7.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn duplicated_column_is_singular() {
        let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![1.0, i as f64, i as f64]).collect();
        let d = Design::from_rows(vec!["const".into(), "x".into(), "x2".into()], &rows).unwrap();
        match ols_fit(&d, &[1.0, 2.0, 3.0, 4.0, 6.0]) {
            Err(Error::SingularDesign(cols)) => assert_eq!(cols, vec!["x2".to_string()]),
            other => panic!("expected singular design, got {other:?}"),
        }
    }

    #[test]
    fn covariance_matches_textbook_formula() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 2.5, 2.9, 4.2];
        let f = ols_fit(&design(&xs), &y).unwrap();
        let xtx = design(&xs).x.transpose() * design(&xs).x;
        let expect = xtx.try_inverse().unwrap() * f.sigma2;
        assert!((f.fit.covariance.clone() - expect).abs().max() < 1e-12);
    }
}
