use nalgebra::{DMatrix, DVector};

use super::fit::{spd_inverse, Design, FitResult};
use super::normal;
use crate::error::{Error, Result};

/// Probit log-likelihood Σ ln Φ(q_i·x_iβ), q_i = 2d_i − 1.
pub fn probit_loglik(design: &Design, d: &[bool], beta: &[f64]) -> f64 {
    let b = DVector::from_column_slice(beta);
    let idx = &design.x * b;
    idx.iter()
        .zip(d)
        .map(|(&t, &di)| normal::ln_cdf(if di { t } else { -t }))
        .sum()
}

/// Gradient and observed-information pieces of the probit likelihood.
fn probit_derivatives(design: &Design, d: &[bool], beta: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
    let k = design.ncols();
    let idx = &design.x * beta;
    let mut ll = 0.0;
    let mut grad = DVector::zeros(k);
    let mut info = DMatrix::zeros(k, k);
    for (i, &t) in idx.iter().enumerate() {
        let q = if d[i] { 1.0 } else { -1.0 };
        let (lc, mills) = normal::ln_cdf_and_mills(q * t);
        ll += lc;
        let lambda = q * mills;
        // -∂²ℓ/∂t² = λ(λ + t)
        let w = lambda * (lambda + t);
        let row = design.x.row(i);
        for a in 0..k {
            grad[a] += lambda * row[a];
            let wa = w * row[a];
            for b in 0..=a {
                info[(a, b)] += wa * row[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            info[(b, a)] = info[(a, b)];
        }
    }
    (ll, grad, info)
}

/// Probit maximum likelihood by damped Newton–Raphson.
///
/// Covariance is the inverse observed information at the optimum.
pub fn probit_fit(design: &Design, d: &[bool]) -> Result<FitResult> {
    let n = design.nrows();
    let k = design.ncols();
    if d.len() != n {
        return Err(Error::InvalidInput(format!(
            "response has {} rows, design has {n}",
            d.len()
        )));
    }
    let ones = d.iter().filter(|&&v| v).count();
    if ones == 0 || ones == n {
        return Err(Error::NonConvergence(format!(
            "binary response has no variation ({ones} of {n} ones)"
        )));
    }
    design.check_rank()?;

    let mut beta = DVector::zeros(k);
    let (mut ll, mut grad, mut info) = probit_derivatives(design, d, &beta);
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..200 {
        iterations = it;
        let gnorm = grad.amax();
        if gnorm < 1e-8 {
            converged = true;
            break;
        }
        let step = match info.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => grad.clone() / grad.amax().max(1.0),
        };
        let mut scale = 1.0;
        let mut moved = false;
        for _ in 0..50 {
            let trial = &beta + &step * scale;
            let (tll, tg, ti) = probit_derivatives(design, d, &trial);
            if tll.is_finite() && tll >= ll - 1e-12 * ll.abs() {
                beta = trial;
                ll = tll;
                grad = tg;
                info = ti;
                moved = true;
                break;
            }
            scale *= 0.5;
        }
        if beta.amax() > 40.0 {
            let worst = beta.iamax();
            return Err(Error::NonConvergence(format!(
                "perfect separation suspected: coefficient `{}` diverging ({:.3e}), loglik {:.3e}",
                design.names[worst], beta[worst], ll
            )));
        }
        if !moved {
            break;
        }
    }
    let fitted = &design.x * &beta;
    if fitted
        .iter()
        .zip(d)
        .all(|(&t, &di)| (normal::cdf(t) - if di { 1.0 } else { 0.0 }).abs() < 1e-6)
    {
        return Err(Error::NonConvergence(format!(
            "perfect separation suspected: every outcome predicted exactly, loglik {ll:.3e}"
        )));
    }
    if !converged {
        let gnorm = grad.amax();
        if gnorm < 1e-6 {
            converged = true;
        } else {
            return Err(Error::NonConvergence(format!(
                "probit Newton iterations stalled with gradient ∞-norm {gnorm:.3e}"
            )));
        }
    }
    let covariance = spd_inverse(&info).ok_or_else(|| {
        Error::NonConvergence("probit information matrix is singular at the optimum".into())
    })?;
    Ok(FitResult {
        names: design.names.clone(),
        coefficients: beta.iter().copied().collect(),
        covariance,
        loglik: Some(ll),
        n,
        converged,
        iterations,
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn const_design(n: usize) -> Design {
        Design::from_rows(vec!["const".into()], &vec![vec![1.0]; n]).unwrap()
    }

    #[test]
    fn constant_only_recovers_inverse_cdf() {
        let d: Vec<bool> = (0..100).map(|i| i < 30).collect();
        let fit = probit_fit(&const_design(100), &d).unwrap();
        assert!((fit.coefficients[0] - normal::quantile(0.3)).abs() < 1e-8);
        assert!((fit.coefficients[0] + 0.5244).abs() < 1e-4);
    }

    #[test]
    fn symmetric_split_has_zero_intercept() {
        let xs = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0];
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![1.0, x]).collect();
        let design = Design::from_rows(vec!["const".into(), "x".into()], &rows).unwrap();
        // antisymmetric labelling: d(x) = !d(-x)
        let d = [false, true, false, true, false, true];
        let fit = probit_fit(&design, &d).unwrap();
        assert!(fit.coefficients[0].abs() < 1e-10);
    }

    #[test]
    fn perfect_separation_is_reported() {
        let xs = [-3.0, -2.0, -1.0, 1.0, 2.0, 3.0];
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![1.0, x]).collect();
        let design = Design::from_rows(vec!["const".into(), "x".into()], &rows).unwrap();
        let d = [false, false, false, true, true, true];
        match probit_fit(&design, &d) {
            Err(Error::NonConvergence(msg)) => assert!(msg.contains("separation"), "{msg}"),
            other => panic!("expected separation error, got {other:?}"),
        }
    }
}
