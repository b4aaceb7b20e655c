use super::fit::{Design, FitResult};
use super::normal;
use super::ols::{ols_fit, OlsFit};
use super::probit::probit_fit;
use crate::error::{Error, Result};

/// Heckman two-step estimates.
#[derive(Debug, Clone)]
pub struct HeckmanFit {
    /// Step 1: probit of participation.
    pub participation: FitResult,
    /// Step 2: OLS of the outcome on its regressors plus `imr`.
    pub outcome: FitResult,
    pub imr_coef: f64,
    /// Outcome error scale, corrected for selection.
    pub sigma: f64,
    /// Implied error correlation β_λ/σ̂, clamped to [−1, 1].
    pub rho: f64,
    /// Participation regressors absent from the outcome equation.
    pub exclusions: Vec<String>,
    pub warnings: Vec<String>,
}

/// Name of the inverse-Mills-ratio column added in step 2.
pub const IMR: &str = "imr";

/// Step 2: OLS of `y` on the outcome regressors plus λ. An identically zero
/// λ column contributes a zero coefficient, leaving the plain OLS fit.
pub fn second_step(outcome: &Design, y: &[f64], lambda: &[f64]) -> Result<OlsFit> {
    if lambda.iter().all(|&l| l == 0.0) {
        let mut plain = ols_fit(outcome, y)?;
        let k = plain.fit.coefficients.len();
        plain.fit.names.push(IMR.to_string());
        plain.fit.coefficients.push(0.0);
        plain.fit.covariance = plain.fit.covariance.clone().insert_row(k, 0.0).insert_column(k, 0.0);
        return Ok(plain);
    }
    ols_fit(&outcome.with_column(IMR, lambda)?, y)
}

/// Two-step selection correction.
///
/// `participation` covers every unit; `outcome` and `y` only the
/// participants, in the same order as the `true` entries of `participates`.
/// Step-2 standard errors are the plain OLS ones (valid for testing β_λ = 0).
pub fn heckman_two_step(
    participation: &Design,
    participates: &[bool],
    outcome: &Design,
    y: &[f64],
) -> Result<HeckmanFit> {
    let selected: Vec<usize> = participates
        .iter()
        .enumerate()
        .filter_map(|(i, &p)| p.then_some(i))
        .collect();
    if selected.len() != outcome.nrows() || y.len() != outcome.nrows() {
        return Err(Error::InvalidInput(format!(
            "outcome design has {} rows, response {}, participants {}",
            outcome.nrows(),
            y.len(),
            selected.len()
        )));
    }
    let probit = probit_fit(participation, participates)?;
    let beta = nalgebra::DVector::from_column_slice(&probit.coefficients);
    let index = &participation.x * beta;
    let z_sel: Vec<f64> = selected.iter().map(|&i| index[i]).collect();
    let lambda: Vec<f64> = z_sel.iter().map(|&z| normal::inverse_mills(z)).collect();

    let ols = second_step(outcome, y, &lambda)?;
    let imr_coef = *ols.fit.coefficients.last().unwrap();

    let m = y.len() as f64;
    let mean_delta = lambda
        .iter()
        .zip(&z_sel)
        .map(|(l, z)| l * (l + z))
        .sum::<f64>()
        / m;
    let sigma2 = ols.rss / m + imr_coef * imr_coef * mean_delta;
    let sigma = sigma2.max(0.0).sqrt();
    let rho = if sigma > 0.0 {
        (imr_coef / sigma).clamp(-1.0, 1.0)
    } else {
        0.0
    };

    let exclusions: Vec<String> = participation
        .names
        .iter()
        .filter(|n| !outcome.names.contains(n))
        .cloned()
        .collect();
    let mut warnings = Vec::new();
    if exclusions.is_empty() {
        warnings.push(
            "no exclusion restriction: identification rests on probit nonlinearity only".to_string(),
        );
    }
    let mut outcome_fit = ols.fit;
    outcome_fit.warnings.extend(warnings.iter().cloned());
    Ok(HeckmanFit {
        participation: probit,
        outcome: outcome_fit,
        imr_coef,
        sigma,
        rho,
        exclusions,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mills_ratio_at_zero() {
        assert!((normal::inverse_mills(0.0) - 0.79788).abs() < 1e-5);
    }

    #[test]
    fn zero_imr_column_reduces_to_ols() {
        let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![1.0, i as f64]).collect();
        let design = Design::from_rows(vec!["const".into(), "x".into()], &rows).unwrap();
        let y = [1.0, 2.2, 2.9, 4.1, 5.0, 6.2, 6.8, 8.1];
        let plain = ols_fit(&design, &y).unwrap();
        let step2 = second_step(&design, &y, &[0.0; 8]).unwrap();
        assert_eq!(&step2.fit.coefficients[..2], &plain.fit.coefficients[..]);
        assert_eq!(step2.fit.coefficients[2], 0.0);
        assert_eq!(step2.residuals, plain.residuals);
    }
}
