use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::stats::delta::delta_method;
use crate::stats::fit::Design;
use crate::stats::ols::ols_fit;

/// Cobb–Douglas home-production share of the parent.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AlphaEstimate {
    /// Intercept of ln(h^p/h^t) − ln(w^t/w^p).
    pub c: f64,
    pub c_se: f64,
    pub alpha: f64,
    pub alpha_se: f64,
    pub n: usize,
}

impl AlphaEstimate {
    pub fn teen_share(&self) -> f64 {
        1.0 - self.alpha
    }
}

pub fn logistic(c: f64) -> f64 {
    1.0 / (1.0 + (-c).exp())
}

/// α from the log ratio of domestic hours, with the wage-ratio slope fixed
/// at one: c = mean residual, α = e^c/(1+e^c).
pub fn estimate_alpha(d: &Dataset) -> Result<AlphaEstimate> {
    let r: Vec<f64> = d
        .records()
        .iter()
        .filter(|h| h.parent_domestic_hours > 0.0 && h.teen_domestic_hours > 0.0)
        .filter_map(|h| {
            h.teen_wage.map(|wt| {
                (h.parent_domestic_hours / h.teen_domestic_hours).ln() - (wt / h.parent_wage).ln()
            })
        })
        .collect();
    alpha_from_log_ratios(&r)
}

pub fn alpha_from_log_ratios(r: &[f64]) -> Result<AlphaEstimate> {
    if r.len() < 2 {
        return Err(Error::EmptySample);
    }
    let design = Design::from_rows(vec!["const".into()], &vec![vec![1.0]; r.len()])?;
    let fit = ols_fit(&design, r)?;
    let c = fit.fit.coefficients[0];
    if !c.is_finite() {
        return Err(Error::NonConvergence(format!("home-production intercept is {c}")));
    }
    let c_se = fit.fit.std_errors()[0];
    let dm = delta_method(&|t: &[f64]| vec![logistic(t[0])], &[c], &fit.fit.covariance)?;
    Ok(AlphaEstimate {
        c,
        c_se,
        alpha: dm.values[0],
        alpha_se: dm.se[0],
        n: r.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_intercept_is_one_half() {
        let a = alpha_from_log_ratios(&[0.3, -0.3, 0.1, -0.1]).unwrap();
        assert!(a.c.abs() < 1e-15);
        assert!((a.alpha - 0.5).abs() < 1e-15);
        assert!((a.alpha_se - 0.25 * a.c_se).abs() < 1e-9);
    }

    #[test]
    fn teen_share_from_published_intercept() {
        let c = (0.955f64 / 0.045).ln();
        let a = alpha_from_log_ratios(&[c, c, c]).unwrap();
        assert!((a.teen_share() - 0.045).abs() < 1e-6);
    }
}
