use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::output::{num, write_table};
use crate::stats::fit::{Design, FitResult};
use crate::stats::ols::ols_fit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlSpec {
    /// Demographic and region/year regressors next to the transfer amount.
    pub covariates: Vec<String>,
}

impl Default for ControlSpec {
    fn default() -> Self {
        ControlSpec {
            covariates: vec![
                "parent_age".into(),
                "parent_school".into(),
                "young_children".into(),
                "urban".into(),
            ],
        }
    }
}

/// First stage for non-labor income.
#[derive(Debug, Clone, Serialize)]
pub struct ControlFunctionFit {
    pub regression: FitResult,
    /// û_y per record, in dataset order.
    pub residuals: Vec<f64>,
}

/// OLS of non-labor income on the transfer amount, its square and the
/// covariates.
pub fn fit_control_function(d: &Dataset, spec: &ControlSpec) -> Result<ControlFunctionFit> {
    if d.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut names = vec!["const".to_string(), "transfer".into(), "transfer_sq".into()];
    names.extend(spec.covariates.iter().cloned());
    let mut rows = Vec::with_capacity(d.len());
    for r in d.records() {
        let a = r.transfer_amount;
        let mut x = vec![1.0, a, a * a];
        for c in &spec.covariates {
            x.push(r.covariate(c).ok_or_else(|| Error::Validation {
                id: r.id.clone(),
                rule: format!("covariate `{c}` missing for control function"),
            })?);
        }
        rows.push(x);
    }
    let y: Vec<f64> = d.records().iter().map(|r| r.nonlabor_income).collect();
    let fit = ols_fit(&Design::from_rows(names, &rows)?, &y)?;
    Ok(ControlFunctionFit {
        regression: fit.fit,
        residuals: fit.residuals,
    })
}

impl ControlFunctionFit {
    /// Copy of `d` with `cf_residual` set; `d` must be the fitted dataset.
    pub fn attach(&self, d: &Dataset) -> Result<Dataset> {
        if d.len() != self.residuals.len() {
            return Err(Error::InvalidInput(format!(
                "control function has {} residuals for {} records",
                self.residuals.len(),
                d.len()
            )));
        }
        let mut recs = d.records().to_vec();
        for (r, u) in recs.iter_mut().zip(&self.residuals) {
            r.cf_residual = Some(*u);
        }
        Dataset::with_version(recs, d.schema_version.clone())
    }
}

pub const CONTROL_HEADER: [&str; 3] = ["variable", "estimate", "se"];

pub fn write_control_function(path: impl AsRef<std::path::Path>, cf: &ControlFunctionFit) -> Result<()> {
    let f = &cf.regression;
    let se = f.std_errors();
    let mut rows: Vec<Vec<String>> = f
        .names
        .iter()
        .enumerate()
        .map(|(i, n)| vec![n.clone(), num(f.coefficients[i]), num(se[i])])
        .collect();
    rows.push(vec!["n".into(), num(f.n as f64), String::new()]);
    write_table(path, &CONTROL_HEADER, &rows)
}
