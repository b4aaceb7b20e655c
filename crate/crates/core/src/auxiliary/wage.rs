use serde::{Deserialize, Serialize};

use crate::data::{Dataset, HouseholdRecord};
use crate::error::{Error, Result};
use crate::output::{num, write_table, LinePlot, Series};
use crate::stats::fit::{Design, FitResult};
use crate::stats::heckman::heckman_two_step;
use crate::stats::normal::{cdf, pdf};

/// Which prediction fills a missing teen wage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Imputation {
    /// exp(Xβ̂ + σ̂²/2): the potential market wage, no selection term.
    Unconditional,
    /// Adds β̂_λ·E[λ | not working] to the log wage before retransforming.
    Conditional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WageSpec {
    /// Mincer regressors (a constant is added). `teen_age` reads the record field.
    pub wage_covariates: Vec<String>,
    /// Participation-only regressors.
    pub exclusions: Vec<String>,
    pub imputation: Imputation,
}

impl Default for WageSpec {
    fn default() -> Self {
        WageSpec {
            wage_covariates: vec!["teen_age".into(), "teen_school".into(), "urban".into()],
            exclusions: vec!["young_children".into(), "parent_age".into(), "parent_school".into()],
            imputation: Imputation::Unconditional,
        }
    }
}

/// Gender-specific Heckman wage model for teens.
#[derive(Debug, Clone, Serialize)]
pub struct WageModel {
    pub participation: FitResult,
    pub wage_eq: FitResult,
    pub imr_coef: f64,
    pub rho: f64,
    pub sigma: f64,
    pub spec: WageSpec,
    pub warnings: Vec<String>,
}

fn regressor(rec: &HouseholdRecord, name: &str) -> Option<f64> {
    match name {
        "teen_age" => Some(rec.teen_age as f64),
        _ => rec.covariate(name),
    }
}

fn row(rec: &HouseholdRecord, names: &[String]) -> Result<Vec<f64>> {
    let mut r = vec![1.0];
    for n in names {
        r.push(regressor(rec, n).ok_or_else(|| Error::Validation {
            id: rec.id.clone(),
            rule: format!("covariate `{n}` missing for wage model"),
        })?);
    }
    Ok(r)
}

fn with_const(names: &[String]) -> Vec<String> {
    let mut v = vec!["const".to_string()];
    v.extend(names.iter().cloned());
    v
}

/// Teens who work participate; their log wage is the outcome.
pub fn fit_wage_model(d: &Dataset, spec: &WageSpec) -> Result<WageModel> {
    if d.is_empty() {
        return Err(Error::EmptySample);
    }
    let part_names: Vec<String> = spec
        .wage_covariates
        .iter()
        .chain(spec.exclusions.iter().filter(|e| !spec.wage_covariates.contains(e)))
        .cloned()
        .collect();
    let mut prows = Vec::with_capacity(d.len());
    let mut works = Vec::with_capacity(d.len());
    let mut orows = Vec::new();
    let mut lw = Vec::new();
    for rec in d.records() {
        prows.push(row(rec, &part_names)?);
        let w = !rec.schooling;
        works.push(w);
        if w {
            let wage = rec.teen_wage.filter(|_| !rec.teen_wage_imputed).ok_or_else(|| Error::Validation {
                id: rec.id.clone(),
                rule: "working teen has no observed wage".into(),
            })?;
            orows.push(row(rec, &spec.wage_covariates)?);
            lw.push(wage.ln());
        }
    }
    let part = Design::from_rows(with_const(&part_names), &prows)?;
    let out = Design::from_rows(with_const(&spec.wage_covariates), &orows)?;
    let h = heckman_two_step(&part, &works, &out, &lw)?;
    let mut warnings = h.warnings.clone();
    let missing: Vec<&String> = spec.exclusions.iter().filter(|e| !d.has_covariate(e)).collect();
    if !missing.is_empty() {
        warnings.push(format!("exclusion variables not in data: {missing:?}"));
    }
    Ok(WageModel {
        participation: h.participation,
        wage_eq: h.outcome,
        imr_coef: h.imr_coef,
        rho: h.rho,
        sigma: h.sigma,
        spec: spec.clone(),
        warnings,
    })
}

impl WageModel {
    /// Log-wage index Xβ̂ (no selection term).
    pub fn log_index(&self, rec: &HouseholdRecord) -> Result<f64> {
        let x = row(rec, &self.spec.wage_covariates)?;
        // last wage-equation coefficient is the Mills-ratio term
        Ok(x.iter().zip(&self.wage_eq.coefficients).map(|(a, b)| a * b).sum())
    }

    /// Predicted wage for a record under `mode`.
    pub fn predict(&self, rec: &HouseholdRecord, mode: Imputation) -> Result<f64> {
        let mut lw = self.log_index(rec)?;
        if mode == Imputation::Conditional {
            let z: f64 = {
                let mut names = self.spec.wage_covariates.clone();
                names.extend(self.spec.exclusions.iter().filter(|e| !self.spec.wage_covariates.contains(e)).cloned());
                row(rec, &names)?.iter().zip(&self.participation.coefficients).map(|(a, b)| a * b).sum()
            };
            // E[λ-term | not working] = −φ(z)/(1 − Φ(z))
            lw += self.imr_coef * (-pdf(z) / (1.0 - cdf(z)).max(1e-300));
        }
        Ok((lw + 0.5 * self.sigma * self.sigma).exp())
    }
}

/// Fill missing teen wages; observed wages are never touched, and records
/// already imputed keep their value, so a second pass changes nothing.
pub fn impute_wages(d: &Dataset, m: &WageModel) -> Result<Dataset> {
    let mode = m.spec.imputation;
    let mut recs = d.records().to_vec();
    for r in recs.iter_mut().filter(|r| r.teen_wage.is_none()) {
        r.teen_wage = Some(m.predict(r, mode)?);
        r.teen_wage_imputed = true;
    }
    Dataset::with_version(recs, d.schema_version.clone())
}

pub const WAGE_HEADER: [&str; 4] = ["equation", "variable", "estimate", "se"];

pub fn wage_rows(m: &WageModel) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (eq, f) in [("participation", &m.participation), ("wage", &m.wage_eq)] {
        let se = f.std_errors();
        for (i, n) in f.names.iter().enumerate() {
            rows.push(vec![eq.into(), n.clone(), num(f.coefficients[i]), num(se[i])]);
        }
    }
    for (k, v) in [("rho", m.rho), ("sigma", m.sigma)] {
        rows.push(vec!["selection".into(), k.into(), num(v), String::new()]);
    }
    rows.push(vec!["selection".into(), "n".into(), num(m.participation.n as f64), String::new()]);
    rows
}

pub fn write_wage_model(path: impl AsRef<std::path::Path>, m: &WageModel) -> Result<()> {
    write_table(path, &WAGE_HEADER, &wage_rows(m))
}

/// Density histograms of observed and imputed log wages on a shared grid.
pub fn overlap_plot(d: &Dataset, bins: usize) -> Option<LinePlot> {
    let obs: Vec<f64> = d
        .records()
        .iter()
        .filter(|r| !r.teen_wage_imputed)
        .filter_map(|r| r.teen_wage.map(f64::ln))
        .collect();
    let imp: Vec<f64> = d
        .records()
        .iter()
        .filter(|r| r.teen_wage_imputed)
        .filter_map(|r| r.teen_wage.map(f64::ln))
        .collect();
    if obs.is_empty() || imp.is_empty() || bins == 0 {
        return None;
    }
    let lo = obs.iter().chain(&imp).copied().fold(f64::INFINITY, f64::min);
    let hi = obs.iter().chain(&imp).copied().fold(f64::NEG_INFINITY, f64::max);
    let width = ((hi - lo) / bins as f64).max(1e-12);
    let mids: Vec<f64> = (0..bins).map(|b| lo + (b as f64 + 0.5) * width).collect();
    let density = |v: &[f64]| -> Vec<f64> {
        let mut c = vec![0.0; bins];
        for x in v {
            let b = (((x - lo) / width) as usize).min(bins - 1);
            c[b] += 1.0;
        }
        c.iter().map(|k| k / (v.len() as f64 * width)).collect()
    };
    Some(LinePlot {
        title: "Teen log wages: observed vs imputed".into(),
        x_label: "log hourly wage".into(),
        y_label: "density".into(),
        series: vec![
            Series {
                name: "observed".into(),
                x: mids.clone(),
                y: density(&obs),
            },
            Series {
                name: "imputed".into(),
                x: mids,
                y: density(&imp),
            },
        ],
        band: None,
    })
}
