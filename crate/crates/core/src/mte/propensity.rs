use serde::{Deserialize, Serialize};

use crate::data::{Dataset, HouseholdRecord};
use crate::error::{Error, Result};
use crate::output::{num, write_table};
use crate::stats::fit::{Design, FitResult};
use crate::stats::normal::cdf;
use crate::stats::probit::probit_fit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropensitySpec {
    pub covariates: Vec<String>,
    /// `instrument` reads the record field; anything else a covariate.
    pub instrument: String,
}

impl Default for PropensitySpec {
    fn default() -> Self {
        PropensitySpec {
            covariates: vec!["parent_school".into(), "young_children".into()],
            instrument: "instrument".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PropensityFit {
    pub probit: FitResult,
    /// Φ(Xβ̂ + Zγ̂) per record, clamped into (0, 1).
    pub scores: Vec<f64>,
    pub instrument_name: String,
    pub instrument_coef: f64,
    pub instrument_se: f64,
    /// Squared z statistic of the instrument (first-stage strength).
    pub strength: f64,
    pub weak_instrument: bool,
    pub warnings: Vec<String>,
}

pub(crate) fn value(rec: &HouseholdRecord, name: &str) -> Option<f64> {
    match name {
        "instrument" => Some(rec.instrument),
        "teen_age" => Some(rec.teen_age as f64),
        "nonlabor_income" => Some(rec.nonlabor_income),
        "parent_wage" => Some(rec.parent_wage),
        _ => rec.covariate(name),
    }
}

fn design(d: &Dataset, spec: &PropensitySpec) -> Result<Design> {
    let mut names = vec!["const".to_string()];
    names.extend(spec.covariates.iter().cloned());
    names.push(spec.instrument.clone());
    let rows = d
        .records()
        .iter()
        .map(|r| {
            std::iter::once(Some(1.0))
                .chain(names[1..].iter().map(|n| value(r, n)))
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| Error::Validation {
                    id: r.id.clone(),
                    rule: "propensity regressor missing".into(),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    Design::from_rows(names, &rows)
}

/// Probit of treatment on covariates and the instrument.
pub fn estimate_propensity(d: &Dataset, spec: &PropensitySpec) -> Result<PropensityFit> {
    if d.is_empty() {
        return Err(Error::EmptySample);
    }
    let x = design(d, spec)?;
    let treated: Vec<bool> = d.records().iter().map(|r| r.treated).collect();
    let probit = probit_fit(&x, &treated)?;
    let beta = nalgebra::DVector::from_column_slice(&probit.coefficients);
    let index = &x.x * beta;
    let scores: Vec<f64> = index.iter().map(|&z| cdf(z).clamp(1e-12, 1.0 - 1e-12)).collect();
    let j = probit.coefficients.len() - 1;
    let coef = probit.coefficients[j];
    let se = probit.std_errors()[j];
    let z = coef / se;
    let weak = !(z.abs() >= 1.959963984540054);
    let mut warnings = probit.warnings.clone();
    if weak {
        warnings.push(format!("weak instrument: z = {z:.3} for `{}`", spec.instrument));
    }
    Ok(PropensityFit {
        probit,
        scores,
        instrument_name: spec.instrument.clone(),
        instrument_coef: coef,
        instrument_se: se,
        strength: z * z,
        weak_instrument: weak,
        warnings,
    })
}

pub const FIRST_STAGE_HEADER: [&str; 4] = ["variable", "estimate", "se", "z"];

pub fn write_first_stage(path: impl AsRef<std::path::Path>, f: &PropensityFit) -> Result<()> {
    let se = f.probit.std_errors();
    let mut rows: Vec<Vec<String>> = f
        .probit
        .names
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let b = f.probit.coefficients[i];
            vec![n.clone(), num(b), num(se[i]), num(b / se[i])]
        })
        .collect();
    rows.push(vec!["n".into(), num(f.probit.n as f64), String::new(), String::new()]);
    rows.push(vec!["loglik".into(), num(f.probit.loglik.unwrap_or(f64::NAN)), String::new(), String::new()]);
    rows.push(vec!["instrument_strength".into(), num(f.strength), String::new(), String::new()]);
    rows.push(vec![
        "weak_instrument".into(),
        num(f.weak_instrument as u8 as f64),
        String::new(),
        String::new(),
    ]);
    write_table(path, &FIRST_STAGE_HEADER, &rows)
}
