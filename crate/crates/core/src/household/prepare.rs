use serde::{Deserialize, Serialize};

use crate::data::{Dataset, HouseholdRecord};
use crate::error::{Error, Result};

pub const CONST: &str = "const";
pub const CF_RESIDUAL: &str = "cf_residual";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    /// α estimated first and the home intercept held fixed.
    TwoStep,
    /// Home intercept estimated inside the likelihood.
    Joint,
}

/// Structural-model specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StructuralSpec {
    /// Record covariates entering every equation (a constant is always added).
    pub covariates: Vec<String>,
    /// Weekly hours corresponding to a time endowment of 1.
    pub endowment: f64,
    pub nodes: usize,
    pub alpha_mode: AlphaMode,
    /// Add the control-function residual to every equation.
    pub control_function: bool,
    pub max_iter: usize,
}

impl Default for StructuralSpec {
    fn default() -> Self {
        StructuralSpec {
            covariates: vec!["parent_school".into(), "young_children".into()],
            endowment: 98.0,
            nodes: 16,
            alpha_mode: AlphaMode::TwoStep,
            control_function: true,
            max_iter: 1000,
        }
    }
}

/// Household data laid out for the likelihood.
#[derive(Debug, Clone)]
pub struct StructuralData {
    pub n: usize,
    pub names: Vec<String>,
    /// Row-major n × k design.
    pub x: Vec<f64>,
    pub m: Vec<f64>,
    pub school: Vec<bool>,
    pub treated: Vec<bool>,
    pub ln_wp: Vec<f64>,
    pub wt: Vec<f64>,
    pub ln_wt: Vec<f64>,
    pub y: Vec<f64>,
    /// ln(h^p/h^t) − ln(w^t/w^p); `None` when either domestic-hours value is 0.
    pub r: Vec<Option<f64>>,
}

impl StructuralData {
    pub fn k(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let k = self.k();
        &self.x[i * k..(i + 1) * k]
    }

    /// Design column names for a spec: const, covariates, then cf_residual.
    pub fn design_names(spec: &StructuralSpec) -> Vec<String> {
        let mut names = vec![CONST.to_string()];
        names.extend(spec.covariates.iter().cloned());
        if spec.control_function {
            names.push(CF_RESIDUAL.to_string());
        }
        names
    }

    pub fn from_dataset(d: &Dataset, spec: &StructuralSpec) -> Result<Self> {
        if d.is_empty() {
            return Err(Error::EmptySample);
        }
        if !(spec.endowment > 0.0) {
            return Err(Error::Config(format!("endowment must be positive, got {}", spec.endowment)));
        }
        let missing_wage = d.records().iter().filter(|r| r.teen_wage.is_none()).count();
        if missing_wage > 0 {
            return Err(Error::Prerequisite(format!(
                "{missing_wage} records lack a teen wage; run the `impute` stage first"
            )));
        }
        if spec.control_function {
            let missing = d.records().iter().filter(|r| r.cf_residual.is_none()).count();
            if missing > 0 {
                return Err(Error::Prerequisite(format!(
                    "{missing} records lack cf_residual; run the `impute` stage (control function) first"
                )));
            }
        }
        for c in &spec.covariates {
            if !d.has_covariate(c) {
                return Err(Error::InvalidInput(format!("covariate `{c}` not in dataset")));
            }
        }
        let names = Self::design_names(spec);
        let n = d.len();
        let mut out = StructuralData {
            n,
            x: Vec::with_capacity(n * names.len()),
            names,
            m: Vec::with_capacity(n),
            school: Vec::with_capacity(n),
            treated: Vec::with_capacity(n),
            ln_wp: Vec::with_capacity(n),
            wt: Vec::with_capacity(n),
            ln_wt: Vec::with_capacity(n),
            y: Vec::with_capacity(n),
            r: Vec::with_capacity(n),
        };
        for rec in d.records() {
            out.push(rec, spec);
        }
        Ok(out)
    }

    fn push(&mut self, rec: &HouseholdRecord, spec: &StructuralSpec) {
        let wt = rec.teen_wage.expect("checked above");
        self.x.push(1.0);
        for c in &spec.covariates {
            self.x.push(rec.covariates[c]);
        }
        if spec.control_function {
            self.x.push(rec.cf_residual.expect("checked above"));
        }
        self.m.push(rec.parent_market_hours / spec.endowment);
        self.school.push(rec.schooling);
        self.treated.push(rec.treated);
        self.ln_wp.push(rec.parent_wage.ln());
        self.wt.push(wt);
        self.ln_wt.push(wt.ln());
        self.y.push(rec.nonlabor_income);
        let r = if rec.parent_domestic_hours > 0.0 && rec.teen_domestic_hours > 0.0 {
            Some((rec.parent_domestic_hours / rec.teen_domestic_hours).ln() - (wt / rec.parent_wage).ln())
        } else {
            None
        };
        self.r.push(r);
    }
}
