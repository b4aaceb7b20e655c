use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: &str = "household-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Daughter,
    Son,
}

impl Gender {
    pub const ALL: [Gender; 2] = [Gender::Daughter, Gender::Son];

    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Daughter => "daughter",
            Gender::Son => "son",
        }
    }

    /// Plural label used in file names and reports.
    pub fn plural(self) -> &'static str {
        match self {
            Gender::Daughter => "daughters",
            Gender::Son => "sons",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Gender {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "daughter" | "daughters" | "f" => Ok(Gender::Daughter),
            "son" | "sons" | "m" => Ok(Gender::Son),
            other => Err(format!("unknown teen gender `{other}` (expected daughter or son)")),
        }
    }
}

/// One household. Hours are weekly; money is in thousands of local currency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseholdRecord {
    pub id: String,
    pub year: i32,
    pub teen_gender: Gender,
    pub teen_age: u32,
    pub schooling: bool,
    pub teen_market_hours: f64,
    /// Missing for most students.
    pub teen_wage: Option<f64>,
    /// True when `teen_wage` was filled in by the wage model.
    pub teen_wage_imputed: bool,
    pub teen_domestic_hours: f64,
    pub parent_wage: f64,
    pub parent_market_hours: f64,
    pub parent_domestic_hours: f64,
    pub nonlabor_income: f64,
    pub treated: bool,
    pub transfer_amount: f64,
    pub instrument: f64,
    pub covariates: BTreeMap<String, f64>,
    pub cf_residual: Option<f64>,
}

impl HouseholdRecord {
    pub fn covariate(&self, name: &str) -> Option<f64> {
        self.covariates.get(name).copied()
    }

    /// First violated record invariant, if any.
    pub fn check(&self) -> std::result::Result<(), String> {
        let finite = [
            ("teen_market_hours", self.teen_market_hours),
            ("teen_domestic_hours", self.teen_domestic_hours),
            ("parent_wage", self.parent_wage),
            ("parent_market_hours", self.parent_market_hours),
            ("parent_domestic_hours", self.parent_domestic_hours),
            ("nonlabor_income", self.nonlabor_income),
            ("transfer_amount", self.transfer_amount),
            ("instrument", self.instrument),
        ];
        if let Some((name, _)) = finite.iter().find(|(_, v)| !v.is_finite()) {
            return Err(format!("{name} is not finite"));
        }
        if let Some((k, _)) = self.covariates.iter().find(|(_, v)| !v.is_finite()) {
            return Err(format!("covariate {k} is not finite"));
        }
        if !(self.parent_wage > 0.0) {
            return Err(format!("parent_wage must be > 0 (got {})", self.parent_wage));
        }
        if let Some(w) = self.teen_wage {
            if !(w > 0.0 && w.is_finite()) {
                return Err(format!("teen_wage must be > 0 when present (got {w})"));
            }
        }
        for (name, v) in [
            ("teen_market_hours", self.teen_market_hours),
            ("teen_domestic_hours", self.teen_domestic_hours),
            ("parent_market_hours", self.parent_market_hours),
            ("parent_domestic_hours", self.parent_domestic_hours),
        ] {
            if v < 0.0 {
                return Err(format!("{name} must be >= 0 (got {v})"));
            }
        }
        if self.treated && !self.schooling {
            return Err("conditionality violated: treated=1 requires schooling=1".into());
        }
        if self.teen_market_hours > 0.0 && self.schooling {
            return Err("teen_market_hours > 0 requires schooling=0".into());
        }
        if !(0.0..=1.0).contains(&self.instrument) {
            return Err(format!("instrument must lie in [0, 1] (got {})", self.instrument));
        }
        if self.transfer_amount < 0.0 {
            return Err(format!("transfer_amount must be >= 0 (got {})", self.transfer_amount));
        }
        if !self.treated && self.transfer_amount != 0.0 {
            return Err("transfer_amount must be 0 for untreated households".into());
        }
        if let Some(r) = self.cf_residual {
            if !r.is_finite() {
                return Err("cf_residual is not finite".into());
            }
        }
        Ok(())
    }
}

/// Validated, immutable collection of households.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    records: Vec<HouseholdRecord>,
    pub schema_version: String,
}

impl Dataset {
    /// Validate and wrap records: unique ids, record invariants, and a
    /// common covariate set.
    pub fn new(records: Vec<HouseholdRecord>) -> Result<Self> {
        Dataset::with_version(records, SCHEMA_VERSION.to_string())
    }

    pub fn with_version(records: Vec<HouseholdRecord>, schema_version: String) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        let keys: Option<Vec<&String>> = records.first().map(|r| r.covariates.keys().collect());
        for r in &records {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::Validation {
                    id: r.id.clone(),
                    rule: "duplicate id".into(),
                });
            }
            r.check().map_err(|rule| Error::Validation {
                id: r.id.clone(),
                rule,
            })?;
            if let Some(k) = &keys {
                if !r.covariates.keys().eq(k.iter().copied()) {
                    return Err(Error::Validation {
                        id: r.id.clone(),
                        rule: "covariate names differ from the first record".into(),
                    });
                }
            }
        }
        Ok(Dataset {
            records,
            schema_version,
        })
    }

    pub fn records(&self) -> &[HouseholdRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn into_records(self) -> Vec<HouseholdRecord> {
        self.records
    }

    pub fn covariate_names(&self) -> Vec<String> {
        self.records
            .first()
            .map(|r| r.covariates.keys().cloned().collect())
            .unwrap_or_default()
    }

    pub fn has_covariate(&self, name: &str) -> bool {
        self.records.first().is_some_and(|r| r.covariates.contains_key(name))
    }

    /// New dataset with the records for which `keep` holds.
    pub fn filter(&self, keep: impl Fn(&HouseholdRecord) -> bool) -> Dataset {
        Dataset {
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
            schema_version: self.schema_version.clone(),
        }
    }

    pub fn by_gender(&self, g: Gender) -> Dataset {
        self.filter(|r| r.teen_gender == g)
    }

    /// Rows at `idx` (with repetition), ids suffixed to stay unique.
    pub fn resample(&self, idx: &[usize]) -> Dataset {
        let records = idx
            .iter()
            .enumerate()
            .map(|(k, &i)| {
                let mut r = self.records[i].clone();
                r.id = format!("{}#{k}", r.id);
                r
            })
            .collect();
        Dataset {
            records,
            schema_version: self.schema_version.clone(),
        }
    }

    /// Apply `f` to a copy of every record and revalidate.
    pub fn map_records(&self, f: impl Fn(&mut HouseholdRecord)) -> Result<Dataset> {
        let mut records = self.records.clone();
        records.iter_mut().for_each(f);
        Dataset::with_version(records, self.schema_version.clone())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn sample_record(id: &str) -> HouseholdRecord {
        HouseholdRecord {
            id: id.into(),
            year: 2010,
            teen_gender: Gender::Son,
            teen_age: 16,
            schooling: true,
            teen_market_hours: 0.0,
            teen_wage: None,
            teen_wage_imputed: false,
            teen_domestic_hours: 5.0,
            parent_wage: 1.8,
            parent_market_hours: 48.0,
            parent_domestic_hours: 10.0,
            nonlabor_income: 20.0,
            treated: false,
            transfer_amount: 0.0,
            instrument: 0.2,
            covariates: BTreeMap::from([("parent_age".to_string(), 45.0)]),
            cf_residual: None,
        }
    }

    #[test]
    fn conditionality_rule() {
        let mut r = sample_record("a");
        r.treated = true;
        r.transfer_amount = 15.0;
        r.schooling = false;
        let e = Dataset::new(vec![r]).unwrap_err();
        assert!(e.to_string().contains("conditionality violated"), "{e}");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let e = Dataset::new(vec![sample_record("a"), sample_record("a")]).unwrap_err();
        assert!(matches!(e, Error::Validation { ref rule, .. } if rule == "duplicate id"));
    }
}
