use serde::{Deserialize, Serialize};

use super::record::{Dataset, HouseholdRecord};
use crate::error::{Error, Result};

/// Closed interval; either end may be open-ended.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl Bounds {
    pub fn new(min: f64, max: f64) -> Self {
        Bounds {
            min: Some(min),
            max: Some(max),
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.min.is_none_or(|m| v >= m) && self.max.is_none_or(|m| v <= m)
    }
}

/// Sample-selection rules. Trimming bounds default to no trimming.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionRules {
    pub teen_age: Bounds,
    pub parent_age: Bounds,
    /// Covariate holding the parent's age.
    pub parent_age_covariate: String,
    /// Require positive parent market hours.
    pub father_works: bool,
    pub parent_wage: Bounds,
    pub teen_wage: Bounds,
    pub parent_market_hours: Bounds,
    pub teen_market_hours: Bounds,
    pub nonlabor_income: Bounds,
}

impl Default for SelectionRules {
    fn default() -> Self {
        SelectionRules {
            teen_age: Bounds::new(15.0, 20.0),
            parent_age: Bounds::new(30.0, 64.0),
            parent_age_covariate: "parent_age".into(),
            father_works: true,
            parent_wage: Bounds::default(),
            teen_wage: Bounds::default(),
            parent_market_hours: Bounds::default(),
            teen_market_hours: Bounds::default(),
            nonlabor_income: Bounds::default(),
        }
    }
}

/// Kept/dropped counts. Each dropped record is charged to the first rule it fails.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionReport {
    pub input: usize,
    pub kept: usize,
    pub dropped: Vec<(String, usize)>,
}

type Rule<'a> = (&'static str, Box<dyn Fn(&HouseholdRecord) -> bool + 'a>);

fn rules_for(r: &SelectionRules, has_parent_age: bool) -> Vec<Rule<'_>> {
    let mut v: Vec<Rule<'_>> = vec![(
        "teen_age",
        Box::new(move |h: &HouseholdRecord| r.teen_age.contains(h.teen_age as f64)),
    )];
    if has_parent_age {
        v.push((
            "parent_age",
            Box::new(move |h: &HouseholdRecord| {
                h.covariate(&r.parent_age_covariate)
                    .is_some_and(|a| r.parent_age.contains(a))
            }),
        ));
    }
    if r.father_works {
        v.push(("father_works", Box::new(|h: &HouseholdRecord| h.parent_market_hours > 0.0)));
    }
    v.push(("parent_wage", Box::new(move |h: &HouseholdRecord| r.parent_wage.contains(h.parent_wage))));
    v.push((
        "teen_wage",
        Box::new(move |h: &HouseholdRecord| h.teen_wage.is_none_or(|w| r.teen_wage.contains(w))),
    ));
    v.push((
        "parent_market_hours",
        Box::new(move |h: &HouseholdRecord| r.parent_market_hours.contains(h.parent_market_hours)),
    ));
    v.push((
        "teen_market_hours",
        Box::new(move |h: &HouseholdRecord| r.teen_market_hours.contains(h.teen_market_hours)),
    ));
    v.push((
        "nonlabor_income",
        Box::new(move |h: &HouseholdRecord| r.nonlabor_income.contains(h.nonlabor_income)),
    ));
    v
}

/// Apply the selection rules. An empty result is an error.
pub fn select_sample(d: &Dataset, rules: &SelectionRules) -> Result<(Dataset, SelectionReport)> {
    let age_bounded = rules.parent_age.min.is_some() || rules.parent_age.max.is_some();
    if age_bounded && !d.is_empty() && !d.has_covariate(&rules.parent_age_covariate) {
        return Err(Error::InvalidInput(format!(
            "parent-age rule needs covariate `{}`, which the dataset lacks",
            rules.parent_age_covariate
        )));
    }
    let checks = rules_for(rules, age_bounded);
    let mut dropped = vec![0usize; checks.len()];
    let mut keep = Vec::with_capacity(d.len());
    for h in d.records() {
        match checks.iter().position(|(_, f)| !f(h)) {
            Some(i) => dropped[i] += 1,
            None => keep.push(h.id.clone()),
        }
    }
    if keep.is_empty() {
        return Err(Error::EmptySample);
    }
    let kept_ids: std::collections::HashSet<String> = keep.into_iter().collect();
    let out = d.filter(|h| kept_ids.contains(&h.id));
    let report = SelectionReport {
        input: d.len(),
        kept: out.len(),
        dropped: checks
            .iter()
            .zip(dropped)
            .map(|((name, _), n)| (name.to_string(), n))
            .collect(),
    };
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::record::tests::sample_record;

    #[test]
    fn age_window() {
        let mut old = sample_record("old");
        old.teen_age = 21;
        let d = Dataset::new(vec![sample_record("ok"), old]).unwrap();
        let (s, rep) = select_sample(&d, &SelectionRules::default()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.records()[0].id, "ok");
        assert_eq!(rep.dropped[0], ("teen_age".to_string(), 1));
    }

    #[test]
    fn empty_result_is_an_error() {
        let mut r = sample_record("a");
        r.parent_market_hours = 0.0;
        let d = Dataset::new(vec![r]).unwrap();
        assert!(matches!(select_sample(&d, &SelectionRules::default()), Err(Error::EmptySample)));
    }
}
