//! Teen-wage imputation and the control function for non-labor income.

mod control;
mod wage;

pub use control::{fit_control_function, write_control_function, ControlFunctionFit, ControlSpec, CONTROL_HEADER};
pub use wage::{
    fit_wage_model, impute_wages, overlap_plot, wage_rows, write_wage_model, Imputation, WageModel, WageSpec,
    WAGE_HEADER,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::{generate, SimConfig};

    fn sim(n: usize) -> crate::data::Dataset {
        generate(&SimConfig {
            n,
            seed: 21,
            ..SimConfig::default()
        })
        .unwrap()
        .0
    }

    #[test]
    fn imputation_fills_only_missing_and_is_idempotent() {
        let d = sim(3000);
        let m = fit_wage_model(&d, &WageSpec::default()).unwrap();
        let once = impute_wages(&d, &m).unwrap();
        for (a, b) in d.records().iter().zip(once.records()) {
            match a.teen_wage {
                Some(w) => assert_eq!(b.teen_wage, Some(w)),
                None => assert!(b.teen_wage_imputed && b.teen_wage.unwrap() > 0.0),
            }
        }
        let twice = impute_wages(&once, &m).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn unconditional_imputation_formula() {
        let d = sim(2000);
        let m = fit_wage_model(&d, &WageSpec::default()).unwrap();
        let out = impute_wages(&d, &m).unwrap();
        for r in out.records().iter().filter(|r| r.teen_wage_imputed) {
            let want = m.log_index(r).unwrap() + 0.5 * m.sigma * m.sigma;
            assert!((r.teen_wage.unwrap().ln() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn no_exclusions_flagged() {
        let d = sim(2000);
        let spec = WageSpec {
            exclusions: vec![],
            ..WageSpec::default()
        };
        let m = fit_wage_model(&d, &spec).unwrap();
        assert!(!m.warnings.is_empty());
    }

    #[test]
    fn control_residuals_orthogonal_to_design() {
        let d = sim(2000);
        let cf = fit_control_function(&d, &ControlSpec::default()).unwrap();
        let attached = cf.attach(&d).unwrap();
        let u: Vec<f64> = attached.records().iter().map(|r| r.cf_residual.unwrap()).collect();
        assert!(u.iter().sum::<f64>().abs() / (u.len() as f64) < 1e-10);
        let cols: Vec<Vec<f64>> = vec![
            attached.records().iter().map(|r| r.transfer_amount).collect(),
            attached.records().iter().map(|r| r.transfer_amount.powi(2)).collect(),
            attached.records().iter().map(|r| r.covariates["parent_age"]).collect(),
        ];
        for c in cols {
            let n = c.len() as f64;
            let (mc, mu) = (c.iter().sum::<f64>() / n, u.iter().sum::<f64>() / n);
            let cov: f64 = c.iter().zip(&u).map(|(a, b)| (a - mc) * (b - mu)).sum::<f64>();
            let sc = c.iter().map(|a| (a - mc).powi(2)).sum::<f64>().sqrt();
            let su = u.iter().map(|b| (b - mu).powi(2)).sum::<f64>().sqrt();
            assert!((cov / (sc * su)).abs() < 1e-10);
        }
    }
}
