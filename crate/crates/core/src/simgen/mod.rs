//! Forward simulator: synthetic households from known unitary or collective
//! truths, and potential-outcome data for MTE checks.

mod config;
mod household;
mod ledger;
mod mte;

pub use config::{
    CollectiveTruth, ErrorScales, MteTruth, NonlaborDist, SimConfig, TimeConfig, TransferRule, TruthKind,
    UnitaryTruth, WageDist, SIM_COVARIATES,
};
pub use household::{generate_households, HouseholdDraw, TruthParams};
pub use ledger::TruthLedger;
pub use mte::{correlation_factor, generate_mte_scenario, true_mte};

use crate::data::Dataset;
use crate::error::Result;

/// Simulate according to `cfg.truth`.
pub fn generate(cfg: &SimConfig) -> Result<(Dataset, TruthLedger)> {
    match cfg.truth {
        TruthKind::MteScenario => generate_mte_scenario(cfg),
        _ => generate_households(cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::household::prepare::{StructuralData, StructuralSpec};
    use crate::stats::fit::Design;
    use crate::stats::normal::cdf;
    use crate::stats::ols::ols_fit;

    fn noiseless(truth: TruthKind) -> SimConfig {
        SimConfig {
            n: 3000,
            truth,
            errors: ErrorScales::zero(),
            reveal_student_wages: true,
            ..SimConfig::default()
        }
    }

    #[test]
    fn deterministic() {
        let cfg = SimConfig {
            n: 300,
            ..SimConfig::default()
        };
        let (a, _) = generate(&cfg).unwrap();
        let (b, _) = generate(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn conditionality_and_budget_identity() {
        let (d, ledger) = generate(&SimConfig {
            n: 2000,
            ..SimConfig::default()
        })
        .unwrap();
        assert!(d.records().iter().all(|r| !r.treated || r.schooling));
        let cols = |n: &str| ledger.column(n).unwrap();
        let (rp, rt, g, y) = (cols("rho_p"), cols("rho_t"), cols("public_spending"), cols("full_income"));
        for i in 0..d.len() {
            assert!((rp[i] + rt[i] + g[i] - y[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_home_ratio_gives_alpha() {
        let cfg = SimConfig {
            alpha: 0.8,
            ..noiseless(TruthKind::Collective)
        };
        let (d, _) = generate(&cfg).unwrap();
        for r in d.records() {
            let lr = (r.parent_domestic_hours / r.teen_domestic_hours).ln()
                - (r.teen_wage.unwrap() / r.parent_wage).ln();
            assert!((lr - 4f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_regimes_match_truth() {
        for kind in [TruthKind::Collective, TruthKind::Unitary] {
            let cfg = noiseless(kind);
            let (d, ledger) = generate(&cfg).unwrap();
            let t = ledger.household.unwrap();
            let spec = StructuralSpec {
                control_function: false,
                ..StructuralSpec::default()
            };
            let sd = StructuralData::from_dataset(&d, &spec).unwrap();
            for school in [false, true] {
                let rows: Vec<usize> = (0..sd.n).filter(|&i| sd.school[i] == school).collect();
                let xs: Vec<Vec<f64>> = rows
                    .iter()
                    .map(|&i| {
                        let mut r = vec![sd.ln_wp[i], sd.wt[i], sd.y[i], sd.ln_wt[i]];
                        r.extend_from_slice(sd.row(i));
                        r
                    })
                    .collect();
                let names = (0..xs[0].len()).map(|j| format!("c{j}")).collect();
                let m: Vec<f64> = rows.iter().map(|&i| sd.m[i]).collect();
                let f = ols_fit(&Design::from_rows(names, &xs).unwrap(), &m).unwrap();
                let c = &f.fit.coefficients;
                let want = if school {
                    [t.ap_star_s, t.at_s, t.ay_s, t.delta, t.const_s]
                } else {
                    [t.ap_star, t.at, t.ay, t.delta, t.const_w]
                };
                for (g, w) in c.iter().zip(want) {
                    assert!((g - w).abs() < 1e-8, "{kind:?} school={school}: {g} vs {w}");
                }
            }
        }
    }

    #[test]
    fn schooling_share_matches_index_probability() {
        let cfg = SimConfig {
            n: 100_000,
            ..SimConfig::default()
        };
        let (d, ledger) = generate(&cfg).unwrap();
        let e = &cfg.errors;
        let sd = (e.sigma_t.powi(2) + (e.chi_t * e.sigma_eta).powi(2)).sqrt();
        let wt = ledger.column("teen_wage").unwrap();
        let (gp, gy) = cfg.frontier();
        let (mut share, mut prob, mut n) = (0.0, 0.0, 0.0);
        for (i, r) in d.records().iter().enumerate().filter(|(_, r)| !r.treated) {
            let lin: f64 = cfg
                .beta_t
                .iter()
                .map(|(k, b)| if k == "const" { *b } else { b * r.covariates[k] })
                .sum();
            let q = lin + cfg.b_t * (wt[i] - gp * r.parent_wage.ln() - gy * r.nonlabor_income);
            prob += cdf(q / sd);
            share += r.schooling as u8 as f64;
            n += 1.0;
        }
        share /= n;
        prob /= n;
        assert!((share - prob).abs() < 0.01, "{share} vs {prob}");
    }

    #[test]
    fn mte_scenario_take_up_matches_mean_propensity() {
        let cfg = SimConfig {
            n: 100_000,
            truth: TruthKind::MteScenario,
            ..SimConfig::default()
        };
        let (d, ledger) = generate(&cfg).unwrap();
        let p = ledger.column("propensity").unwrap();
        let treated = d.records().iter().filter(|r| r.treated).count() as f64 / d.len() as f64;
        let mean_p = p.iter().sum::<f64>() / p.len() as f64;
        assert!((treated - mean_p).abs() < 0.01);
    }

    #[test]
    fn mte_scenario_refuses_non_psd() {
        let mut cfg = SimConfig {
            truth: TruthKind::MteScenario,
            ..SimConfig::default()
        };
        cfg.mte.rho0 = 0.9;
        cfg.mte.rho1 = -0.9;
        cfg.mte.rho01 = 0.9;
        assert!(generate(&cfg).is_err());
    }

    #[test]
    fn flat_mte_without_selection_on_gains() {
        let mut m = MteTruth::default();
        m.rho1 = m.rho0;
        assert_eq!(m.slope(), 0.0);
        assert!((true_mte(&m, 0.0, 0.1) - true_mte(&m, 0.0, 0.9)).abs() < 1e-15);
    }
}
