use std::collections::BTreeMap;

use nalgebra::Matrix3;
use rand::Rng;
use rayon::prelude::*;

use super::config::{MteTruth, SimConfig, TruthKind};
use super::household::{household_rng, normal};
use super::ledger::TruthLedger;
use crate::data::{Dataset, HouseholdRecord};
use crate::error::{Error, Result};
use crate::stats::normal::{cdf, quantile};

/// Cholesky factor of corr(V, U0, U1); refuses non-positive-definite input.
pub fn correlation_factor(m: &MteTruth) -> Result<Matrix3<f64>> {
    let c = Matrix3::new(1.0, m.rho0, m.rho1, m.rho0, 1.0, m.rho01, m.rho1, m.rho01, 1.0);
    c.cholesky()
        .map(|ch| ch.l())
        .ok_or_else(|| Error::Config(format!(
            "correlation matrix of (V, U0, U1) is not positive definite (rho0 = {}, rho1 = {}, rho01 = {})",
            m.rho0, m.rho1, m.rho01
        )))
}

/// True MTE at resistance quantile u for covariate value x1.
pub fn true_mte(m: &MteTruth, x1: f64, u: f64) -> f64 {
    m.effect_at(x1) + m.slope() * quantile(u)
}

const COLUMNS: [&str; 5] = ["x1", "propensity", "u_d", "y0", "y1"];

/// Potential-outcome data: D = 1{P(X, Z) ≥ U_D} with joint-normal (U0, U1, V).
pub fn generate_mte_scenario(cfg: &SimConfig) -> Result<(Dataset, TruthLedger)> {
    if cfg.truth != TruthKind::MteScenario {
        return Err(Error::InvalidInput("generate_mte_scenario needs truth = mte_scenario".into()));
    }
    cfg.validate()?;
    let m = &cfg.mte;
    let l = correlation_factor(m)?;
    let draws: Vec<(HouseholdRecord, Vec<f64>)> = (0..cfg.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = household_rng(cfg.seed, i);
            let e = [normal(&mut rng), normal(&mut rng), normal(&mut rng)];
            let x1 = normal(&mut rng);
            let z: f64 = rng.random();
            let wp = (cfg.wages.parent_ln_mean + cfg.wages.parent_ln_sd * normal(&mut rng)).exp();
            let wt = (cfg.wages.teen_ln_mean + cfg.wages.teen_ln_sd * normal(&mut rng)).exp();
            let works: bool = rng.random::<f64>() < 0.3;
            let amount = cfg.transfer.amount_min
                + (cfg.transfer.amount_max - cfg.transfer.amount_min) * rng.random::<f64>();
            let v = l[(0, 0)] * e[0];
            let u0 = m.sigma0 * (l[(1, 0)] * e[0] + l[(1, 1)] * e[1]);
            let u1 = m.sigma1 * (l[(2, 0)] * e[0] + l[(2, 1)] * e[1] + l[(2, 2)] * e[2]);
            let mu_d = m.intercept + m.pi_x * x1 + m.pi_z * z;
            let treated = v <= mu_d;
            let y0 = MteTruth::coef(&m.beta0, "const") + MteTruth::coef(&m.beta0, "x1") * x1 + u0;
            let y1 = MteTruth::coef(&m.beta1, "const") + MteTruth::coef(&m.beta1, "x1") * x1 + u1;
            let y = if treated { y1 } else { y0 };
            let school = treated || !works;
            let rec = HouseholdRecord {
                id: format!("m{i:06}"),
                year: cfg.year,
                teen_gender: cfg.gender,
                teen_age: 15 + (i % 6) as u32,
                schooling: school,
                teen_market_hours: if school { 0.0 } else { cfg.time.teen_work_hours },
                teen_wage: (!school).then_some(wt),
                teen_wage_imputed: false,
                teen_domestic_hours: 5.0,
                parent_wage: wp,
                parent_market_hours: 48.0,
                parent_domestic_hours: 8.0,
                nonlabor_income: cfg.nonlabor.mean,
                treated,
                transfer_amount: if treated { amount } else { 0.0 },
                instrument: z,
                covariates: BTreeMap::from([("x1".to_string(), x1), (m.outcome.clone(), y)]),
                cf_residual: None,
            };
            (rec, vec![x1, cdf(mu_d), cdf(v), y0, y1])
        })
        .collect();
    let mut records = Vec::with_capacity(cfg.n);
    let mut ids = Vec::with_capacity(cfg.n);
    let mut rows = Vec::with_capacity(cfg.n);
    for (r, row) in draws {
        ids.push(r.id.clone());
        rows.push(row);
        records.push(r);
    }
    let ledger = TruthLedger {
        kind: cfg.truth,
        columns: COLUMNS.iter().map(|s| s.to_string()).collect(),
        ids,
        rows,
        household: None,
        mte: Some(m.clone()),
    };
    Ok((Dataset::new(records)?, ledger))
}
