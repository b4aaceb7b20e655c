use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{SimConfig, TruthKind, SIM_COVARIATES};
use super::ledger::TruthLedger;
use crate::data::{Dataset, HouseholdRecord};
use crate::error::{Error, Result};
use crate::household::params::*;
use crate::household::prepare::{CF_RESIDUAL, CONST};

/// Per-household RNG: one ChaCha stream per household index.
pub(crate) fn household_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng
}

pub(crate) fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Parameter-level truth implied by a household configuration.
#[derive(Debug, Clone, Serialize)]
pub struct TruthParams {
    pub kind: TruthKind,
    pub alpha: f64,
    pub gamma_p: f64,
    pub gamma_y: f64,
    /// g·f̄^K from the BLS condition.
    pub public_spending: f64,
    pub ap_star: f64,
    pub at: f64,
    pub ay: f64,
    pub ap_star_s: f64,
    pub at_s: f64,
    pub ay_s: f64,
    pub delta: f64,
    /// Index coefficients on the σ_t = 1 scale.
    pub bt: f64,
    pub bp: f64,
    pub by: f64,
    /// Reduced-form regime intercepts.
    pub const_w: f64,
    pub const_s: f64,
    /// (α, γ_p, γ_y, F′, ψ_p, ψ_t, ψ_y, θ^p_ρ, θ^p_w) for collective truths.
    pub structural: Option<[f64; 9]>,
}

/// ln g minus the wage terms: the unit-cost constant of Cobb–Douglas home production.
fn unit_cost_constant(alpha: f64) -> f64 {
    -alpha * alpha.ln() - (1.0 - alpha) * (1.0 - alpha).ln()
}

fn coef(map: &BTreeMap<String, f64>, k: &str) -> f64 {
    map.get(k).copied().unwrap_or(0.0)
}

fn index_scale(cfg: &SimConfig) -> f64 {
    if cfg.errors.sigma_t > 0.0 {
        cfg.errors.sigma_t
    } else {
        1.0
    }
}

impl TruthParams {
    pub fn from_config(cfg: &SimConfig) -> Result<Self> {
        if cfg.truth == TruthKind::MteScenario {
            return Err(Error::InvalidInput("the MTE scenario has no household-model truth".into()));
        }
        let a = cfg.alpha;
        let k = cfg.public_good_spending();
        let (gp, gy) = cfg.frontier();
        let cg = unit_cost_constant(a);
        let sc = index_scale(cfg);
        let (bt, bp, by) = (cfg.b_t / sc, -gp * cfg.b_t / sc, -gy * cfg.b_t / sc);
        let cw = coef(&cfg.beta_w, CONST);
        let cs = coef(&cfg.beta_s, CONST);
        let t = match cfg.truth {
            TruthKind::Collective => {
                let c = &cfg.collective;
                let (tw, tr, f, tk) = (c.theta_p_w, c.theta_p_rho, c.theta_t_rho, c.theta_p_k);
                TruthParams {
                    kind: cfg.truth,
                    alpha: a,
                    gamma_p: gp,
                    gamma_y: gy,
                    public_spending: k,
                    ap_star: tw - tr * c.psi_p + tk * a,
                    at: tr * (1.0 - c.psi_t),
                    ay: tr * (1.0 - c.psi_y),
                    ap_star_s: tw - tr * f * c.psi_p + tk * a,
                    at_s: -tr * f * c.psi_t,
                    ay_s: tr * (1.0 - f * c.psi_y),
                    delta: tk * (1.0 - a),
                    bt,
                    bp,
                    by,
                    const_w: cw + tk * cg - tr * (c.kappa0 + k),
                    const_s: cs + tk * cg - tr * (c.kappa1 + k),
                    structural: Some([a, gp, gy, f, c.psi_p, c.psi_t, c.psi_y, tr, tw]),
                }
            }
            _ => {
                let u = &cfg.unitary;
                let ap = u.theta_w + u.theta_k * a;
                TruthParams {
                    kind: cfg.truth,
                    alpha: a,
                    gamma_p: gp,
                    gamma_y: gy,
                    public_spending: k,
                    ap_star: ap,
                    at: u.theta_y,
                    ay: u.theta_y,
                    ap_star_s: ap,
                    at_s: 0.0,
                    ay_s: u.theta_y,
                    delta: u.theta_k * (1.0 - a),
                    bt,
                    bp,
                    by,
                    const_w: cw + u.m0 + u.theta_k * cg - u.theta_y * k,
                    const_s: cs + u.m0 + u.theta_k * cg - u.theta_y * k,
                    structural: None,
                }
            }
        };
        Ok(t)
    }

    /// True parameter vector in the likelihood layout for the given design
    /// columns. `cf_residual` gets a zero coefficient.
    pub fn full_vector(&self, cfg: &SimConfig, covariates: &[String]) -> Result<Vec<f64>> {
        if cfg.nonlabor.eta_loading != 0.0 && covariates.iter().any(|c| c == CF_RESIDUAL) {
            return Err(Error::InvalidInput(
                "no closed-form truth for the control-function coefficients with endogenous income".into(),
            ));
        }
        let layout = Layout::new(covariates.to_vec());
        let e = &cfg.errors;
        let sc = index_scale(cfg);
        let mut th = vec![0.0; layout.dim()];
        th[AP_STAR] = self.ap_star;
        th[AT] = self.at;
        th[AY] = self.ay;
        th[AP_STAR_S] = self.ap_star_s;
        th[AT_S] = self.at_s;
        th[AY_S] = self.ay_s;
        th[DELTA] = self.delta;
        th[BT] = self.bt;
        th[BP] = self.bp;
        th[BY] = self.by;
        th[HOME_C] = (self.alpha / (1.0 - self.alpha)).ln();
        th[LN_SIG_W] = e.sigma_w.ln();
        th[LN_SIG_S] = e.sigma_s.ln();
        th[LN_SIG_H] = e.sigma_h.ln();
        th[LN_SIG_ETA] = e.sigma_eta.ln();
        th[CHI_S] = e.chi_s;
        th[CHI_T] = e.chi_t / sc;
        th[CHI_H] = e.chi_h;
        let k = layout.k();
        for (j, name) in covariates.iter().enumerate() {
            let (w, s, t) = match name.as_str() {
                CONST => (self.const_w, self.const_s, coef(&cfg.beta_t, CONST) / sc),
                CF_RESIDUAL => (0.0, 0.0, 0.0),
                other if SIM_COVARIATES.contains(&other) => (
                    coef(&cfg.beta_w, other),
                    coef(&cfg.beta_s, other),
                    coef(&cfg.beta_t, other) / sc,
                ),
                other => return Err(Error::InvalidInput(format!("covariate `{other}` is not simulated"))),
            };
            th[N_CORE + j] = w;
            th[N_CORE + k + j] = s;
            th[N_CORE + 2 * k + j] = t;
        }
        Ok(th)
    }
}

/// Hidden per-household quantities.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HouseholdDraw {
    pub eta: f64,
    pub teen_wage: f64,
    pub school_index: f64,
    pub takeup_index: f64,
    /// Potential parental labor supply (endowment share) in each regime.
    pub m_work: f64,
    pub m_school: f64,
    pub rho_p: f64,
    pub rho_t: f64,
    pub public_spending: f64,
    pub full_income: f64,
}

impl HouseholdDraw {
    pub const COLUMNS: [&'static str; 10] = [
        "eta",
        "teen_wage",
        "school_index",
        "takeup_index",
        "m_work",
        "m_school",
        "rho_p",
        "rho_t",
        "public_spending",
        "full_income",
    ];

    fn row(&self) -> Vec<f64> {
        vec![
            self.eta,
            self.teen_wage,
            self.school_index,
            self.takeup_index,
            self.m_work,
            self.m_school,
            self.rho_p,
            self.rho_t,
            self.public_spending,
            self.full_income,
        ]
    }
}

fn draw_covariates(rng: &mut ChaCha8Rng, teen_age: u32) -> BTreeMap<String, f64> {
    let parent_age = (44.6 + 7.0 * normal(rng)).clamp(30.0, 64.0);
    let parent_school = (7.0 + 3.0 * normal(rng)).round().clamp(0.0, 17.0);
    let u: f64 = rng.random();
    let young_children = if u < 0.45 {
        0.0
    } else if u < 0.8 {
        1.0
    } else if u < 0.95 {
        2.0
    } else {
        3.0
    };
    let lag = rng.random_range(0..3u32) as f64;
    let teen_school = (teen_age as f64 - 6.0 - lag).clamp(5.0, 14.0);
    let urban = if rng.random::<f64>() < 0.6 { 1.0 } else { 0.0 };
    BTreeMap::from([
        ("parent_age".to_string(), parent_age),
        ("parent_school".to_string(), parent_school),
        ("young_children".to_string(), young_children),
        ("teen_school".to_string(), teen_school),
        ("urban".to_string(), urban),
    ])
}

fn linear(map: &BTreeMap<String, f64>, x: &BTreeMap<String, f64>) -> f64 {
    map.iter()
        .map(|(k, b)| if k == CONST { *b } else { b * x[k] })
        .sum()
}

fn simulate_household(cfg: &SimConfig, truth: &TruthParams, i: usize) -> (HouseholdRecord, HouseholdDraw) {
    let mut rng = household_rng(cfg.seed, i);
    let e = &cfg.errors;
    let z = normal(&mut rng);
    let (e_w, e_s, e_t, e_h) = (normal(&mut rng), normal(&mut rng), normal(&mut rng), normal(&mut rng));
    let teen_age = rng.random_range(15..=20u32);
    let x = draw_covariates(&mut rng, teen_age);
    let w = &cfg.wages;
    let ln_wp = w.parent_ln_mean + w.parent_ln_sd * normal(&mut rng);
    let ln_wt = w.teen_ln_mean
        + w.teen_age_slope * (teen_age as f64 - 17.0)
        + w.teen_school_slope * (x["teen_school"] - 9.0)
        + w.teen_ln_sd * normal(&mut rng);
    let y_base = cfg.nonlabor.mean + cfg.nonlabor.sd * normal(&mut rng) + cfg.nonlabor.eta_loading * z;
    let instrument: f64 = rng.random();
    let v = normal(&mut rng);
    let tr = &cfg.transfer;
    let amount = tr.amount_min + (tr.amount_max - tr.amount_min) * rng.random::<f64>();

    let (wp, wt) = (ln_wp.exp(), ln_wt.exp());
    let eta = e.sigma_eta * z;
    let takeup_index = tr.intercept + tr.instrument_loading * instrument + linear(&tr.covariate_loadings, &x) + v;
    let treated = takeup_index >= 0.0;
    let y = y_base + if treated { amount } else { 0.0 };

    let (gp, gy) = (truth.gamma_p, truth.gamma_y);
    let school_index =
        linear(&cfg.beta_t, &x) + cfg.b_t * (wt - gp * ln_wp - gy * y) + e.chi_t * eta + e.sigma_t * e_t;
    let school = treated || school_index >= 0.0;

    let a = cfg.alpha;
    let k = truth.public_spending;
    let ln_g = a * ln_wp + (1.0 - a) * ln_wt + unit_cost_constant(a);
    let u_w = eta + e.sigma_w * e_w;
    let u_s = e.chi_s * eta + e.sigma_s * e_s;
    let regime = |s: bool| -> (f64, f64, f64, f64) {
        let full_income = if s { y } else { y + wt };
        let beta = if s { &cfg.beta_s } else { &cfg.beta_w };
        let u = if s { u_s } else { u_w };
        match cfg.truth {
            TruthKind::Collective => {
                let c = &cfg.collective;
                let base = c.psi_p * ln_wp + c.psi_t * wt + c.psi_y * y;
                let rho_t = if s { c.kappa1 + c.theta_t_rho * base } else { c.kappa0 + base };
                let rho_p = full_income - rho_t - k;
                let m = c.theta_p_w * ln_wp + c.theta_p_rho * rho_p + c.theta_p_k * ln_g + linear(beta, &x) + u;
                (m, rho_p, rho_t, full_income)
            }
            _ => {
                let un = &cfg.unitary;
                let rho_p = full_income - k;
                let m = un.m0 + un.theta_w * ln_wp + un.theta_y * rho_p + un.theta_k * ln_g + linear(beta, &x) + u;
                (m, rho_p, 0.0, full_income)
            }
        }
    };
    let (m_work, ..) = regime(false);
    let (m_school, ..) = regime(true);
    let (m, rho_p, rho_t, full_income) = regime(school);

    let u_h = e.chi_h * eta + e.sigma_h * e_h;
    let hp = a * k / wp * (0.5 * u_h).exp();
    let ht = (1.0 - a) * k / wt * (-0.5 * u_h).exp();
    let end = cfg.time.endowment;

    let rec = HouseholdRecord {
        id: format!("h{i:06}"),
        year: cfg.year,
        teen_gender: cfg.gender,
        teen_age,
        schooling: school,
        teen_market_hours: if school { 0.0 } else { cfg.time.teen_work_hours },
        teen_wage: (!school || cfg.reveal_student_wages).then_some(wt),
        teen_wage_imputed: false,
        teen_domestic_hours: ht * end,
        parent_wage: wp,
        parent_market_hours: (m * end).max(0.0),
        parent_domestic_hours: hp * end,
        nonlabor_income: y,
        treated,
        transfer_amount: if treated { amount } else { 0.0 },
        instrument,
        covariates: x,
        cf_residual: None,
    };
    let draw = HouseholdDraw {
        eta,
        teen_wage: wt,
        school_index,
        takeup_index,
        m_work,
        m_school,
        rho_p,
        rho_t,
        public_spending: k,
        full_income,
    };
    (rec, draw)
}

/// Simulate a household-model dataset with its hidden truth ledger.
pub fn generate_households(cfg: &SimConfig) -> Result<(Dataset, TruthLedger)> {
    cfg.validate()?;
    let truth = TruthParams::from_config(cfg)?;
    let out: Vec<(HouseholdRecord, HouseholdDraw)> =
        (0..cfg.n).into_par_iter().map(|i| simulate_household(cfg, &truth, i)).collect();
    let mut ids = Vec::with_capacity(cfg.n);
    let mut rows = Vec::with_capacity(cfg.n);
    let mut records = Vec::with_capacity(cfg.n);
    for (r, d) in out {
        ids.push(r.id.clone());
        rows.push(d.row());
        records.push(r);
    }
    let ledger = TruthLedger {
        kind: cfg.truth,
        columns: HouseholdDraw::COLUMNS.iter().map(|s| s.to_string()).collect(),
        ids,
        rows,
        household: Some(truth),
        mte: None,
    };
    Ok((Dataset::new(records)?, ledger))
}
