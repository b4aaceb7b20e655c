use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Gender;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthKind {
    Unitary,
    Collective,
    MteScenario,
}

impl std::str::FromStr for TruthKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unitary" => Ok(TruthKind::Unitary),
            "collective" => Ok(TruthKind::Collective),
            "mte_scenario" | "mte" => Ok(TruthKind::MteScenario),
            other => Err(Error::Config(format!(
                "unknown truth `{other}` (expected unitary, collective or mte_scenario)"
            ))),
        }
    }
}

/// Parent-side primitives of the collective model plus the teen's sharing rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectiveTruth {
    pub theta_p_w: f64,
    pub theta_p_rho: f64,
    /// F′, the teen's retained share when studying.
    pub theta_t_rho: f64,
    pub theta_p_k: f64,
    pub theta_t_k: f64,
    pub psi_p: f64,
    pub psi_t: f64,
    pub psi_y: f64,
    /// Sharing-rule constants in the work and school regimes.
    pub kappa0: f64,
    pub kappa1: f64,
}

impl Default for CollectiveTruth {
    fn default() -> Self {
        CollectiveTruth {
            theta_p_w: -0.1,
            theta_p_rho: -0.15,
            theta_t_rho: 0.821,
            theta_p_k: -0.05,
            theta_t_k: 0.02,
            psi_p: 1.796,
            psi_t: 1.146,
            psi_y: 2.190,
            kappa0: 0.0,
            kappa1: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnitaryTruth {
    pub theta_w: f64,
    pub theta_y: f64,
    pub theta_k: f64,
    /// Income slope of the reservation-wage frontier; γ_p follows from the
    /// unitary restrictions.
    pub gamma_y: f64,
    /// Labor-supply level shift common to both regimes.
    pub m0: f64,
}

impl Default for UnitaryTruth {
    fn default() -> Self {
        UnitaryTruth {
            theta_w: 0.1,
            theta_y: -0.1,
            theta_k: -0.05,
            gamma_y: 0.8,
            m0: 0.7,
        }
    }
}

/// Common factor loadings and idiosyncratic scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErrorScales {
    pub sigma_eta: f64,
    pub chi_s: f64,
    pub chi_t: f64,
    pub chi_h: f64,
    pub sigma_w: f64,
    pub sigma_s: f64,
    pub sigma_t: f64,
    pub sigma_h: f64,
}

impl Default for ErrorScales {
    fn default() -> Self {
        ErrorScales {
            sigma_eta: 0.06,
            chi_s: 0.8,
            chi_t: 3.0,
            chi_h: 4.0,
            sigma_w: 0.05,
            sigma_s: 0.05,
            sigma_t: 1.0,
            sigma_h: 0.5,
        }
    }
}

impl ErrorScales {
    pub fn zero() -> Self {
        ErrorScales {
            sigma_eta: 0.0,
            chi_s: 0.0,
            chi_t: 0.0,
            chi_h: 0.0,
            sigma_w: 0.0,
            sigma_s: 0.0,
            sigma_t: 0.0,
            sigma_h: 0.0,
        }
    }
}

/// Wage distributions. Parent wages default to mean 1.78, SD 0.83.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WageDist {
    pub parent_ln_mean: f64,
    pub parent_ln_sd: f64,
    /// Teen log wage at age 17 with 9 years of schooling.
    pub teen_ln_mean: f64,
    pub teen_age_slope: f64,
    pub teen_school_slope: f64,
    pub teen_ln_sd: f64,
}

impl Default for WageDist {
    fn default() -> Self {
        let cv2 = (0.83f64 / 1.78).powi(2);
        let sd = (1.0 + cv2).ln().sqrt();
        WageDist {
            parent_ln_mean: 1.78f64.ln() - 0.5 * sd * sd,
            parent_ln_sd: sd,
            teen_ln_mean: 0.134,
            teen_age_slope: 0.06,
            teen_school_slope: 0.04,
            teen_ln_sd: 0.4,
        }
    }
}

/// Non-labor income before transfers: normal, optionally loaded on η.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NonlaborDist {
    pub mean: f64,
    pub sd: f64,
    /// Loading on the standardized household factor (endogeneity).
    pub eta_loading: f64,
}

impl Default for NonlaborDist {
    fn default() -> Self {
        NonlaborDist {
            mean: 2.0,
            sd: 0.6,
            eta_loading: 0.0,
        }
    }
}

/// Take-up probit in (X, Z) and the transfer amount.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferRule {
    pub amount_min: f64,
    pub amount_max: f64,
    pub intercept: f64,
    pub instrument_loading: f64,
    pub covariate_loadings: BTreeMap<String, f64>,
}

impl Default for TransferRule {
    fn default() -> Self {
        TransferRule {
            amount_min: 1.0,
            amount_max: 3.0,
            intercept: -1.5,
            instrument_loading: 2.0,
            covariate_loadings: BTreeMap::from([("young_children".to_string(), 0.2)]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    /// Weekly hours equal to a time endowment of one.
    pub endowment: f64,
    /// Weekly school hours S.
    pub school_hours: f64,
    /// Fixed weekly market hours m̄^t of a working teen.
    pub teen_work_hours: f64,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig {
            endowment: 98.0,
            school_hours: 35.0,
            teen_work_hours: 40.0,
        }
    }
}

/// Potential-outcome scenario for MTE checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MteTruth {
    /// Untreated and treated outcome coefficients on `const` and `x1`.
    pub beta0: BTreeMap<String, f64>,
    pub beta1: BTreeMap<String, f64>,
    pub sigma0: f64,
    pub sigma1: f64,
    /// corr(U0, V), corr(U1, V) and corr(U0, U1).
    pub rho0: f64,
    pub rho1: f64,
    pub rho01: f64,
    /// Treatment index μ_D = intercept + pi_x·x1 + pi_z·Z.
    pub intercept: f64,
    pub pi_x: f64,
    pub pi_z: f64,
    /// Covariate name under which the observed outcome is stored.
    pub outcome: String,
}

impl Default for MteTruth {
    fn default() -> Self {
        MteTruth {
            beta0: BTreeMap::from([("const".to_string(), 1.0), ("x1".to_string(), 0.5)]),
            beta1: BTreeMap::from([("const".to_string(), 2.0), ("x1".to_string(), 0.8)]),
            sigma0: 1.0,
            sigma1: 1.0,
            rho0: -0.25,
            rho1: 0.25,
            rho01: 0.0,
            intercept: -1.0,
            pi_x: 0.5,
            pi_z: 2.0,
            outcome: "outcome".into(),
        }
    }
}

impl MteTruth {
    pub fn coef(map: &BTreeMap<String, f64>, k: &str) -> f64 {
        map.get(k).copied().unwrap_or(0.0)
    }

    /// Slope of the true MTE in Φ⁻¹(u).
    pub fn slope(&self) -> f64 {
        self.sigma1 * self.rho1 - self.sigma0 * self.rho0
    }

    /// μ₁(x) − μ₀(x).
    pub fn effect_at(&self, x1: f64) -> f64 {
        Self::coef(&self.beta1, "const") - Self::coef(&self.beta0, "const")
            + (Self::coef(&self.beta1, "x1") - Self::coef(&self.beta0, "x1")) * x1
    }
}

/// Simulator configuration. Every table is optional in TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    pub seed: u64,
    pub truth: TruthKind,
    pub gender: Gender,
    pub year: i32,
    /// Parent's Cobb–Douglas exponent in home production.
    pub alpha: f64,
    /// Schooling-index coefficient on the teen wage.
    pub b_t: f64,
    /// Covariate coefficients (including `const`) of the work- and
    /// school-regime labor supply and of the schooling index.
    pub beta_w: BTreeMap<String, f64>,
    pub beta_s: BTreeMap<String, f64>,
    pub beta_t: BTreeMap<String, f64>,
    pub collective: CollectiveTruth,
    pub unitary: UnitaryTruth,
    pub errors: ErrorScales,
    pub wages: WageDist,
    pub nonlabor: NonlaborDist,
    pub transfer: TransferRule,
    pub time: TimeConfig,
    /// Publish students' potential wages instead of leaving them missing.
    pub reveal_student_wages: bool,
    pub mte: MteTruth,
}

/// Covariates the household simulator draws.
pub const SIM_COVARIATES: [&str; 5] = ["parent_age", "parent_school", "young_children", "teen_school", "urban"];

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 5000,
            seed: 7,
            truth: TruthKind::Collective,
            gender: Gender::Son,
            year: 2012,
            alpha: 0.9,
            b_t: -1.846,
            beta_w: BTreeMap::from([
                ("const".to_string(), 0.1),
                ("parent_school".to_string(), -0.003),
                ("young_children".to_string(), 0.01),
            ]),
            beta_s: BTreeMap::from([
                ("const".to_string(), 0.0),
                ("parent_school".to_string(), -0.002),
                ("young_children".to_string(), 0.015),
            ]),
            beta_t: BTreeMap::from([
                ("const".to_string(), 0.35),
                ("parent_school".to_string(), 0.05),
                ("young_children".to_string(), -0.1),
            ]),
            collective: CollectiveTruth::default(),
            unitary: UnitaryTruth::default(),
            errors: ErrorScales::default(),
            wages: WageDist::default(),
            nonlabor: NonlaborDist::default(),
            transfer: TransferRule::default(),
            time: TimeConfig::default(),
            reveal_student_wages: false,
            mte: MteTruth::default(),
        }
    }
}

impl SimConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(s).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        SimConfig::from_toml_str(&s).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Home-production expenditure g·f̄^K implied by the BLS condition.
    pub fn public_good_spending(&self) -> f64 {
        match self.truth {
            TruthKind::Collective => {
                let c = &self.collective;
                c.theta_p_k / c.theta_p_rho + c.theta_t_k / c.theta_t_rho
            }
            _ => self.unitary.theta_k / self.unitary.theta_y,
        }
    }

    /// Reservation-wage frontier (γ_p, γ_y) implied by the truth.
    pub fn frontier(&self) -> (f64, f64) {
        match self.truth {
            TruthKind::Collective => {
                let c = &self.collective;
                let q = 1.0 - c.theta_t_rho;
                let gy = q * c.psi_y / (1.0 - q * c.psi_t);
                (gy * c.psi_p / c.psi_y, gy)
            }
            _ => {
                let u = &self.unitary;
                let ap_star = u.theta_w + u.theta_k * self.alpha;
                (u.gamma_y * ap_star / u.theta_y, u.gamma_y)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n == 0 {
            return bad("n must be >= 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        let e = &self.errors;
        for (name, v) in [
            ("sigma_eta", e.sigma_eta),
            ("sigma_w", e.sigma_w),
            ("sigma_s", e.sigma_s),
            ("sigma_t", e.sigma_t),
            ("sigma_h", e.sigma_h),
            ("wages.parent_ln_sd", self.wages.parent_ln_sd),
            ("wages.teen_ln_sd", self.wages.teen_ln_sd),
            ("nonlabor.sd", self.nonlabor.sd),
            ("time.endowment", self.time.endowment),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a finite scale >= 0, got {v}"));
            }
        }
        if self.time.endowment == 0.0 {
            return bad("time.endowment must be positive".into());
        }
        let t = &self.transfer;
        if !(t.amount_min >= 0.0 && t.amount_max >= t.amount_min) {
            return bad(format!(
                "transfer amounts need 0 <= amount_min <= amount_max, got [{}, {}]",
                t.amount_min, t.amount_max
            ));
        }
        for map in [&self.beta_w, &self.beta_s, &self.beta_t, &t.covariate_loadings] {
            if let Some(k) = map.keys().find(|k| *k != "const" && !SIM_COVARIATES.contains(&k.as_str())) {
                return bad(format!("unknown simulator covariate `{k}`"));
            }
        }
        match self.truth {
            TruthKind::Collective => {
                let c = &self.collective;
                if c.theta_t_rho == 0.0 || c.theta_p_rho == 0.0 {
                    return bad("theta_t_rho and theta_p_rho must be nonzero".into());
                }
                let s = ((1.0 - c.theta_t_rho) * c.psi_t).abs();
                if s >= 1.0 {
                    return bad(format!(
                        "sufficiency condition fails: |(1 - theta_t_rho) psi_t| = {s:.4} >= 1"
                    ));
                }
                if c.psi_y == 0.0 {
                    return bad("psi_y must be nonzero".into());
                }
            }
            TruthKind::Unitary => {
                if self.unitary.theta_y == 0.0 {
                    return bad("unitary theta_y must be nonzero".into());
                }
            }
            TruthKind::MteScenario => {
                let m = &self.mte;
                if !(m.sigma0 >= 0.0 && m.sigma1 >= 0.0) {
                    return bad("mte sigmas must be >= 0".into());
                }
                super::mte::correlation_factor(m)?;
            }
        }
        if self.truth != TruthKind::MteScenario {
            if self.b_t == 0.0 {
                return bad("b_t must be nonzero".into());
            }
            let k = self.public_good_spending();
            if !(k > 0.0 && k.is_finite()) {
                return bad(format!("BLS condition gives non-positive public-good spending {k}"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_frontier_matches_sons_slopes() {
        let (gp, gy) = SimConfig::default().frontier();
        assert!((gy - 0.493).abs() < 1e-3, "{gy}");
        assert!((gp - 0.405).abs() < 2e-3, "{gp}");
    }

    #[test]
    fn insufficient_sharing_rule_refused() {
        let mut c = SimConfig::default();
        c.collective.theta_t_rho = -1.0;
        assert!(c.validate().unwrap_err().to_string().contains("sufficiency"));
    }

    #[test]
    fn unknown_key_rejected() {
        let e = SimConfig::from_toml_str("n = 10\nbogus = 1\n").unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
    }

    #[test]
    fn parent_wage_moments() {
        let w = WageDist::default();
        let mean = (w.parent_ln_mean + 0.5 * w.parent_ln_sd.powi(2)).exp();
        let var = (w.parent_ln_sd.powi(2).exp() - 1.0) * mean * mean;
        assert!((mean - 1.78).abs() < 1e-12);
        assert!((var.sqrt() - 0.83).abs() < 1e-12);
    }
}
