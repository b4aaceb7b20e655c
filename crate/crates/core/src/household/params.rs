use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const AP_STAR: usize = 0;
pub const AT: usize = 1;
pub const AY: usize = 2;
pub const AP_STAR_S: usize = 3;
pub const AT_S: usize = 4;
pub const AY_S: usize = 5;
pub const DELTA: usize = 6;
pub const BT: usize = 7;
pub const BP: usize = 8;
pub const BY: usize = 9;
pub const HOME_C: usize = 10;
pub const LN_SIG_W: usize = 11;
pub const LN_SIG_S: usize = 12;
pub const LN_SIG_H: usize = 13;
pub const LN_SIG_ETA: usize = 14;
pub const CHI_S: usize = 15;
pub const CHI_T: usize = 16;
pub const CHI_H: usize = 17;
/// First covariate coefficient; blocks β_w, β_s, β_t follow, each of width k.
pub const N_CORE: usize = 18;

const CORE_NAMES: [&str; N_CORE] = [
    "Ap_star", "At", "Ay", "ap_star", "at", "ay", "delta", "bt", "bp", "by", "home_c",
    "ln_sigma_w", "ln_sigma_s", "ln_sigma_h", "ln_sigma_eta", "chi_s", "chi_t", "chi_h",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Unrestricted,
    Unitary,
    Collective,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Unrestricted, ModelKind::Unitary, ModelKind::Collective];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Unrestricted => "unrestricted",
            ModelKind::Unitary => "unitary",
            ModelKind::Collective => "collective",
        }
    }

    /// Number of restrictions relative to the unrestricted model.
    pub fn restrictions(self) -> usize {
        match self {
            ModelKind::Unrestricted => 0,
            ModelKind::Unitary => 4,
            ModelKind::Collective => 2,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unrestricted" => Ok(ModelKind::Unrestricted),
            "unitary" => Ok(ModelKind::Unitary),
            "collective" => Ok(ModelKind::Collective),
            other => Err(Error::Config(format!(
                "unknown model kind `{other}` (expected unrestricted, unitary or collective)"
            ))),
        }
    }
}

/// Names and index ranges of the full parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    /// Design column names shared by the three covariate blocks.
    pub covariates: Vec<String>,
}

impl Layout {
    pub fn new(covariates: Vec<String>) -> Self {
        Layout { covariates }
    }

    pub fn k(&self) -> usize {
        self.covariates.len()
    }

    pub fn dim(&self) -> usize {
        N_CORE + 3 * self.k()
    }

    pub fn beta_w(&self) -> std::ops::Range<usize> {
        N_CORE..N_CORE + self.k()
    }

    pub fn beta_s(&self) -> std::ops::Range<usize> {
        N_CORE + self.k()..N_CORE + 2 * self.k()
    }

    pub fn beta_t(&self) -> std::ops::Range<usize> {
        N_CORE + 2 * self.k()..N_CORE + 3 * self.k()
    }

    pub fn names(&self) -> Vec<String> {
        let mut v: Vec<String> = CORE_NAMES.iter().map(|s| s.to_string()).collect();
        for block in ["w", "s", "t"] {
            v.extend(self.covariates.iter().map(|c| format!("beta_{block}:{c}")));
        }
        v
    }

    /// Full-vector indices that are free under `kind`.
    pub fn free_indices(&self, kind: ModelKind, home_c_free: bool) -> Vec<usize> {
        let derived: &[usize] = match kind {
            ModelKind::Unrestricted => &[],
            ModelKind::Unitary => &[AP_STAR, AT, AT_S, AY_S],
            ModelKind::Collective => &[AP_STAR, AY],
        };
        (0..self.dim())
            .filter(|i| !derived.contains(i) && (home_c_free || *i != HOME_C))
            .collect()
    }
}

/// Fill the derived entries of `full` from its free entries.
pub fn apply_restrictions(kind: ModelKind, full: &mut [f64]) {
    let (bt, bp, by) = (full[BT], full[BP], full[BY]);
    match kind {
        ModelKind::Unrestricted => {}
        ModelKind::Unitary => {
            let ay = full[AY];
            full[AT] = ay;
            full[AT_S] = 0.0;
            full[AY_S] = ay;
            full[AP_STAR] = (1.0 - by / bt) * full[AP_STAR_S] + ay * bp / bt;
        }
        ModelKind::Collective => {
            let d = full[AT] - full[AT_S];
            full[AY] = full[AY_S] + by / bt * d;
            full[AP_STAR] = full[AP_STAR_S] + bp / bt * d;
        }
    }
}

/// ∂full/∂free at `full` (restrictions already applied), columns ordered as `free`.
pub fn restriction_jacobian(kind: ModelKind, full: &[f64], free: &[usize]) -> DMatrix<f64> {
    let p = full.len();
    let mut j = DMatrix::<f64>::zeros(p, free.len());
    let col: std::collections::HashMap<usize, usize> =
        free.iter().enumerate().map(|(c, &i)| (i, c)).collect();
    for (c, &i) in free.iter().enumerate() {
        j[(i, c)] = 1.0;
    }
    let mut set = |row: usize, var: usize, v: f64| {
        if let Some(&c) = col.get(&var) {
            j[(row, c)] += v;
        }
    };
    let (bt, bp, by) = (full[BT], full[BP], full[BY]);
    match kind {
        ModelKind::Unrestricted => {}
        ModelKind::Unitary => {
            let ay = full[AY];
            let ap = full[AP_STAR_S];
            set(AT, AY, 1.0);
            set(AY_S, AY, 1.0);
            set(AP_STAR, AP_STAR_S, 1.0 - by / bt);
            set(AP_STAR, BY, -ap / bt);
            set(AP_STAR, BT, (ap * by - ay * bp) / (bt * bt));
            set(AP_STAR, AY, bp / bt);
            set(AP_STAR, BP, ay / bt);
        }
        ModelKind::Collective => {
            let d = full[AT] - full[AT_S];
            set(AY, AY_S, 1.0);
            set(AY, AT, by / bt);
            set(AY, AT_S, -by / bt);
            set(AY, BY, d / bt);
            set(AY, BT, -by * d / (bt * bt));
            set(AP_STAR, AP_STAR_S, 1.0);
            set(AP_STAR, AT, bp / bt);
            set(AP_STAR, AT_S, -bp / bt);
            set(AP_STAR, BP, d / bt);
            set(AP_STAR, BT, -bp * d / (bt * bt));
        }
    }
    j
}

/// Largest absolute residual of the cross-multiplied restrictions.
pub fn constraint_residual(kind: ModelKind, full: &[f64]) -> f64 {
    let (bt, bp, by) = (full[BT], full[BP], full[BY]);
    let gp = -bp / bt;
    let gy = -by / bt;
    let r: Vec<f64> = match kind {
        ModelKind::Unrestricted => vec![],
        ModelKind::Unitary => vec![
            full[AT] - full[AY],
            full[AT_S],
            (1.0 + gy) * (full[AY_S] - full[AY]),
            full[AY] * gp - ((1.0 + gy) * full[AP_STAR_S] - full[AP_STAR]),
        ],
        ModelKind::Collective => {
            let dy = full[AY] - full[AY_S];
            vec![
                (full[AT] - full[AT_S]) * gy + dy,
                (full[AP_STAR] - full[AP_STAR_S]) * gy - dy * gp,
            ]
        }
    };
    r.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Reduced-form switching-regression estimates.
#[derive(Debug, Clone, Serialize)]
pub struct ReducedFormEstimates {
    pub kind: ModelKind,
    pub names: Vec<String>,
    /// Full parameter vector (restricted entries filled in).
    pub theta: Vec<f64>,
    /// Covariance of `theta`; derived entries via the restriction Jacobian.
    #[serde(skip)]
    pub covariance: DMatrix<f64>,
    pub loglik: f64,
    pub n: usize,
    pub converged: bool,
    pub iterations: usize,
    pub warnings: Vec<String>,
    pub covariates: Vec<String>,
    /// Whether the home-production intercept was estimated jointly.
    pub home_c_free: bool,
    pub nodes: usize,
}

impl ReducedFormEstimates {
    pub fn layout(&self) -> Layout {
        Layout::new(self.covariates.clone())
    }

    pub fn get(&self, i: usize) -> f64 {
        self.theta[i]
    }

    pub fn se(&self, i: usize) -> f64 {
        crate::stats::fit::diag_se(self.covariance[(i, i)])
    }

    pub fn by_name(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.theta[i])
    }

    pub fn ap_star(&self) -> f64 {
        self.theta[AP_STAR]
    }
    pub fn at(&self) -> f64 {
        self.theta[AT]
    }
    pub fn ay(&self) -> f64 {
        self.theta[AY]
    }
    pub fn ap_star_s(&self) -> f64 {
        self.theta[AP_STAR_S]
    }
    pub fn at_s(&self) -> f64 {
        self.theta[AT_S]
    }
    pub fn ay_s(&self) -> f64 {
        self.theta[AY_S]
    }
    pub fn delta(&self) -> f64 {
        self.theta[DELTA]
    }
    pub fn bt(&self) -> f64 {
        self.theta[BT]
    }
    pub fn bp(&self) -> f64 {
        self.theta[BP]
    }
    pub fn by(&self) -> f64 {
        self.theta[BY]
    }
    /// Schooling-index intercept (the constant of β_t).
    pub fn b0(&self) -> f64 {
        self.theta[self.layout().beta_t().start]
    }

    /// Loadings (χ_w, χ_s, χ_t, χ_h); χ_w is normalized to 1.
    pub fn chi(&self) -> [f64; 4] {
        [1.0, self.theta[CHI_S], self.theta[CHI_T], self.theta[CHI_H]]
    }

    /// Idiosyncratic scales (σ_w, σ_s, σ_t, σ_h); σ_t is normalized to 1.
    pub fn sigma(&self) -> [f64; 4] {
        [
            self.theta[LN_SIG_W].exp(),
            self.theta[LN_SIG_S].exp(),
            1.0,
            self.theta[LN_SIG_H].exp(),
        ]
    }

    pub fn sigma_eta(&self) -> f64 {
        self.theta[LN_SIG_ETA].exp()
    }

    pub fn constraint_residual(&self) -> f64 {
        constraint_residual(self.kind, &self.theta)
    }
}
