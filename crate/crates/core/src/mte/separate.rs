use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::propensity::{value, PropensityFit};
use super::support::{support_grid, Support};
use crate::data::{Dataset, HouseholdRecord};
use crate::error::{Error, Result};
use crate::stats::fit::{symmetrize, Design, FitResult};
use crate::stats::local_poly::{local_poly_fit, silverman_bandwidth};
use crate::stats::ols::ols_fit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MteMethod {
    /// K_j(p) a degree-1 polynomial.
    ParametricDeg1,
    /// K_j(p) a degree-2 local polynomial after partialling out X.
    SemiparametricDeg2,
}

impl MteMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            MteMethod::ParametricDeg1 => "parametric_deg1",
            MteMethod::SemiparametricDeg2 => "semiparametric_deg2",
        }
    }
}

/// MTE over resistance quantiles at the covariate means.
#[derive(Debug, Clone, Serialize)]
pub struct MteCurve {
    pub u_grid: Vec<f64>,
    /// NaN marks an undefined grid point.
    pub mte: Vec<f64>,
    pub se: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// β₁ − β₀ by covariate.
    pub observed_part: Vec<(String, f64)>,
    pub xbar: Vec<(String, f64)>,
    pub support: Support,
    pub method: MteMethod,
    pub outcome: String,
    pub n_used: usize,
}

impl MteCurve {
    /// OLS slope of the curve on Φ⁻¹(u) over the defined grid points.
    pub fn slope_in_normal_quantile(&self) -> f64 {
        let pts: Vec<(f64, f64)> = self
            .u_grid
            .iter()
            .zip(&self.mte)
            .filter(|(_, m)| m.is_finite())
            .map(|(&u, &m)| (crate::stats::normal::quantile(u), m))
            .collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    }
}

/// The fitted pieces behind a curve, kept for the heterogeneity tests.
#[derive(Debug, Clone)]
pub struct MteFits {
    pub method: MteMethod,
    pub covariates: Vec<String>,
    /// Covariate slopes (no constant) per arm, with covariances.
    pub beta1: Vec<f64>,
    pub beta0: Vec<f64>,
    pub cov_beta1: DMatrix<f64>,
    pub cov_beta0: DMatrix<f64>,
    /// Parametric K coefficients κ_j0..κ_jd per arm, with covariances.
    pub kappa1: Vec<f64>,
    pub kappa0: Vec<f64>,
    pub cov_kappa1: DMatrix<f64>,
    pub cov_kappa0: DMatrix<f64>,
    pub treated_fit: Option<FitResult>,
    pub untreated_fit: Option<FitResult>,
    pub bandwidth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MteSpec {
    /// Record field (`schooling`, `parent_market_hours`, …) or covariate.
    pub outcome: String,
    /// Covariates entering both outcome equations additively.
    pub covariates: Vec<String>,
    pub method: MteMethod,
    pub grid_step: f64,
    /// Local-polynomial bandwidth; Silverman's rule when absent.
    pub bandwidth: Option<f64>,
}

impl Default for MteSpec {
    fn default() -> Self {
        MteSpec {
            outcome: "parent_market_hours".into(),
            covariates: vec!["parent_school".into(), "young_children".into()],
            method: MteMethod::ParametricDeg1,
            grid_step: 0.01,
            bandwidth: None,
        }
    }
}

pub fn outcome_value(rec: &HouseholdRecord, name: &str) -> Option<f64> {
    match name {
        "schooling" => Some(rec.schooling as u8 as f64),
        "parent_market_hours" => Some(rec.parent_market_hours),
        "parent_domestic_hours" => Some(rec.parent_domestic_hours),
        "teen_domestic_hours" => Some(rec.teen_domestic_hours),
        "teen_market_hours" => Some(rec.teen_market_hours),
        _ => value(rec, name),
    }
}

struct Arm {
    p: Vec<f64>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
}

fn arms(d: &Dataset, fit: &PropensityFit, spec: &MteSpec, support: &Support) -> Result<(Arm, Arm, Vec<f64>, usize)> {
    if fit.scores.len() != d.len() {
        return Err(Error::InvalidInput(format!(
            "{} propensity scores for {} records",
            fit.scores.len(),
            d.len()
        )));
    }
    let k = spec.covariates.len();
    let mut a1 = Arm { p: vec![], x: vec![], y: vec![] };
    let mut a0 = Arm { p: vec![], x: vec![], y: vec![] };
    let mut xsum = vec![0.0; k];
    let mut used = 0;
    for (r, &p) in d.records().iter().zip(&fit.scores) {
        if !support.contains(p) {
            continue;
        }
        let y = outcome_value(r, &spec.outcome).ok_or_else(|| Error::Validation {
            id: r.id.clone(),
            rule: format!("outcome `{}` missing", spec.outcome),
        })?;
        let x = spec
            .covariates
            .iter()
            .map(|c| value(r, c))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| Error::Validation {
                id: r.id.clone(),
                rule: "MTE covariate missing".into(),
            })?;
        for j in 0..k {
            xsum[j] += x[j];
        }
        used += 1;
        let arm = if r.treated { &mut a1 } else { &mut a0 };
        arm.p.push(p);
        arm.x.push(x);
        arm.y.push(y);
    }
    if a1.y.len() < k + 3 || a0.y.len() < k + 3 {
        return Err(Error::NoSupport(format!(
            "too few units in support ({} treated, {} untreated)",
            a1.y.len(),
            a0.y.len()
        )));
    }
    let xbar = xsum.iter().map(|s| s / used as f64).collect();
    Ok((a1, a0, xbar, used))
}

/// OLS of y on [1, p, …, p^deg, X]; returns (κ, β, cov κ, cov β, fit).
fn parametric_arm(a: &Arm, covs: &[String], deg: usize) -> Result<(Vec<f64>, Vec<f64>, DMatrix<f64>, DMatrix<f64>, FitResult)> {
    let mut names = vec!["const".to_string()];
    names.extend((1..=deg).map(|j| format!("p^{j}")));
    names.extend(covs.iter().cloned());
    let rows: Vec<Vec<f64>> = a
        .p
        .iter()
        .zip(&a.x)
        .map(|(&p, x)| {
            let mut r: Vec<f64> = (0..=deg).map(|j| p.powi(j as i32)).collect();
            r.extend_from_slice(x);
            r
        })
        .collect();
    let f = ols_fit(&Design::from_rows(names, &rows)?, &a.y)?.fit;
    let nk = deg + 1;
    let kappa = f.coefficients[..nk].to_vec();
    let beta = f.coefficients[nk..].to_vec();
    let ck = f.covariance.view((0, 0), (nk, nk)).into_owned();
    let nb = beta.len();
    let cb = f.covariance.view((nk, nk), (nb, nb)).into_owned();
    Ok((kappa, beta, ck, cb, f))
}

/// d/du[u·K₁(u)] + d/du[(1−u)·K₀(u)] for polynomial K.
pub fn parametric_unobserved(kappa1: &[f64], kappa0: &[f64], u: f64) -> f64 {
    let mut s = 0.0;
    for (j, &k) in kappa1.iter().enumerate() {
        s += (j as f64 + 1.0) * k * u.powi(j as i32);
    }
    for (j, &k) in kappa0.iter().enumerate() {
        let jf = j as f64;
        let lower = if j == 0 { 0.0 } else { jf * u.powi(j as i32 - 1) };
        s += k * (lower - (jf + 1.0) * u.powi(j as i32));
    }
    s
}

/// Linear interpolation of a smooth on its grid (flat beyond the ends).
fn interp(grid: &[f64], v: &[f64], x: f64) -> f64 {
    let n = grid.len();
    if x <= grid[0] {
        return v[0];
    }
    if x >= grid[n - 1] {
        return v[n - 1];
    }
    let i = grid.partition_point(|g| *g <= x) - 1;
    let t = (x - grid[i]) / (grid[i + 1] - grid[i]);
    v[i] + t * (v[i + 1] - v[i])
}

const RESIDUAL_GRID: usize = 200;

/// Robinson partialling out: local-linear E[·|p] on a fine grid, then OLS
/// of y-residuals on X-residuals.
fn robinson(a: &Arm, covs: &[String], h: f64) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let k = covs.len();
    if k == 0 {
        return Ok((vec![], DMatrix::zeros(0, 0)));
    }
    let (lo, hi) = a.p.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), &p| (l.min(p), u.max(p)));
    let grid: Vec<f64> = (0..RESIDUAL_GRID)
        .map(|i| lo + (hi - lo) * i as f64 / (RESIDUAL_GRID - 1) as f64)
        .collect();
    let smooth = |v: &[f64]| -> Result<Vec<f64>> {
        let s = local_poly_fit(&a.p, v, 1, h, &grid)?;
        let fitted = fill_undefined(&grid, &s.fitted);
        Ok(a.p.iter().map(|&p| v_at(&grid, &fitted, p)).collect())
    };
    let ey = smooth(&a.y)?;
    let ry: Vec<f64> = a.y.iter().zip(&ey).map(|(y, e)| y - e).collect();
    let mut rx = vec![vec![0.0; k]; a.y.len()];
    for j in 0..k {
        let col: Vec<f64> = a.x.iter().map(|x| x[j]).collect();
        let e = smooth(&col)?;
        for i in 0..col.len() {
            rx[i][j] = col[i] - e[i];
        }
    }
    let f = ols_fit(&Design::from_rows(covs.to_vec(), &rx)?, &ry)?.fit;
    Ok((f.coefficients, f.covariance))
}

fn v_at(grid: &[f64], v: &[f64], x: f64) -> f64 {
    interp(grid, v, x)
}

/// Replace undefined smooth values by the nearest defined neighbor.
fn fill_undefined(grid: &[f64], v: &[f64]) -> Vec<f64> {
    let defined: Vec<usize> = (0..v.len()).filter(|&i| v[i].is_finite()).collect();
    if defined.is_empty() {
        return v.to_vec();
    }
    (0..v.len())
        .map(|i| {
            if v[i].is_finite() {
                v[i]
            } else {
                let j = *defined
                    .iter()
                    .min_by(|&&a, &&b| (grid[a] - grid[i]).abs().total_cmp(&(grid[b] - grid[i]).abs()))
                    .unwrap();
                v[j]
            }
        })
        .collect()
}

/// Separate-approach MTE on `grid` (support grid at `spec.grid_step` when `None`).
pub fn mte_separate(
    d: &Dataset,
    fit: &PropensityFit,
    spec: &MteSpec,
    support: &Support,
    grid: Option<&[f64]>,
) -> Result<(MteCurve, MteFits)> {
    if !(spec.grid_step > 0.0 && spec.grid_step < 1.0) {
        return Err(Error::Config(format!("grid_step must lie in (0, 1), got {}", spec.grid_step)));
    }
    let u_grid = match grid {
        Some(g) => g.to_vec(),
        None => support_grid(support, spec.grid_step),
    };
    if u_grid.is_empty() {
        return Err(Error::NoSupport(format!(
            "support [{:.4}, {:.4}] holds no grid point",
            support.lo, support.hi
        )));
    }
    let (a1, a0, xbar, used) = arms(d, fit, spec, support)?;
    let covs = &spec.covariates;
    let k = covs.len();
    let (mte, fits) = match spec.method {
        MteMethod::ParametricDeg1 => {
            let (k1, b1, ck1, cb1, f1) = parametric_arm(&a1, covs, 1)?;
            let (k0, b0, ck0, cb0, f0) = parametric_arm(&a0, covs, 1)?;
            let obs: f64 = (0..k).map(|j| xbar[j] * (b1[j] - b0[j])).sum();
            let mte = u_grid
                .iter()
                .map(|&u| {
                    if support.contains(u) {
                        obs + parametric_unobserved(&k1, &k0, u)
                    } else {
                        f64::NAN
                    }
                })
                .collect();
            let fits = MteFits {
                method: spec.method,
                covariates: covs.clone(),
                beta1: b1,
                beta0: b0,
                cov_beta1: cb1,
                cov_beta0: cb0,
                kappa1: k1,
                kappa0: k0,
                cov_kappa1: ck1,
                cov_kappa0: ck0,
                treated_fit: Some(f1),
                untreated_fit: Some(f0),
                bandwidth: None,
            };
            (mte, fits)
        }
        MteMethod::SemiparametricDeg2 => {
            let all_p: Vec<f64> = a1.p.iter().chain(&a0.p).copied().collect();
            let h = spec.bandwidth.unwrap_or_else(|| silverman_bandwidth(&all_p));
            let (b1, cb1) = robinson(&a1, covs, h)?;
            let (b0, cb0) = robinson(&a0, covs, h)?;
            let resid = |a: &Arm, b: &[f64]| -> Vec<f64> {
                a.y.iter()
                    .zip(&a.x)
                    .map(|(y, x)| y - x.iter().zip(b).map(|(xi, bi)| xi * bi).sum::<f64>())
                    .collect()
            };
            let s1 = local_poly_fit(&a1.p, &resid(&a1, &b1), 2, h, &u_grid)?;
            let s0 = local_poly_fit(&a0.p, &resid(&a0, &b0), 2, h, &u_grid)?;
            let obs: f64 = (0..k).map(|j| xbar[j] * (b1[j] - b0[j])).sum();
            let mte = u_grid
                .iter()
                .enumerate()
                .map(|(i, &u)| {
                    if !support.contains(u) {
                        return f64::NAN;
                    }
                    // d/du[u K1] = K1 + u K1', d/du[(1−u) K0] = −K0 + (1−u) K0'
                    obs + s1.fitted[i] + u * s1.derivative[i] - s0.fitted[i] + (1.0 - u) * s0.derivative[i]
                })
                .collect();
            let fits = MteFits {
                method: spec.method,
                covariates: covs.clone(),
                beta1: b1,
                beta0: b0,
                cov_beta1: cb1,
                cov_beta0: cb0,
                kappa1: vec![],
                kappa0: vec![],
                cov_kappa1: DMatrix::zeros(0, 0),
                cov_kappa0: DMatrix::zeros(0, 0),
                treated_fit: None,
                untreated_fit: None,
                bandwidth: Some(h),
            };
            (mte, fits)
        }
    };
    let n = u_grid.len();
    let curve = MteCurve {
        observed_part: covs.iter().cloned().zip(fits.beta1.iter().zip(&fits.beta0).map(|(a, b)| a - b)).collect(),
        xbar: covs.iter().cloned().zip(xbar).collect(),
        u_grid,
        mte,
        se: vec![f64::NAN; n],
        lo: vec![f64::NAN; n],
        hi: vec![f64::NAN; n],
        support: *support,
        method: spec.method,
        outcome: spec.outcome.clone(),
        n_used: used,
    };
    Ok((curve, fits))
}

/// Wald statistic r'V⁻¹r.
pub(crate) fn wald(r: &DVector<f64>, v: &DMatrix<f64>) -> Result<f64> {
    let mut v = v.clone();
    symmetrize(&mut v);
    let chol = v
        .cholesky()
        .ok_or_else(|| Error::SingularWald(format!("{}x{} variance is not positive definite", r.len(), r.len())))?;
    Ok(r.dot(&chol.solve(r)))
}
