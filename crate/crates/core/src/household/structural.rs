use nalgebra::DMatrix;
use serde::Serialize;

use super::alpha::{logistic, AlphaEstimate};
use super::params::*;
use crate::error::{Error, Result};
use crate::stats::delta::delta_method;
use crate::stats::normal::chi2_sf;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LrTest {
    pub stat: f64,
    pub df: usize,
    pub p: f64,
}

/// LR statistic 2(ℓ_u − ℓ_r) with its χ²_df upper-tail p-value.
pub fn lr_from_logliks(restricted: f64, unrestricted: f64, df: usize) -> Result<LrTest> {
    if restricted > unrestricted + 1e-6 {
        return Err(Error::Nesting {
            restricted,
            unrestricted,
        });
    }
    if df == 0 {
        return Err(Error::InvalidInput("LR test needs df >= 1".into()));
    }
    let stat = (2.0 * (unrestricted - restricted)).max(0.0);
    Ok(LrTest {
        stat,
        df,
        p: chi2_sf(stat, df as f64),
    })
}

pub fn lr_test(restricted: &ReducedFormEstimates, unrestricted: &ReducedFormEstimates, df: usize) -> Result<LrTest> {
    lr_from_logliks(restricted.loglik, unrestricted.loglik, df)
}

/// Reservation-wage frontier slopes.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ReservationWage {
    pub gamma_p: f64,
    pub gamma_y: f64,
    pub se_p: f64,
    pub se_y: f64,
}

/// γ_p = −b_p/b_t and γ_y = −b_y/b_t; `cov` is the covariance of (b_t, b_p, b_y).
pub fn reservation_wage(bt: f64, bp: f64, by: f64, cov: &DMatrix<f64>) -> Result<ReservationWage> {
    if bt.abs() < 1e-10 {
        return Err(Error::SingularFrontier(bt.abs()));
    }
    let g = |t: &[f64]| vec![-t[1] / t[0], -t[2] / t[0]];
    let dm = delta_method(&g, &[bt, bp, by], cov)?;
    Ok(ReservationWage {
        gamma_p: dm.values[0],
        gamma_y: dm.values[1],
        se_p: dm.se[0],
        se_y: dm.se[1],
    })
}

pub fn reservation_from_estimates(est: &ReducedFormEstimates) -> Result<ReservationWage> {
    let idx = [BT, BP, BY];
    let cov = DMatrix::from_fn(3, 3, |i, j| est.covariance[(idx[i], idx[j])]);
    reservation_wage(est.bt(), est.bp(), est.by(), &cov)
}

/// Solution of the sharing-rule system at one point of the frontier.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SharingSolution {
    pub f_prime: f64,
    pub psi_t: f64,
    pub psi_p: f64,
    pub psi_y: f64,
    /// A_t implied by the collective restriction.
    pub at: f64,
    pub a: f64,
    pub b: f64,
    pub roots: [f64; 2],
}

fn psi_t_at(a: f64, b: f64, f: f64) -> f64 {
    b / (a - b) * (a - 1.0 - a / f)
}

fn feasible(a: f64, b: f64, f: f64) -> bool {
    f.is_finite() && f != 0.0 && ((1.0 - f) * psi_t_at(a, b, f)).abs() < 1.0
}

/// Solve for F′ and the sharing slopes from the school-regime coefficients
/// (a_t, a_y), the work-regime income coefficient A_y and the frontier.
///
/// `near` picks the root closest to a reference value instead of requiring
/// a unique feasible root.
pub fn solve_sharing(
    at_s: f64,
    ay_s: f64,
    ay: f64,
    gamma_p: f64,
    gamma_y: f64,
    near: Option<f64>,
) -> Result<SharingSolution> {
    if gamma_y.abs() < 1e-12 {
        return Err(Error::SingularFrontier(gamma_y.abs()));
    }
    let at = at_s - (ay - ay_s) / gamma_y;
    let a = at / ay;
    let b = at_s / ay_s;
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::Recovery(format!(
            "regime ratios undefined (A_y = {ay}, a_y = {ay_s})"
        )));
    }
    if (a - b).abs() < 1e-10 {
        return Err(Error::DegenerateRegimes((a - b).abs()));
    }
    let gy = gamma_y;
    let c2 = gy * b * a - 1.0 + a - gy * b;
    let c1 = -b + 1.0 - 2.0 * gy * b * a + gy * a - a;
    let c0 = b + gy * b * a;
    let roots = if c2.abs() < 1e-14 {
        let r = -c0 / c1;
        [r, r]
    } else {
        let disc = c1 * c1 - 4.0 * c2 * c0;
        if disc < 0.0 {
            return Err(Error::Recovery(format!(
                "quadratic in F' has complex roots (discriminant {disc:.4e})"
            )));
        }
        let s = disc.sqrt();
        // numerically stable pair
        let q = -0.5 * (c1 + c1.signum() * s);
        let mut r = [q / c2, c0 / q];
        r.sort_by(f64::total_cmp);
        r
    };
    let f = match near {
        Some(f0) => {
            if (roots[0] - f0).abs() <= (roots[1] - f0).abs() {
                roots[0]
            } else {
                roots[1]
            }
        }
        None => {
            let ok: Vec<f64> = roots.iter().copied().filter(|&f| feasible(a, b, f)).collect();
            match ok.len() {
                0 => {
                    return Err(Error::Recovery(format!(
                        "no root satisfies |(1-F')psi_t| < 1; roots F' = {:.6}, {:.6}",
                        roots[0], roots[1]
                    )))
                }
                1 => ok[0],
                _ if roots[0] == roots[1] => ok[0],
                _ => {
                    return Err(Error::Recovery(format!(
                        "both roots F' = {:.6}, {:.6} satisfy |(1-F')psi_t| < 1; select one manually",
                        roots[0], roots[1]
                    )))
                }
            }
        }
    };
    let psi_t = psi_t_at(a, b, f);
    let psi_y = (a - 1.0 - b / f) / (a - b);
    let psi_p = gamma_p / gamma_y * psi_y;
    Ok(SharingSolution {
        f_prime: f,
        psi_t,
        psi_p,
        psi_y,
        at,
        a,
        b,
        roots,
    })
}

/// Structural parameters recovered from a collective fit.
#[derive(Debug, Clone, Serialize)]
pub struct StructuralParams {
    pub alpha: f64,
    pub gamma_p: f64,
    pub gamma_y: f64,
    pub f_prime: f64,
    pub psi_p: f64,
    pub psi_t: f64,
    pub psi_y: f64,
    pub theta_p_rho: f64,
    pub theta_p_w: f64,
    /// Unitary public-good weight; not point-identified, so always `None` here.
    pub theta_h_k: Option<f64>,
    /// Delta-method SEs in [`StructuralParams::NAMES`] order.
    pub ses: Vec<f64>,
    #[serde(skip)]
    pub covariance: DMatrix<f64>,
    /// The sharing-function constants κ₀, κ₁ are not identified.
    pub kappas_identified: bool,
    pub roots: [f64; 2],
}

impl StructuralParams {
    pub const NAMES: [&'static str; 9] = [
        "alpha", "gamma_p", "gamma_y", "F_prime", "psi_p", "psi_t", "psi_y", "theta_p_rho", "theta_p_w",
    ];

    pub fn values(&self) -> [f64; 9] {
        [
            self.alpha,
            self.gamma_p,
            self.gamma_y,
            self.f_prime,
            self.psi_p,
            self.psi_t,
            self.psi_y,
            self.theta_p_rho,
            self.theta_p_w,
        ]
    }
}

const CHAIN: [usize; 8] = [AT_S, AY_S, AY, BT, BP, BY, AP_STAR, DELTA];

fn chain(v: &[f64], near: Option<f64>) -> Result<Vec<f64>> {
    let (at_s, ay_s, ay, bt, bp, by, ap_star, delta, c) = (v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]);
    if bt.abs() < 1e-10 {
        return Err(Error::SingularFrontier(bt.abs()));
    }
    let gp = -bp / bt;
    let gy = -by / bt;
    let s = solve_sharing(at_s, ay_s, ay, gp, gy, near)?;
    let alpha = logistic(c);
    let theta_p_rho = ay / (1.0 - s.psi_y);
    let ap = ap_star - delta * alpha / (1.0 - alpha);
    let theta_p_w = ap + theta_p_rho * s.psi_p;
    Ok(vec![alpha, gp, gy, s.f_prime, s.psi_p, s.psi_t, s.psi_y, theta_p_rho, theta_p_w])
}

/// Recover α, γ, F′, ψ and θ^p from collective reduced forms, with
/// delta-method SEs through the whole chain (α's variance enters as an
/// independent block).
pub fn recover_sharing_rule(est: &ReducedFormEstimates, alpha: &AlphaEstimate) -> Result<StructuralParams> {
    if est.kind != ModelKind::Collective {
        return Err(Error::InvalidInput(format!(
            "sharing-rule recovery needs collective estimates, got {}",
            est.kind
        )));
    }
    let resid = est.constraint_residual();
    if resid > 1e-8 {
        return Err(Error::Constraint(resid));
    }
    let mut v: Vec<f64> = CHAIN.iter().map(|&i| est.theta[i]).collect();
    v.push(alpha.c);
    let base = chain(&v, None)?;
    let s = solve_sharing(v[0], v[1], v[2], base[1], base[2], None)?;
    let mut cov = DMatrix::<f64>::zeros(9, 9);
    for (a, &i) in CHAIN.iter().enumerate() {
        for (b, &j) in CHAIN.iter().enumerate() {
            cov[(a, b)] = est.covariance[(i, j)];
        }
    }
    cov[(8, 8)] = alpha.c_se * alpha.c_se;
    let f0 = base[3];
    let g = |t: &[f64]| chain(t, Some(f0)).unwrap_or_else(|_| vec![f64::NAN; 9]);
    let dm = delta_method(&g, &v, &cov)?;
    Ok(StructuralParams {
        alpha: base[0],
        gamma_p: base[1],
        gamma_y: base[2],
        f_prime: base[3],
        psi_p: base[4],
        psi_t: base[5],
        psi_y: base[6],
        theta_p_rho: base[7],
        theta_p_w: base[8],
        theta_h_k: None,
        ses: dm.se,
        covariance: dm.covariance,
        kappas_identified: false,
        roots: s.roots,
    })
}
