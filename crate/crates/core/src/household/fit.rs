use std::sync::atomic::Ordering;

use nalgebra::DMatrix;

use super::alpha::{alpha_from_log_ratios, AlphaEstimate};
use super::likelihood::ModelObjective;
use super::params::*;
use super::prepare::{AlphaMode, StructuralData, StructuralSpec};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::stats::fit::{symmetrize, Design};
use crate::stats::ols::ols_fit;
use crate::stats::optimize::{maximize, OptimizeOptions};
use crate::stats::probit::probit_fit;
use crate::stats::quadrature::{gauss_hermite, GaussHermite};

/// Per-fit switches that are not part of the model specification.
#[derive(Debug, Clone)]
pub struct FitControl {
    /// Full-layout starting vector; OLS/probit starting values when `None`.
    pub start: Option<Vec<f64>>,
    pub covariance: bool,
    /// Seed BFGS with a finite-difference Hessian.
    pub initial_hessian: bool,
}

impl Default for FitControl {
    fn default() -> Self {
        FitControl {
            start: None,
            covariance: true,
            initial_hessian: true,
        }
    }
}

/// α estimated from the prepared log ratios.
pub fn alpha_from_data(data: &StructuralData) -> Result<AlphaEstimate> {
    let r: Vec<f64> = data.r.iter().flatten().copied().collect();
    alpha_from_log_ratios(&r)
}

fn sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt()
}

/// Regime OLS, untreated probit and home mean as starting values.
pub fn starting_values(data: &StructuralData, layout: &Layout) -> Vec<f64> {
    let k = data.k();
    let mut th = vec![0.0; layout.dim()];
    let mut sigmas = [sd(&data.m).max(1e-3); 2];
    let mut deltas = Vec::new();
    for (regime, (c0, block)) in [(AP_STAR, 0usize), (AP_STAR_S, 1usize)].into_iter().enumerate() {
        let rows: Vec<usize> = (0..data.n).filter(|&i| data.school[i] == (regime == 1)).collect();
        let mut names = vec!["ln_wp".to_string(), "wt".into(), "y".into(), "ln_wt".into()];
        names.extend(data.names.iter().cloned());
        let xs: Vec<Vec<f64>> = rows
            .iter()
            .map(|&i| {
                let mut r = vec![data.ln_wp[i], data.wt[i], data.y[i], data.ln_wt[i]];
                r.extend_from_slice(data.row(i));
                r
            })
            .collect();
        let m: Vec<f64> = rows.iter().map(|&i| data.m[i]).collect();
        let fit = Design::from_rows(names, &xs).and_then(|d| ols_fit(&d, &m));
        if let Ok(f) = fit {
            let c = &f.fit.coefficients;
            th[c0] = c[0];
            th[c0 + 1] = c[1];
            th[c0 + 2] = c[2];
            deltas.push(c[3]);
            let bs = N_CORE + block * k;
            th[bs..bs + k].copy_from_slice(&c[4..]);
            sigmas[regime] = f.sigma2.sqrt().max(1e-4);
        } else if !m.is_empty() {
            th[N_CORE + block * k] = m.iter().sum::<f64>() / m.len() as f64;
        }
    }
    if !deltas.is_empty() {
        th[DELTA] = deltas.iter().sum::<f64>() / deltas.len() as f64;
    }

    let untreated: Vec<usize> = (0..data.n).filter(|&i| !data.treated[i]).collect();
    let mut names = data.names.clone();
    names.extend(["wt".to_string(), "ln_wp".into(), "y".into()]);
    let xs: Vec<Vec<f64>> = untreated
        .iter()
        .map(|&i| {
            let mut r = data.row(i).to_vec();
            r.extend([data.wt[i], data.ln_wp[i], data.y[i]]);
            r
        })
        .collect();
    let s: Vec<bool> = untreated.iter().map(|&i| data.school[i]).collect();
    if let Ok(f) = Design::from_rows(names, &xs).and_then(|d| probit_fit(&d, &s)) {
        let c = &f.coefficients;
        let bt = N_CORE + 2 * k;
        th[bt..bt + k].copy_from_slice(&c[..k]);
        th[BT] = c[k];
        th[BP] = c[k + 1];
        th[BY] = c[k + 2];
    }
    if th[BT].abs() < 1e-3 {
        th[BT] = -1e-3;
    }

    let r: Vec<f64> = data.r.iter().flatten().copied().collect();
    if !r.is_empty() {
        th[HOME_C] = r.iter().sum::<f64>() / r.len() as f64;
        th[LN_SIG_H] = sd(&r).max(1e-3).ln();
    }
    let sig_eta = 0.5 * sigmas[0];
    th[LN_SIG_ETA] = sig_eta.ln();
    th[LN_SIG_W] = (sigmas[0] * 0.75f64.sqrt()).ln();
    th[LN_SIG_S] = (sigmas[1] * 0.75f64.sqrt()).ln();
    th[CHI_S] = 0.5;
    th[CHI_T] = 0.1;
    th[CHI_H] = 0.1;
    th
}

/// Prepare, then fit one model kind.
pub fn fit_model(d: &Dataset, kind: ModelKind, spec: &StructuralSpec) -> Result<ReducedFormEstimates> {
    let data = StructuralData::from_dataset(d, spec)?;
    let gh = gauss_hermite(spec.nodes)?;
    fit_prepared(&data, &gh, kind, spec, &FitControl::default())
}

/// Maximize the likelihood of `kind` on prepared data.
pub fn fit_prepared(
    data: &StructuralData,
    gh: &GaussHermite,
    kind: ModelKind,
    spec: &StructuralSpec,
    control: &FitControl,
) -> Result<ReducedFormEstimates> {
    let layout = Layout::new(data.names.clone());
    let home_c_free = spec.alpha_mode == AlphaMode::Joint;
    let mut base = match &control.start {
        Some(s) if s.len() == layout.dim() => s.clone(),
        Some(s) => {
            return Err(Error::InvalidInput(format!(
                "starting vector has {} entries, model needs {}",
                s.len(),
                layout.dim()
            )))
        }
        None => starting_values(data, &layout),
    };
    if !home_c_free {
        if let Ok(a) = alpha_from_data(data) {
            base[HOME_C] = a.c;
        }
    }
    if base[BT].abs() < 1e-6 {
        return Err(Error::SingularFrontier(base[BT].abs()));
    }
    apply_restrictions(kind, &mut base);
    let free = layout.free_indices(kind, home_c_free);
    let obj = ModelObjective::new(data, gh, kind, free.clone(), base);
    let theta0 = obj.restrict(&obj.base);
    let all_names = layout.names();
    let free_names: Vec<String> = free.iter().map(|&i| all_names[i].clone()).collect();
    let opts = OptimizeOptions {
        max_iter: spec.max_iter,
        covariance: control.covariance,
        initial_hessian: control.initial_hessian,
        ..OptimizeOptions::default()
    };
    let fit = maximize(&obj, &theta0, &free_names, &opts)?;
    let full = obj.expand(&fit.coefficients);

    let jac = restriction_jacobian(kind, &full, &free);
    let mut covariance: DMatrix<f64> = &jac * &fit.covariance * jac.transpose();
    symmetrize(&mut covariance);

    let resid = constraint_residual(kind, &full);
    if resid > 1e-8 {
        return Err(Error::Constraint(resid));
    }
    let mut warnings = fit.warnings;
    let bad = obj.nonfinite.load(Ordering::Relaxed);
    if bad > 0 {
        warnings.push(format!("{bad} non-finite household contributions during optimization"));
    }
    if !fit.converged {
        warnings.push(format!("{kind} model did not converge"));
    }
    Ok(ReducedFormEstimates {
        kind,
        names: all_names,
        theta: full,
        covariance,
        loglik: fit.loglik.unwrap_or(f64::NAN),
        n: data.n,
        converged: fit.converged,
        iterations: fit.iterations,
        warnings,
        covariates: data.names.clone(),
        home_c_free,
        nodes: gh.len(),
    })
}
