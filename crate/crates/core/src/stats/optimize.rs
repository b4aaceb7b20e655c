//! BFGS ascent for log-likelihoods, with finite-difference gradients unless
//! the objective supplies its own.

use nalgebra::{DMatrix, DVector};

use super::fit::{spd_inverse, symmetrize, FitResult};
use crate::error::{Error, Result};

/// A scalar function to maximize.
pub trait Objective: Sync {
    fn dim(&self) -> usize;

    fn value(&self, theta: &[f64]) -> f64;

    /// Value plus gradient written into `grad`. Defaults to central differences.
    fn value_and_gradient(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        numeric_gradient(|t| self.value(t), theta, grad);
        self.value(theta)
    }

    /// Whether `value_and_gradient` is exact (changes how the Hessian is formed).
    fn has_analytic_gradient(&self) -> bool {
        false
    }
}

/// Wraps a closure as an [`Objective`] with numeric derivatives.
pub struct FnObjective<F> {
    pub f: F,
    pub dim: usize,
}

impl<F: Fn(&[f64]) -> f64 + Sync> Objective for FnObjective<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, theta: &[f64]) -> f64 {
        (self.f)(theta)
    }
}

#[derive(Debug, Clone)]
pub struct OptimizeOptions {
    pub max_iter: usize,
    /// Stop once the gradient ∞-norm falls below this.
    pub grad_tol: f64,
    /// Or once |Δℓ| / max(|ℓ|, 1) stays below this on two consecutive iterations.
    pub rel_tol: f64,
    /// Seed the inverse-Hessian approximation with a finite-difference Hessian.
    pub initial_hessian: bool,
    /// Compute the inverse observed information at the optimum.
    pub covariance: bool,
    /// Maximum modified-Newton steps after BFGS (exact-gradient objectives only).
    pub newton_polish: usize,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            max_iter: 500,
            grad_tol: 1e-6,
            rel_tol: 1e-10,
            initial_hessian: false,
            covariance: true,
            newton_polish: 8,
        }
    }
}

fn grad_step(x: f64) -> f64 {
    1e-5 * x.abs().max(1.0)
}

fn hess_step(x: f64) -> f64 {
    1e-4 * x.abs().max(1.0)
}

/// Central-difference gradient.
pub fn numeric_gradient(f: impl Fn(&[f64]) -> f64, theta: &[f64], grad: &mut [f64]) {
    let mut t = theta.to_vec();
    for k in 0..theta.len() {
        let h = grad_step(theta[k]);
        t[k] = theta[k] + h;
        let up = f(&t);
        t[k] = theta[k] - h;
        let down = f(&t);
        t[k] = theta[k];
        grad[k] = (up - down) / (2.0 * h);
    }
}

/// Finite-difference Hessian; uses gradient differences when the objective
/// has an exact gradient and second differences of values otherwise.
pub fn numeric_hessian<O: Objective + ?Sized>(obj: &O, theta: &[f64]) -> DMatrix<f64> {
    let p = theta.len();
    let mut hess = DMatrix::zeros(p, p);
    let mut t = theta.to_vec();
    if obj.has_analytic_gradient() {
        let mut gu = vec![0.0; p];
        let mut gd = vec![0.0; p];
        for k in 0..p {
            let h = hess_step(theta[k]);
            t[k] = theta[k] + h;
            obj.value_and_gradient(&t, &mut gu);
            t[k] = theta[k] - h;
            obj.value_and_gradient(&t, &mut gd);
            t[k] = theta[k];
            for j in 0..p {
                hess[(j, k)] = (gu[j] - gd[j]) / (2.0 * h);
            }
        }
    } else {
        let f0 = obj.value(theta);
        let steps: Vec<f64> = theta.iter().map(|&x| hess_step(x)).collect();
        for k in 0..p {
            let hk = steps[k];
            t[k] = theta[k] + hk;
            let up = obj.value(&t);
            t[k] = theta[k] - hk;
            let down = obj.value(&t);
            t[k] = theta[k];
            hess[(k, k)] = (up - 2.0 * f0 + down) / (hk * hk);
            for j in 0..k {
                let hj = steps[j];
                let mut eval = |sj: f64, sk: f64| {
                    t[j] = theta[j] + sj * hj;
                    t[k] = theta[k] + sk * hk;
                    let v = obj.value(&t);
                    t[j] = theta[j];
                    t[k] = theta[k];
                    v
                };
                let v = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0))
                    / (4.0 * hj * hk);
                hess[(j, k)] = v;
                hess[(k, j)] = v;
            }
        }
    }
    symmetrize(&mut hess);
    hess
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Maximize `obj` from `theta0` by BFGS with backtracking line search.
///
/// Running out of iterations returns a result with `converged = false`
/// rather than an error.
pub fn maximize<O: Objective + ?Sized>(
    obj: &O,
    theta0: &[f64],
    names: &[String],
    opts: &OptimizeOptions,
) -> Result<FitResult> {
    let p = obj.dim();
    if theta0.len() != p || names.len() != p {
        return Err(Error::InvalidInput(format!(
            "optimizer dimension mismatch: dim {p}, start {}, names {}",
            theta0.len(),
            names.len()
        )));
    }
    let mut theta = theta0.to_vec();
    let mut grad = vec![0.0; p];
    let mut f = obj.value_and_gradient(&theta, &mut grad);
    if !f.is_finite() {
        return Err(Error::InvalidInput(format!(
            "objective is not finite at the starting point ({f})"
        )));
    }

    let mut h_inv = DMatrix::<f64>::identity(p, p);
    let mut scaled = false;
    if opts.initial_hessian {
        let hess = numeric_hessian(obj, &theta);
        if let Some(inv) = spd_inverse(&(-hess)) {
            h_inv = inv;
            scaled = true;
        }
    }
    if !scaled {
        h_inv /= inf_norm(&grad).max(1.0);
    }

    let mut warnings = Vec::new();
    let mut converged = false;
    let mut small_changes = 0usize;
    let mut iterations = 0usize;
    let mut new_grad = vec![0.0; p];
    let mut trial = vec![0.0; p];

    while iterations < opts.max_iter {
        if inf_norm(&grad) < opts.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;

        let g = DVector::from_column_slice(&grad);
        let mut dir = &h_inv * &g;
        let mut slope = g.dot(&dir);
        if !(slope > 0.0) {
            h_inv = DMatrix::identity(p, p) / inf_norm(&grad).max(1.0);
            scaled = false;
            dir = &h_inv * &g;
            slope = g.dot(&dir);
        }

        // Armijo backtracking
        let mut step = 1.0;
        let mut f_new = f64::NEG_INFINITY;
        let mut accepted = false;
        let analytic = obj.has_analytic_gradient();
        for _ in 0..60 {
            for k in 0..p {
                trial[k] = theta[k] + step * dir[k];
            }
            f_new = if analytic {
                obj.value_and_gradient(&trial, &mut new_grad)
            } else {
                obj.value(&trial)
            };
            if f_new.is_finite() && f_new >= f + 1e-4 * step * slope {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            if scaled || h_inv != DMatrix::identity(p, p) / inf_norm(&grad).max(1.0) {
                h_inv = DMatrix::identity(p, p) / inf_norm(&grad).max(1.0);
                scaled = false;
                continue;
            }
            warnings.push(format!(
                "line search failed at iteration {iterations} (gradient ∞-norm {:.3e})",
                inf_norm(&grad)
            ));
            break;
        }

        if !analytic {
            f_new = obj.value_and_gradient(&trial, &mut new_grad);
        }
        let s = DVector::from_fn(p, |k, _| trial[k] - theta[k]);
        let y = DVector::from_fn(p, |k, _| grad[k] - new_grad[k]);
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if !scaled {
                h_inv = DMatrix::identity(p, p) * (sy / y.dot(&y));
                scaled = true;
            }
            let rho = 1.0 / sy;
            let hy = &h_inv * &y;
            let yhy = y.dot(&hy);
            // H ← H − ρ(s·(Hy)ᵀ + (Hy)·sᵀ) + (ρ²·yᵀHy + ρ)·s·sᵀ
            h_inv -= (&s * hy.transpose() + &hy * s.transpose()) * rho;
            h_inv += (&s * s.transpose()) * (rho * rho * yhy + rho);
            symmetrize(&mut h_inv);
        }

        let rel = (f_new - f).abs() / f.abs().max(1.0);
        theta.copy_from_slice(&trial);
        grad.copy_from_slice(&new_grad);
        f = f_new;
        if rel < opts.rel_tol {
            small_changes += 1;
            if small_changes >= 2 {
                converged = true;
                break;
            }
        } else {
            small_changes = 0;
        }
    }
    if !converged && iterations >= opts.max_iter {
        warnings.push(format!("maximum iterations ({}) reached", opts.max_iter));
    }

    let mut final_hess = None;
    if obj.has_analytic_gradient() && opts.newton_polish > 0 {
        final_hess = polish(obj, &mut theta, &mut f, &mut grad, opts);
        if inf_norm(&grad) < opts.grad_tol && final_hess.is_some() {
            converged = true;
        }
    }

    let covariance = if opts.covariance {
        let hess = final_hess.unwrap_or_else(|| numeric_hessian(obj, &theta));
        match spd_inverse(&(-hess)) {
            Some(c) => c,
            None => {
                warnings.push("observed information not positive definite; covariance unavailable".into());
                DMatrix::from_element(p, p, f64::NAN)
            }
        }
    } else {
        DMatrix::from_element(p, p, f64::NAN)
    };

    Ok(FitResult {
        names: names.to_vec(),
        coefficients: theta,
        covariance,
        loglik: Some(f),
        n: 0,
        converged,
        iterations,
        warnings,
    })
}

/// Modified Newton steps from the BFGS end point. BFGS can stop on a flat
/// stretch where the observed information is not yet positive definite; a
/// few steps on the finite-difference Hessian, with negative curvature
/// flipped, finish the job. Returns the Hessian at the final point when it
/// is negative definite there.
fn polish<O: Objective + ?Sized>(
    obj: &O,
    theta: &mut Vec<f64>,
    f: &mut f64,
    grad: &mut Vec<f64>,
    opts: &OptimizeOptions,
) -> Option<DMatrix<f64>> {
    let p = theta.len();
    let mut trial = vec![0.0; p];
    let mut new_grad = vec![0.0; p];
    for _ in 0..opts.newton_polish {
        let hess = numeric_hessian(obj, theta);
        let info = -&hess;
        let pd = info.clone().cholesky().is_some();
        if pd && inf_norm(grad) < opts.grad_tol {
            return Some(hess);
        }
        let eig = info.symmetric_eigen();
        let top = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-12);
        let floor = 1e-8 * top;
        let g = DVector::from_column_slice(grad);
        let proj = eig.eigenvectors.transpose() * &g;
        let scaled = DVector::from_fn(p, |i, _| proj[i] / eig.eigenvalues[i].abs().max(floor));
        let dir = &eig.eigenvectors * scaled;
        let mut step = 1.0;
        let mut moved = false;
        for _ in 0..30 {
            for k in 0..p {
                trial[k] = theta[k] + step * dir[k];
            }
            let f_new = obj.value_and_gradient(&trial, &mut new_grad);
            if f_new.is_finite() && f_new >= *f {
                theta.copy_from_slice(&trial);
                grad.copy_from_slice(&new_grad);
                *f = f_new;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let hess = numeric_hessian(obj, theta);
    (-&hess).cholesky().is_some().then_some(hess)
}

/// Maximize a plain closure with numeric gradients and Hessian.
pub fn maximize_loglik(
    f: impl Fn(&[f64]) -> f64 + Sync,
    theta0: &[f64],
    names: &[String],
    opts: &OptimizeOptions,
) -> Result<FitResult> {
    let obj = FnObjective {
        f,
        dim: theta0.len(),
    };
    maximize(&obj, theta0, names, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|i| format!("t{i}")).collect()
    }

    #[test]
    fn quadratic_optimum_and_identity_covariance() {
        let c = [1.5, -2.0, 0.25];
        let f = |t: &[f64]| -0.5 * t.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let fit = maximize_loglik(f, &[0.0; 3], &names(3), &OptimizeOptions::default()).unwrap();
        assert!(fit.converged);
        for k in 0..3 {
            assert!((fit.coefficients[k] - c[k]).abs() < 1e-7);
            for j in 0..3 {
                let e = if j == k { 1.0 } else { 0.0 };
                assert!((fit.covariance[(j, k)] - e).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn plateau_terminates() {
        let fit = maximize_loglik(|_| 3.0, &[0.0, 0.0], &names(2), &OptimizeOptions::default()).unwrap();
        assert!(fit.iterations <= 1);
        // flat objective: gradient is exactly zero
        assert!(fit.converged);
    }

    #[test]
    fn iteration_cap_flags_nonconvergence() {
        let f = |t: &[f64]| -(1.0 - t[0]).powi(2) - 100.0 * (t[1] - t[0] * t[0]).powi(2);
        let opts = OptimizeOptions {
            max_iter: 3,
            ..Default::default()
        };
        let fit = maximize_loglik(f, &[-1.2, 1.0], &names(2), &opts).unwrap();
        assert!(!fit.converged);
        assert!(fit.warnings.iter().any(|w| w.contains("maximum iterations")));
    }

    #[test]
    fn rosenbrock_converges() {
        let f = |t: &[f64]| -(1.0 - t[0]).powi(2) - 100.0 * (t[1] - t[0] * t[0]).powi(2);
        let fit = maximize_loglik(f, &[-1.2, 1.0], &names(2), &OptimizeOptions::default()).unwrap();
        assert!(fit.converged);
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-4);
        assert!((fit.coefficients[1] - 1.0).abs() < 1e-4);
    }
}
