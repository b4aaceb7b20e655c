use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use super::params::*;
use super::prepare::StructuralData;
use crate::stats::normal::{ln_cdf_and_mills, LN_SQRT_2PI};
use crate::stats::optimize::Objective;
use crate::stats::quadrature::GaussHermite;

const CHUNK: usize = 256;

/// Parameter values unpacked once per likelihood evaluation.
struct Unpacked<'a> {
    theta: &'a [f64],
    k: usize,
    sig: [f64; 3],
    sig_eta: f64,
    chi_s: f64,
    chi_t: f64,
    chi_h: f64,
}

impl<'a> Unpacked<'a> {
    fn new(theta: &'a [f64], k: usize) -> Self {
        Unpacked {
            theta,
            k,
            sig: [theta[LN_SIG_W].exp(), theta[LN_SIG_S].exp(), theta[LN_SIG_H].exp()],
            sig_eta: theta[LN_SIG_ETA].exp(),
            chi_s: theta[CHI_S],
            chi_t: theta[CHI_T],
            chi_h: theta[CHI_H],
        }
    }

    fn beta(&self, block: usize) -> &[f64] {
        let s = N_CORE + block * self.k;
        &self.theta[s..s + self.k]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Log of household i's likelihood contribution; adds ∂/∂θ (full layout)
/// into `grad` when given.
fn contribution(
    p: &Unpacked,
    data: &StructuralData,
    i: usize,
    gh: &GaussHermite,
    grad: Option<&mut [f64]>,
) -> f64 {
    let th = p.theta;
    let x = data.row(i);
    let school = data.school[i];
    let (ln_wp, wt, ln_wt, y) = (data.ln_wp[i], data.wt[i], data.ln_wt[i], data.y[i]);

    // regime equation
    let (c0, block, sig_r, chi_r) = if school {
        (AP_STAR_S, 1, p.sig[1], p.chi_s)
    } else {
        (AP_STAR, 0, p.sig[0], 1.0)
    };
    let mu = th[c0] * ln_wp + th[c0 + 1] * wt + th[c0 + 2] * y + th[DELTA] * ln_wt + dot(x, p.beta(block));
    let resid_m = data.m[i] - mu;

    // schooling index (untreated only)
    let use_index = !data.treated[i];
    let sgn = if school { 1.0 } else { -1.0 };
    let q = if use_index {
        dot(x, p.beta(2)) + th[BT] * wt + th[BP] * ln_wp + th[BY] * y
    } else {
        0.0
    };

    let home = data.r[i].map(|r| r - th[HOME_C]);

    let nodes = gh.len();
    let mut ell = [0.0f64; 64];
    let mut em = [0.0f64; 64];
    let mut di = [0.0f64; 64];
    let mut eh = [0.0f64; 64];
    let ln_norm_m = -sig_r.ln() - LN_SQRT_2PI;
    let ln_norm_h = -p.sig[2].ln() - LN_SQRT_2PI;
    let mut max = f64::NEG_INFINITY;
    for kk in 0..nodes {
        let eta = p.sig_eta * gh.nodes[kk];
        let e = (resid_m - chi_r * eta) / sig_r;
        em[kk] = e;
        let mut l = ln_norm_m - 0.5 * e * e;
        if use_index {
            let (lc, mills) = ln_cdf_and_mills(sgn * (q + p.chi_t * eta));
            l += lc;
            di[kk] = sgn * mills;
        }
        if let Some(h) = home {
            let e = (h - p.chi_h * eta) / p.sig[2];
            eh[kk] = e;
            l += ln_norm_h - 0.5 * e * e;
        }
        ell[kk] = l;
        if l > max {
            max = l;
        }
    }
    if !max.is_finite() {
        return f64::NEG_INFINITY;
    }
    let mut total = 0.0;
    for kk in 0..nodes {
        ell[kk] = gh.weights[kk] * (ell[kk] - max).exp();
        total += ell[kk];
    }
    let value = max + total.ln();

    if let Some(g) = grad {
        // posterior node weights are ell[kk] / total
        let (mut g_m, mut g_sm, mut g_chir) = (0.0, 0.0, 0.0);
        let (mut g_i, mut g_chit) = (0.0, 0.0);
        let (mut g_h, mut g_sh, mut g_chih) = (0.0, 0.0, 0.0);
        let mut g_eta = 0.0;
        for kk in 0..nodes {
            let w = ell[kk] / total;
            let eta = p.sig_eta * gh.nodes[kk];
            let a = em[kk] / sig_r;
            g_m += w * a;
            g_sm += w * (em[kk] * em[kk] - 1.0);
            g_chir += w * a * eta;
            g_eta += w * a * chi_r * eta;
            if use_index {
                g_i += w * di[kk];
                g_chit += w * di[kk] * eta;
                g_eta += w * di[kk] * p.chi_t * eta;
            }
            if home.is_some() {
                let b = eh[kk] / p.sig[2];
                g_h += w * b;
                g_sh += w * (eh[kk] * eh[kk] - 1.0);
                g_chih += w * b * eta;
                g_eta += w * b * p.chi_h * eta;
            }
        }
        g[c0] += g_m * ln_wp;
        g[c0 + 1] += g_m * wt;
        g[c0 + 2] += g_m * y;
        g[DELTA] += g_m * ln_wt;
        let bs = N_CORE + block * p.k;
        for (j, xj) in x.iter().enumerate() {
            g[bs + j] += g_m * xj;
        }
        if school {
            g[LN_SIG_S] += g_sm;
            g[CHI_S] += g_chir;
        } else {
            g[LN_SIG_W] += g_sm;
        }
        if use_index {
            let bt = N_CORE + 2 * p.k;
            for (j, xj) in x.iter().enumerate() {
                g[bt + j] += g_i * xj;
            }
            g[BT] += g_i * wt;
            g[BP] += g_i * ln_wp;
            g[BY] += g_i * y;
            g[CHI_T] += g_chit;
        }
        if home.is_some() {
            g[HOME_C] += g_h;
            g[LN_SIG_H] += g_sh;
            g[CHI_H] += g_chih;
        }
        g[LN_SIG_ETA] += g_eta;
    }
    value
}

/// Log-likelihood contribution of household `i` under the full parameter
/// vector `theta`, integrating the common factor with `gh`.
pub fn household_loglik(theta: &[f64], data: &StructuralData, i: usize, gh: &GaussHermite) -> f64 {
    contribution(&Unpacked::new(theta, data.k()), data, i, gh, None)
}

/// Summed log-likelihood and full-layout gradient. Chunks are reduced in
/// index order so the result does not depend on the thread count.
pub fn total_loglik(
    theta: &[f64],
    data: &StructuralData,
    gh: &GaussHermite,
    want_grad: bool,
    nonfinite: &AtomicUsize,
) -> (f64, Vec<f64>) {
    let p = Unpacked::new(theta, data.k());
    let dim = theta.len();
    let idx: Vec<usize> = (0..data.n).collect();
    let parts: Vec<(f64, Vec<f64>)> = idx
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = if want_grad { vec![0.0; dim] } else { Vec::new() };
            let mut s = 0.0;
            for &i in chunk {
                let v = contribution(&p, data, i, gh, want_grad.then_some(g.as_mut_slice()));
                if !v.is_finite() {
                    nonfinite.fetch_add(1, Ordering::Relaxed);
                }
                s += v;
            }
            (s, g)
        })
        .collect();
    let mut total = 0.0;
    let mut grad = vec![0.0; if want_grad { dim } else { 0 }];
    for (s, g) in parts {
        total += s;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    (total, grad)
}

/// Likelihood over the free parameters of a restricted model.
pub struct ModelObjective<'a> {
    pub data: &'a StructuralData,
    pub gh: &'a GaussHermite,
    pub kind: ModelKind,
    pub free: Vec<usize>,
    /// Full vector supplying the fixed entries (e.g. the home intercept).
    pub base: Vec<f64>,
    pub nonfinite: AtomicUsize,
}

impl<'a> ModelObjective<'a> {
    pub fn new(
        data: &'a StructuralData,
        gh: &'a GaussHermite,
        kind: ModelKind,
        free: Vec<usize>,
        base: Vec<f64>,
    ) -> Self {
        ModelObjective {
            data,
            gh,
            kind,
            free,
            base,
            nonfinite: AtomicUsize::new(0),
        }
    }

    pub fn expand(&self, free: &[f64]) -> Vec<f64> {
        let mut full = self.base.clone();
        for (&i, &v) in self.free.iter().zip(free) {
            full[i] = v;
        }
        apply_restrictions(self.kind, &mut full);
        full
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&i| full[i]).collect()
    }
}

impl Objective for ModelObjective<'_> {
    fn dim(&self) -> usize {
        self.free.len()
    }

    fn value(&self, theta: &[f64]) -> f64 {
        let full = self.expand(theta);
        let v = total_loglik(&full, self.data, self.gh, false, &self.nonfinite).0;
        if v.is_finite() {
            v
        } else {
            f64::NEG_INFINITY
        }
    }

    fn value_and_gradient(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let full = self.expand(theta);
        let (v, g_full) = total_loglik(&full, self.data, self.gh, true, &self.nonfinite);
        if self.kind == ModelKind::Unrestricted {
            for (gi, &i) in grad.iter_mut().zip(&self.free) {
                *gi = g_full[i];
            }
        } else {
            let jac = restriction_jacobian(self.kind, &full, &self.free);
            for (c, gi) in grad.iter_mut().enumerate() {
                *gi = (0..full.len()).map(|r| jac[(r, c)] * g_full[r]).sum();
            }
        }
        if v.is_finite() {
            v
        } else {
            f64::NEG_INFINITY
        }
    }

    fn has_analytic_gradient(&self) -> bool {
        true
    }
}
