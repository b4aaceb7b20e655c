use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Epanechnikov,
}

impl Kernel {
    pub fn weight(self, t: f64) -> f64 {
        match self {
            Kernel::Epanechnikov => {
                if t.abs() < 1.0 {
                    0.75 * (1.0 - t * t)
                } else {
                    0.0
                }
            }
        }
    }
}

/// Local-polynomial smooth on a grid. Points with too few in-window
/// observations carry `NaN` in `fitted` and `derivative`.
#[derive(Debug, Clone, Serialize)]
pub struct SmoothFit {
    pub grid: Vec<f64>,
    pub fitted: Vec<f64>,
    pub derivative: Vec<f64>,
    pub bandwidth: f64,
    pub kernel: Kernel,
    pub degree: usize,
}

impl SmoothFit {
    pub fn is_defined(&self, i: usize) -> bool {
        self.fitted[i].is_finite()
    }
}

/// Silverman's rule of thumb for the Epanechnikov kernel:
/// 2.34 · min(sd, IQR/1.349) · n^(−1/5).
pub fn silverman_bandwidth(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.349) } else { sd };
    2.34 * spread * n.powf(-0.2)
}

/// Linear-interpolation sample quantile of sorted data.
pub fn quantile_sorted(s: &[f64], q: f64) -> f64 {
    if s.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (pos - lo as f64) * (s[hi] - s[lo])
}

/// Kernel-weighted polynomial regression of `y` on `x` around each grid
/// point. Returns the local intercept (fit) and linear term (derivative).
pub fn local_poly_fit(
    x: &[f64],
    y: &[f64],
    degree: usize,
    bandwidth: f64,
    grid: &[f64],
) -> Result<SmoothFit> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "x has {} entries, y has {}",
            x.len(),
            y.len()
        )));
    }
    if !(1..=3).contains(&degree) {
        return Err(Error::InvalidInput(format!("degree must be 1, 2 or 3, got {degree}")));
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::InvalidInput(format!("bandwidth must be positive, got {bandwidth}")));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("grid must be strictly increasing".into()));
    }
    let kernel = Kernel::Epanechnikov;
    let p = degree + 1;
    let mut fitted = Vec::with_capacity(grid.len());
    let mut derivative = Vec::with_capacity(grid.len());
    for &g in grid {
        let mut xtwx = DMatrix::<f64>::zeros(p, p);
        let mut xtwy = DVector::<f64>::zeros(p);
        let mut used = 0usize;
        let mut powers = vec![0.0; p];
        for (&xi, &yi) in x.iter().zip(y) {
            let d = xi - g;
            let w = kernel.weight(d / bandwidth);
            if w <= 0.0 {
                continue;
            }
            used += 1;
            // centered and scaled powers keep the system well conditioned
            let t = d / bandwidth;
            powers[0] = 1.0;
            for k in 1..p {
                powers[k] = powers[k - 1] * t;
            }
            for a in 0..p {
                xtwy[a] += w * powers[a] * yi;
                for b in 0..=a {
                    xtwx[(a, b)] += w * powers[a] * powers[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                xtwx[(b, a)] = xtwx[(a, b)];
            }
        }
        let solved = if used >= p {
            xtwx.clone().cholesky().map(|c| c.solve(&xtwy))
        } else {
            None
        };
        match solved {
            Some(c) if c.iter().all(|v| v.is_finite()) => {
                fitted.push(c[0]);
                derivative.push(c[1] / bandwidth);
            }
            _ => {
                fitted.push(f64::NAN);
                derivative.push(f64::NAN);
            }
        }
    }
    Ok(SmoothFit {
        grid: grid.to_vec(),
        fitted,
        derivative,
        bandwidth,
        kernel,
        degree,
    })
}
