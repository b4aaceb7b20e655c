//! Standard normal density, distribution function and the ratios built from
//! them, with tail-safe evaluation for probit-type likelihoods.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use statrs::function::erf::erfc;

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
pub fn pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

#[inline]
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// `(ln Φ(x), φ(x)/Φ(x))`, accurate far into the lower tail.
#[inline]
pub fn ln_cdf_and_mills(x: f64) -> (f64, f64) {
    if x > -30.0 {
        let c = cdf(x);
        (c.ln(), pdf(x) / c)
    } else {
        // Asymptotic series: Φ(x) ≈ φ(x)/(-x) · (1 - 1/x² + 3/x⁴ - 15/x⁶)
        let x2 = x * x;
        let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
        let ln_c = -0.5 * x2 - LN_SQRT_2PI - (-x).ln() + series.ln();
        (ln_c, -x / series)
    }
}

#[inline]
pub fn ln_cdf(x: f64) -> f64 {
    ln_cdf_and_mills(x).0
}

/// Inverse Mills ratio λ(x) = φ(x)/Φ(x).
#[inline]
pub fn inverse_mills(x: f64) -> f64 {
    ln_cdf_and_mills(x).1
}

/// Φ⁻¹(p), polished with Newton steps against [`cdf`].
pub fn quantile(p: f64) -> f64 {
    let mut x = Normal::standard().inverse_cdf(p);
    if x.is_finite() {
        for _ in 0..2 {
            let d = pdf(x);
            if d <= 0.0 {
                break;
            }
            x -= (cdf(x) - p) / d;
        }
    }
    x
}

/// Upper-tail probability of a χ² variable with `df` degrees of freedom.
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    ChiSquared::new(df)
        .map(|d| d.sf(x))
        .unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mills_at_zero() {
        assert!((inverse_mills(0.0) - 0.797_884_560_802_865_4).abs() < 1e-14);
    }

    #[test]
    fn tail_branches_join_smoothly() {
        let (a, ma) = ln_cdf_and_mills(-29.999_999);
        let (b, mb) = ln_cdf_and_mills(-30.000_001);
        assert!((a - b).abs() < 1e-4);
        assert!((ma - mb).abs() / ma < 1e-6);
    }

    #[test]
    fn chi2_four_df_closed_form() {
        let x = 26.73_f64;
        let exact = (-x / 2.0).exp() * (1.0 + x / 2.0);
        assert!((chi2_sf(x, 4.0) - exact).abs() < 1e-12);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[0.01, 0.3, 0.5, 0.9] {
            assert!((cdf(quantile(p)) - p).abs() < 1e-12);
        }
    }
}
