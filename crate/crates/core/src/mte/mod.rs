//! Marginal treatment effects by the separate approach.

mod propensity;
mod separate;
mod support;

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use propensity::{estimate_propensity, write_first_stage, PropensityFit, PropensitySpec, FIRST_STAGE_HEADER};
pub use separate::{mte_separate, outcome_value, parametric_unobserved, MteCurve, MteFits, MteMethod, MteSpec};
pub use support::{common_support, support_grid, Support, CELL};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::output::{num, write_figure_with, write_table, Band, LinePlot, Series};
use crate::stats::bootstrap::{bootstrap, BootstrapResult};
use crate::stats::normal::chi2_sf;

/// Grid points used by the bootstrap test of a flat semiparametric curve.
pub const FLATNESS_POINTS: usize = 5;

/// Bootstrap settings for the MTE bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MteBootstrap {
    pub replications: usize,
    pub seed: u64,
}

impl Default for MteBootstrap {
    fn default() -> Self {
        MteBootstrap {
            replications: 250,
            seed: 7,
        }
    }
}

/// Everything one bootstrapped MTE estimation produced.
#[derive(Debug, Clone)]
pub struct MteRun {
    pub propensity: PropensityFit,
    pub curve: MteCurve,
    pub fits: MteFits,
    pub boot: BootstrapResult,
}

/// Separate-approach MTE with bands from a bootstrap that re-estimates the
/// propensity score in every replication. Support and grid stay at their
/// full-sample values; resampled units outside the support are dropped.
pub fn mte_bootstrap(
    d: &Dataset,
    pspec: &PropensitySpec,
    spec: &MteSpec,
    boot: &MteBootstrap,
) -> Result<MteRun> {
    let fit = estimate_propensity(d, pspec)?;
    let treated: Vec<bool> = d.records().iter().map(|r| r.treated).collect();
    let sup = common_support(&fit.scores, &treated)?;
    let (mut curve, fits) = mte_separate(d, &fit, spec, &sup, None)?;
    let grid = curve.u_grid.clone();
    let full = curve.mte.clone();
    let res = bootstrap(d.len(), boot.replications, boot.seed, |idx| {
        if idx.iter().enumerate().all(|(i, &j)| i == j) {
            return Ok(full.clone());
        }
        let rd = d.resample(idx);
        let rf = estimate_propensity(&rd, pspec)?;
        Ok(mte_separate(&rd, &rf, spec, &sup, Some(&grid))?.0.mte)
    })?;
    curve.se = res.se.clone();
    curve.lo = res.lo.clone();
    curve.hi = res.hi.clone();
    Ok(MteRun {
        propensity: fit,
        curve,
        fits,
        boot: res,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HeterogeneityTests {
    pub observable_stat: f64,
    pub observable_df: usize,
    pub p_observable: f64,
    pub unobservable_stat: f64,
    pub unobservable_df: usize,
    pub p_unobservable: f64,
}

/// Coefficients of u^1..u^d in the unobserved part of a degree-d
/// parametric MTE, as a linear map of (κ₁, κ₀).
fn unobserved_slope_map(d: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut a1 = DMatrix::zeros(d, d + 1);
    let mut a0 = DMatrix::zeros(d, d + 1);
    for j in 1..=d {
        let c = (j + 1) as f64;
        a1[(j - 1, j)] = c;
        a0[(j - 1, j)] = -c;
        if j < d {
            a0[(j - 1, j + 1)] = c;
        }
    }
    (a1, a0)
}

/// Wald test that the curve takes equal values at `points` evenly spaced
/// defined grid points, with the covariance of the differences taken from
/// the bootstrap draws. Returns (statistic, df = points − 1).
fn bootstrap_flatness(curve: &MteCurve, boot: &BootstrapResult, points: usize) -> Result<(f64, usize)> {
    let defined: Vec<usize> = (0..curve.mte.len()).filter(|&i| curve.mte[i].is_finite()).collect();
    if defined.len() < points {
        return Err(Error::SingularWald(format!("only {} defined grid points", defined.len())));
    }
    let pick: Vec<usize> = (0..points).map(|i| defined[i * (defined.len() - 1) / (points - 1)]).collect();
    let m = points - 1;
    let diff = |v: &[f64]| DVector::from_iterator(m, pick[1..].iter().map(|&i| v[i] - v[pick[0]]));
    let draws: Vec<DVector<f64>> = boot
        .draws
        .iter()
        .map(|d| diff(d))
        .filter(|v| v.iter().all(|x| x.is_finite()))
        .collect();
    if draws.len() < m + 1 {
        return Err(Error::SingularWald(format!("{} usable bootstrap draws", draws.len())));
    }
    let nb = draws.len() as f64;
    let mean = draws.iter().fold(DVector::zeros(m), |a, d| a + d) / nb;
    let mut v = DMatrix::zeros(m, m);
    for d in &draws {
        let c = d - &mean;
        v += &c * c.transpose();
    }
    v /= nb - 1.0;
    Ok((separate::wald(&diff(&curve.mte), &v)?, m))
}

/// Observable test: Wald on β₁ − β₀. Unobservable test: Wald on bootstrap
/// differences of the curve between evenly spaced grid points (d + 1 points
/// for the degree-d parametric curve, `FLATNESS_POINTS` for the
/// semiparametric one). The bootstrap re-estimates the propensity score, so
/// first-stage error is included. Without `boot` the parametric curve falls
/// back to an analytic Wald on its u-power terms, which treats p̂ as known
/// and over-rejects somewhat; the semiparametric test then fails.
pub fn heterogeneity_tests(
    curve: &MteCurve,
    fits: &MteFits,
    boot: Option<&BootstrapResult>,
) -> Result<HeterogeneityTests> {
    let k = fits.beta1.len();
    let (obs_stat, p_obs) = if k == 0 {
        (f64::NAN, f64::NAN)
    } else {
        let r = DVector::from_iterator(k, fits.beta1.iter().zip(&fits.beta0).map(|(a, b)| a - b));
        let s = separate::wald(&r, &(&fits.cov_beta1 + &fits.cov_beta0))?;
        (s, chi2_sf(s, k as f64))
    };
    let (un_stat, un_df) = match (fits.method, boot) {
        (MteMethod::ParametricDeg1, Some(b)) => bootstrap_flatness(curve, b, fits.kappa1.len())?,
        (MteMethod::ParametricDeg1, None) => {
            let d = fits.kappa1.len() - 1;
            let (a1, a0) = unobserved_slope_map(d);
            let k1 = DVector::from_column_slice(&fits.kappa1);
            let k0 = DVector::from_column_slice(&fits.kappa0);
            let r = &a1 * k1 + &a0 * k0;
            let v = &a1 * &fits.cov_kappa1 * a1.transpose() + &a0 * &fits.cov_kappa0 * a0.transpose();
            (separate::wald(&r, &v)?, d)
        }
        (MteMethod::SemiparametricDeg2, Some(b)) => bootstrap_flatness(curve, b, FLATNESS_POINTS)?,
        (MteMethod::SemiparametricDeg2, None) => {
            return Err(Error::Prerequisite(
                "the semiparametric flatness test needs bootstrap draws".into(),
            ))
        }
    };
    Ok(HeterogeneityTests {
        observable_stat: obs_stat,
        observable_df: k,
        p_observable: p_obs,
        unobservable_stat: un_stat,
        unobservable_df: un_df,
        p_unobservable: chi2_sf(un_stat, un_df as f64),
    })
}

pub const CURVE_HEADER: [&str; 5] = ["u", "mte", "se", "lo", "hi"];
pub const TESTS_HEADER: [&str; 4] = ["test", "statistic", "df", "p_value"];

pub fn curve_rows(c: &MteCurve) -> Vec<Vec<String>> {
    (0..c.u_grid.len())
        .map(|i| vec![num(c.u_grid[i]), num(c.mte[i]), num(c.se[i]), num(c.lo[i]), num(c.hi[i])])
        .collect()
}

pub fn curve_plot(c: &MteCurve) -> LinePlot {
    let band = c.lo.iter().any(|v| v.is_finite()).then(|| Band {
        name: "95% band".into(),
        x: c.u_grid.clone(),
        lo: c.lo.clone(),
        hi: c.hi.clone(),
    });
    LinePlot {
        title: format!("MTE of {} ({})", c.outcome, c.method.as_str()),
        x_label: "resistance quantile u".into(),
        y_label: "treatment effect".into(),
        series: vec![Series {
            name: "mte".into(),
            x: c.u_grid.clone(),
            y: c.mte.clone(),
        }],
        band,
    }
}

/// Writes `mte_curve.csv` with `mte_curve.svg`, and `mte_tests.csv`.
pub fn write_mte_outputs(dir: &Path, c: &MteCurve, tests: Option<&HeterogeneityTests>) -> Result<()> {
    write_figure_with(&dir.join("mte_curve.svg"), &curve_plot(c), &CURVE_HEADER, &curve_rows(c))?;
    let mut rows = vec![
        vec!["support_lo".into(), num(c.support.lo), String::new(), String::new()],
        vec!["support_hi".into(), num(c.support.hi), String::new(), String::new()],
        vec!["support_share".into(), num(c.support.share), String::new(), String::new()],
        vec!["n_used".into(), num(c.n_used as f64), String::new(), String::new()],
        vec![
            "slope_in_normal_quantile".into(),
            num(c.slope_in_normal_quantile()),
            String::new(),
            String::new(),
        ],
    ];
    for (name, d) in &c.observed_part {
        rows.push(vec![format!("observed_part:{name}"), num(*d), String::new(), String::new()]);
    }
    if let Some(t) = tests {
        rows.push(vec![
            "observable".into(),
            num(t.observable_stat),
            num(t.observable_df as f64),
            num(t.p_observable),
        ]);
        rows.push(vec![
            "unobservable".into(),
            num(t.unobservable_stat),
            num(t.unobservable_df as f64),
            num(t.p_unobservable),
        ]);
    }
    write_table(dir.join("mte_tests.csv"), &TESTS_HEADER, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::{generate, SimConfig, TruthKind};

    fn scenario(n: usize, seed: u64, rho0: f64, rho1: f64) -> Dataset {
        let mut cfg = SimConfig {
            n,
            seed,
            truth: TruthKind::MteScenario,
            ..SimConfig::default()
        };
        cfg.mte.rho0 = rho0;
        cfg.mte.rho1 = rho1;
        generate(&cfg).unwrap().0
    }

    fn specs() -> (PropensitySpec, MteSpec) {
        (
            PropensitySpec {
                covariates: vec!["x1".into()],
                instrument: "instrument".into(),
            },
            MteSpec {
                outcome: "outcome".into(),
                covariates: vec!["x1".into()],
                ..MteSpec::default()
            },
        )
    }

    fn curve(d: &Dataset, spec: &MteSpec) -> (PropensityFit, Support, MteCurve, MteFits) {
        let (ps, _) = specs();
        let f = estimate_propensity(d, &ps).unwrap();
        let t: Vec<bool> = d.records().iter().map(|r| r.treated).collect();
        let s = common_support(&f.scores, &t).unwrap();
        let (c, fits) = mte_separate(d, &f, spec, &s, None).unwrap();
        (f, s, c, fits)
    }

    #[test]
    fn parametric_curve_matches_derivative_formula() {
        let d = scenario(4000, 1, -0.25, 0.25);
        let (_, spec) = specs();
        let (_, _, c, fits) = curve(&d, &spec);
        let obs: f64 = c.xbar.iter().zip(&c.observed_part).map(|(x, o)| x.1 * o.1).sum();
        for (u, m) in c.u_grid.iter().zip(&c.mte) {
            // κ₁₀ + 2κ₁₁u − κ₀₀ + κ₀₁(1 − 2u)
            let (k1, k0) = (&fits.kappa1, &fits.kappa0);
            let want = obs + k1[0] + 2.0 * k1[1] * u - k0[0] + k0[1] * (1.0 - 2.0 * u);
            assert!((m - want).abs() < 1e-10);
        }
        assert!(c.u_grid.iter().all(|&u| c.support.contains(u)));
    }

    #[test]
    fn constant_k_gives_observed_part_only() {
        let obs = 0.37;
        for u in [0.1, 0.5, 0.9] {
            let v = obs + parametric_unobserved(&[1.3], &[0.4], u);
            assert!((v - (obs + 1.3 - 0.4)).abs() < 1e-15);
        }
        // level shifts in K cancel only between arms, slopes never enter
        assert_eq!(parametric_unobserved(&[0.0, 0.0], &[0.0, 0.0], 0.3), 0.0);
    }

    #[test]
    fn slope_map_matches_direct_derivative() {
        let k1 = [0.3, -1.1, 0.7];
        let k0 = [0.2, 0.5, -0.4];
        let (a1, a0) = unobserved_slope_map(2);
        let r = &a1 * DVector::from_column_slice(&k1) + &a0 * DVector::from_column_slice(&k0);
        let c = parametric_unobserved(&k1, &k0, 0.0);
        for u in [0.15, 0.5, 0.8] {
            let direct = parametric_unobserved(&k1, &k0, u);
            assert!((direct - (c + r[0] * u + r[1] * u * u)).abs() < 1e-12);
        }
    }

    #[test]
    fn affine_instrument_rescaling_is_invisible() {
        let d = scenario(3000, 4, -0.25, 0.25);
        let (_, spec) = specs();
        let (f, s, c, _) = curve(&d, &spec);
        let shifted = d
            .map_records(|r| r.instrument = 0.9 - 0.6 * r.instrument)
            .unwrap();
        let (f2, s2, c2, _) = curve(&shifted, &spec);
        for (a, b) in f.scores.iter().zip(&f2.scores) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!((s.lo - s2.lo).abs() < 1e-8 && (s.hi - s2.hi).abs() < 1e-8);
        assert_eq!(c.u_grid, c2.u_grid);
        for (a, b) in c.mte.iter().zip(&c2.mte) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn flat_truth_is_flat_within_two_se() {
        let d = scenario(20_000, 5, -0.25, -0.25);
        let (ps, spec) = specs();
        let MteRun {
            curve: c, fits, boot, ..
        } = mte_bootstrap(
            &d,
            &ps,
            &spec,
            &MteBootstrap {
                replications: 50,
                seed: 3,
            },
        )
        .unwrap();
        let xbar = c.xbar[0].1;
        let ate = 1.0 + 0.3 * xbar;
        for (m, se) in c.mte.iter().zip(&c.se) {
            assert!((m - ate).abs() < 2.0 * se.max(1e-9) + 0.05, "{m} vs {ate} (se {se})");
        }
        let t = heterogeneity_tests(&c, &fits, Some(&boot)).unwrap();
        assert!(t.p_observable < 0.01, "β₁ ≠ β₀ in this design");
    }

    #[test]
    fn steep_truth_rejects_flatness() {
        let d = scenario(10_000, 6, -0.5, 0.5);
        let (_, spec) = specs();
        let (_, _, c, fits) = curve(&d, &spec);
        let t = heterogeneity_tests(&c, &fits, None).unwrap();
        assert!(t.p_unobservable < 0.01);
        assert!((c.slope_in_normal_quantile() - 1.0).abs() < 0.25);
    }

    #[test]
    fn semiparametric_tracks_normal_selection() {
        let d = scenario(20_000, 8, -0.25, 0.25);
        let (ps, mut spec) = specs();
        spec.method = MteMethod::SemiparametricDeg2;
        spec.grid_step = 0.05;
        // derivative estimates need more smoothing than the density rule gives
        spec.bandwidth = Some(0.2);
        let MteRun {
            curve: c, fits, boot, ..
        } = mte_bootstrap(
            &d,
            &ps,
            &spec,
            &MteBootstrap {
                replications: 20,
                seed: 1,
            },
        )
        .unwrap();
        let xbar = c.xbar[0].1;
        let mut checked = 0;
        for (&u, &m) in c.u_grid.iter().zip(&c.mte) {
            if (0.2..=0.8).contains(&u) {
                let want = 1.0 + 0.3 * xbar + 0.5 * crate::stats::normal::quantile(u);
                assert!((m - want).abs() < 0.25, "u {u}: {m} vs {want}");
                checked += 1;
            }
        }
        assert!(checked > 5);
        let t = heterogeneity_tests(&c, &fits, Some(&boot)).unwrap();
        assert_eq!(t.unobservable_df, FLATNESS_POINTS - 1);
    }

    #[test]
    fn two_replications_are_legal_and_seeded() {
        let d = scenario(1500, 9, -0.25, 0.25);
        let (ps, spec) = specs();
        let b = MteBootstrap {
            replications: 2,
            seed: 11,
        };
        let c1 = mte_bootstrap(&d, &ps, &spec, &b).unwrap().curve;
        let c2 = mte_bootstrap(&d, &ps, &spec, &b).unwrap().curve;
        assert_eq!(c1.se.len(), c1.u_grid.len());
        assert_eq!(format!("{:?}", c1.lo), format!("{:?}", c2.lo));
    }

    #[test]
    fn constant_instrument_is_a_rank_error() {
        let d = scenario(500, 2, 0.0, 0.0).map_records(|r| r.instrument = 1.0).unwrap();
        let (ps, _) = specs();
        assert!(matches!(estimate_propensity(&d, &ps), Err(Error::SingularDesign(_))));
    }
}
