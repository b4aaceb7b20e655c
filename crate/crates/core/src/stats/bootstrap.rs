use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::local_poly::quantile_sorted;
use crate::error::{Error, Result};

/// Bootstrap summary, one entry per statistic.
#[derive(Debug, Clone, Serialize)]
pub struct BootstrapResult {
    pub estimate: Vec<f64>,
    pub se: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub replications: usize,
    pub failed: usize,
    /// Successful replicate statistics, in replication order.
    #[serde(skip)]
    pub draws: Vec<Vec<f64>>,
}

/// RNG for replication `rep`: one ChaCha stream per replication index.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Indices of a with-replacement resample of size `n`.
pub fn resample_indices(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Nonparametric bootstrap over `n` units.
///
/// `estimator` receives the resampled unit indices. The full-sample
/// statistic is computed from the identity resample. Output is identical
/// for any thread count.
pub fn bootstrap<F>(n: usize, b: usize, seed: u64, estimator: F) -> Result<BootstrapResult>
where
    F: Fn(&[usize]) -> Result<Vec<f64>> + Sync,
{
    if b < 2 {
        return Err(Error::InvalidInput(format!("bootstrap needs B >= 2, got {b}")));
    }
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let full: Vec<usize> = (0..n).collect();
    let estimate = estimator(&full)?;
    let k = estimate.len();

    let outcomes: Vec<Result<Vec<f64>>> = (0..b)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_rng(seed, rep as u64);
            let idx = resample_indices(&mut rng, n);
            estimator(&idx).and_then(|s| {
                if s.len() != k {
                    Err(Error::InvalidInput(format!(
                        "replication returned {} statistics, expected {k}",
                        s.len()
                    )))
                } else {
                    Ok(s)
                }
            })
        })
        .collect();

    let mut draws = Vec::with_capacity(b);
    let mut failed = 0;
    let mut first = None;
    for (rep, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(s) => draws.push(s),
            Err(e) => {
                failed += 1;
                if first.is_none() {
                    first = Some(format!("replication {rep}: {e}"));
                }
            }
        }
    }
    if failed * 5 > b {
        return Err(Error::Bootstrap {
            failed,
            total: b,
            first: first.unwrap_or_default(),
        });
    }

    let mut se = vec![f64::NAN; k];
    let mut lo = vec![f64::NAN; k];
    let mut hi = vec![f64::NAN; k];
    for j in 0..k {
        let mut col: Vec<f64> = draws.iter().map(|d| d[j]).filter(|v| v.is_finite()).collect();
        if col.len() < 2 {
            continue;
        }
        let m = col.iter().sum::<f64>() / col.len() as f64;
        se[j] = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (col.len() - 1) as f64).sqrt();
        col.sort_by(f64::total_cmp);
        lo[j] = quantile_sorted(&col, 0.025);
        hi[j] = quantile_sorted(&col, 0.975);
    }
    Ok(BootstrapResult {
        estimate,
        se,
        lo,
        hi,
        replications: b,
        failed,
        draws,
    })
}
