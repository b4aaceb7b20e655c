use serde::Serialize;

use crate::error::{Error, Result};

/// Cell width used to trim the overlap.
pub const CELL: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Support {
    pub lo: f64,
    pub hi: f64,
    /// Share of all units whose score lies in [lo, hi].
    pub share: f64,
}

impl Support {
    pub fn contains(&self, p: f64) -> bool {
        p >= self.lo && p <= self.hi
    }
}

/// Overlap of treated and untreated score ranges, trimmed to the 0.01 cells
/// that contain both groups.
pub fn common_support(scores: &[f64], treated: &[bool]) -> Result<Support> {
    if scores.len() != treated.len() {
        return Err(Error::InvalidInput(format!(
            "{} scores for {} treatment indicators",
            scores.len(),
            treated.len()
        )));
    }
    let range = |want: bool| {
        scores
            .iter()
            .zip(treated)
            .filter(|(_, &t)| t == want)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (&p, _)| (lo.min(p), hi.max(p)))
    };
    let (t_lo, t_hi) = range(true);
    let (u_lo, u_hi) = range(false);
    if !t_lo.is_finite() || !u_lo.is_finite() {
        return Err(Error::NoSupport("one treatment arm is empty".into()));
    }
    let (lo, hi) = (t_lo.max(u_lo), t_hi.min(u_hi));
    if lo > hi {
        return Err(Error::NoSupport(format!(
            "treated scores [{t_lo:.4}, {t_hi:.4}] and untreated [{u_lo:.4}, {u_hi:.4}] do not overlap"
        )));
    }
    let cells = (1.0 / CELL).round() as usize;
    let cell_of = |p: f64| ((p / CELL).floor() as usize).min(cells - 1);
    let mut has = vec![[false; 2]; cells];
    for (&p, &t) in scores.iter().zip(treated) {
        has[cell_of(p)][t as usize] = true;
    }
    let both = |c: usize| has[c][0] && has[c][1];
    let (first, last) = (cell_of(lo), cell_of(hi));
    let Some(a) = (first..=last).find(|&c| both(c)) else {
        return Err(Error::NoSupport("no 0.01 cell holds both treated and untreated units".into()));
    };
    let b = (first..=last).rev().find(|&c| both(c)).unwrap();
    let lo = lo.max(a as f64 * CELL);
    let hi = hi.min((b + 1) as f64 * CELL);
    let share = scores.iter().filter(|&&p| p >= lo && p <= hi).count() as f64 / scores.len() as f64;
    Ok(Support { lo, hi, share })
}

/// Grid points k·step inside the support.
pub fn support_grid(s: &Support, step: f64) -> Vec<f64> {
    let first = (s.lo / step).ceil() as i64;
    let last = (s.hi / step).floor() as i64;
    (first..=last)
        .map(|k| k as f64 * step)
        .filter(|u| *u > 0.0 && *u < 1.0)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_arms_keep_full_range() {
        let p: Vec<f64> = (0..200).map(|i| 0.1 + 0.8 * (i / 2) as f64 / 99.0).collect();
        let t: Vec<bool> = (0..200).map(|i| i % 2 == 0).collect();
        let s = common_support(&p, &t).unwrap();
        assert_eq!((s.lo, s.hi, s.share), (0.1, 0.9, 1.0));
    }

    #[test]
    fn disjoint_ranges_are_an_error() {
        let p = [0.1, 0.2, 0.7, 0.8];
        let t = [false, false, true, true];
        assert!(matches!(common_support(&p, &t), Err(Error::NoSupport(_))));
    }

    #[test]
    fn interval_intersection() {
        let mut p = Vec::new();
        let mut t = Vec::new();
        for i in 0..=400 {
            p.push(0.5 + 0.4 * i as f64 / 400.0);
            t.push(true);
            p.push(0.1 + 0.5 * i as f64 / 400.0);
            t.push(false);
        }
        let s = common_support(&p, &t).unwrap();
        assert!(s.lo >= 0.5 && s.hi <= 0.6, "{s:?}");
    }
}
