use serde::Serialize;

use super::alpha::AlphaEstimate;
use super::fit::{alpha_from_data, fit_prepared, FitControl};
use super::params::{ModelKind, ReducedFormEstimates};
use super::prepare::{StructuralData, StructuralSpec};
use super::structural::{
    lr_from_logliks, recover_sharing_rule, reservation_from_estimates, LrTest, ReservationWage, StructuralParams,
};
use crate::data::Dataset;
use crate::stats::quadrature::gauss_hermite;

#[derive(Debug, Clone)]
pub struct BatteryOptions {
    pub spec: StructuralSpec,
    /// Restricted models to fit against the unrestricted one.
    pub restricted: Vec<ModelKind>,
    /// Test size for the verdict.
    pub level: f64,
    /// Attempts to repair a restricted loglik above the unrestricted one.
    pub max_refits: usize,
}

impl Default for BatteryOptions {
    fn default() -> Self {
        BatteryOptions {
            spec: StructuralSpec::default(),
            restricted: vec![ModelKind::Unitary, ModelKind::Collective],
            level: 0.05,
            max_refits: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Unitary rejected, collective retained: the teen is a decision-maker.
    TeenDecisionMaker,
    /// Neither rejected; income pooling cannot be ruled out.
    UnitaryNotRejected,
    BothRejected,
    /// Collective rejected while unitary is retained.
    CollectiveRejected,
    /// A fit or test failed, or a test was not run.
    Incomplete,
}

impl Verdict {
    pub fn describe(self) -> &'static str {
        match self {
            Verdict::TeenDecisionMaker => {
                "unitary rejected, collective not rejected: the teen is a decision-maker in the household"
            }
            Verdict::UnitaryNotRejected => "unitary not rejected: income pooling cannot be ruled out",
            Verdict::BothRejected => "unitary and collective restrictions both rejected",
            Verdict::CollectiveRejected => "collective rejected while unitary is not rejected",
            Verdict::Incomplete => "incomplete: the verdict needs both restriction tests and at least one was not run or did not finish",
        }
    }
}

/// Everything the battery produced for one sample. Failures are recorded,
/// not raised.
#[derive(Debug, Clone, Serialize)]
pub struct BatteryReport {
    pub label: String,
    pub n: usize,
    pub level: f64,
    pub alpha: Option<AlphaEstimate>,
    pub fits: Vec<ReducedFormEstimates>,
    pub unitary_lr: Option<LrTest>,
    pub collective_lr: Option<LrTest>,
    pub reservation: Vec<(ModelKind, ReservationWage)>,
    pub sharing: Option<StructuralParams>,
    pub verdict: Verdict,
    pub failures: Vec<String>,
    pub notes: Vec<String>,
}

impl BatteryReport {
    pub fn fit(&self, kind: ModelKind) -> Option<&ReducedFormEstimates> {
        self.fits.iter().find(|f| f.kind == kind)
    }

    pub fn lr(&self, kind: ModelKind) -> Option<LrTest> {
        match kind {
            ModelKind::Unitary => self.unitary_lr,
            ModelKind::Collective => self.collective_lr,
            ModelKind::Unrestricted => None,
        }
    }

    fn empty(label: &str, n: usize, level: f64) -> Self {
        BatteryReport {
            label: label.to_string(),
            n,
            level,
            alpha: None,
            fits: Vec::new(),
            unitary_lr: None,
            collective_lr: None,
            reservation: Vec::new(),
            sharing: None,
            verdict: Verdict::Incomplete,
            failures: Vec::new(),
            notes: Vec::new(),
        }
    }
}

/// Fit all models, run the LR tests, reservation wages and (if the
/// collective model survives) sharing-rule recovery.
pub fn test_battery(d: &Dataset, label: &str, opts: &BatteryOptions) -> BatteryReport {
    match StructuralData::from_dataset(d, &opts.spec) {
        Ok(data) => test_battery_prepared(&data, label, opts),
        Err(e) => {
            let mut r = BatteryReport::empty(label, d.len(), opts.level);
            r.failures.push(format!("prepare: {e}"));
            r
        }
    }
}

pub fn test_battery_prepared(data: &StructuralData, label: &str, opts: &BatteryOptions) -> BatteryReport {
    let mut rep = BatteryReport::empty(label, data.n, opts.level);
    let gh = match gauss_hermite(opts.spec.nodes) {
        Ok(g) => g,
        Err(e) => {
            rep.failures.push(format!("quadrature: {e}"));
            return rep;
        }
    };
    match alpha_from_data(data) {
        Ok(a) => rep.alpha = Some(a),
        Err(e) => rep.failures.push(format!("alpha: {e}")),
    }

    let fit = |kind, start: Option<&[f64]>| {
        let control = FitControl {
            start: start.map(<[f64]>::to_vec),
            ..FitControl::default()
        };
        fit_prepared(data, &gh, kind, &opts.spec, &control)
    };
    let mut unres = match fit(ModelKind::Unrestricted, None) {
        Ok(u) => u,
        Err(e) => {
            rep.failures.push(format!("unrestricted fit: {e}"));
            return rep;
        }
    };
    // The likelihood has several modes in the factor block, so each
    // restricted model is started both from the default values and from the
    // unrestricted optimum, and the better optimum is kept.
    let mut restricted: Vec<ReducedFormEstimates> = Vec::new();
    for &kind in &opts.restricted {
        let tries = [fit(kind, None), fit(kind, Some(&unres.theta))];
        let mut errors = Vec::new();
        let mut best: Option<ReducedFormEstimates> = None;
        for t in tries {
            match t {
                Ok(r) if best.as_ref().is_none_or(|b| r.loglik > b.loglik) => best = Some(r),
                Ok(_) => {}
                Err(e) => errors.push(e.to_string()),
            }
        }
        match best {
            Some(r) => restricted.push(r),
            None => rep.failures.push(format!("{kind} fit: {}", errors.join("; "))),
        }
    }

    // Restart the unrestricted search from every restricted optimum. This
    // also repairs nesting when a restricted optimum lies above the
    // unrestricted one; restricted models are then retried from the new point.
    for round in 0..opts.max_refits {
        let mut improved = false;
        for r in &restricted {
            match fit(ModelKind::Unrestricted, Some(&r.theta)) {
                Ok(u) if u.loglik > unres.loglik + 1e-6 => {
                    rep.notes.push(format!(
                        "refit {}: unrestricted restarted from the {} optimum, loglik {:.6} -> {:.6}",
                        round + 1,
                        r.kind,
                        unres.loglik,
                        u.loglik
                    ));
                    unres = u;
                    improved = true;
                }
                Ok(_) => {}
                Err(e) => rep.failures.push(format!("unrestricted refit: {e}")),
            }
        }
        if !improved {
            break;
        }
        for r in restricted.iter_mut() {
            if let Ok(again) = fit(r.kind, Some(&unres.theta)) {
                if again.loglik > r.loglik {
                    *r = again;
                }
            }
        }
    }
    for r in &restricted {
        match lr_from_logliks(r.loglik, unres.loglik, r.kind.restrictions()) {
            Ok(t) if r.kind == ModelKind::Unitary => rep.unitary_lr = Some(t),
            Ok(t) => rep.collective_lr = Some(t),
            Err(e) => rep.failures.push(format!("{} LR test: {e}", r.kind)),
        }
    }
    rep.fits.push(unres);
    rep.fits.extend(restricted);
    for f in &rep.fits {
        for w in &f.warnings {
            rep.notes.push(format!("{}: {w}", f.kind));
        }
        match reservation_from_estimates(f) {
            Ok(r) => rep.reservation.push((f.kind, r)),
            Err(e) => rep.failures.push(format!("{} reservation wage: {e}", f.kind)),
        }
    }

    if let (Some(t), Some(c), Some(a)) = (rep.collective_lr, rep.fit(ModelKind::Collective), rep.alpha.as_ref()) {
        if t.p >= opts.level {
            match recover_sharing_rule(c, a) {
                Ok(s) => rep.sharing = Some(s),
                Err(e) => rep.failures.push(format!("sharing rule: {e}")),
            }
        }
    }
    rep.verdict = verdict(rep.unitary_lr, rep.collective_lr, opts.level);
    rep
}

/// The decision table: unitary rejected and collective retained means the
/// teen has a say.
pub fn verdict(unitary: Option<LrTest>, collective: Option<LrTest>, level: f64) -> Verdict {
    let (Some(u), Some(c)) = (unitary, collective) else {
        return Verdict::Incomplete;
    };
    match (u.p < level, c.p < level) {
        (true, false) => Verdict::TeenDecisionMaker,
        (false, false) => Verdict::UnitaryNotRejected,
        (true, true) => Verdict::BothRejected,
        (false, true) => Verdict::CollectiveRejected,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(p: f64) -> Option<LrTest> {
        Some(LrTest { stat: 0.0, df: 2, p })
    }

    #[test]
    fn decision_table() {
        assert_eq!(verdict(t(0.00003), t(0.53), 0.05), Verdict::TeenDecisionMaker);
        assert_eq!(verdict(t(0.002), t(0.03), 0.05), Verdict::BothRejected);
        assert_eq!(verdict(t(0.4), t(0.6), 0.05), Verdict::UnitaryNotRejected);
        assert_eq!(verdict(None, t(0.6), 0.05), Verdict::Incomplete);
    }
}
