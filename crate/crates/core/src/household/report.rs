//! Coefficient tables, covariance files and the markdown verdict.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use super::alpha::{logistic, AlphaEstimate};
use super::battery::{verdict, BatteryReport, Verdict};
use super::params::*;
use super::structural::{
    lr_from_logliks, recover_sharing_rule, reservation_from_estimates, solve_sharing, StructuralParams,
};
use crate::error::{Error, Result};
use crate::output::{num, parse_num, read_table, write_table};

pub const ESTIMATE_HEADER: [&str; 5] = ["parameter", "equation", "variable", "estimate", "se"];

/// (equation, variable) for a full-layout parameter name.
pub fn equation_of(name: &str) -> (&'static str, String) {
    let core = |eq: &'static str, var: &str| (eq, var.to_string());
    match name {
        "Ap_star" => core("work", "ln_parent_wage"),
        "At" => core("work", "teen_wage"),
        "Ay" => core("work", "nonlabor_income"),
        "ap_star" => core("school", "ln_parent_wage"),
        "at" => core("school", "teen_wage"),
        "ay" => core("school", "nonlabor_income"),
        "delta" => core("both", "ln_teen_wage"),
        "bt" => core("schooling_index", "teen_wage"),
        "bp" => core("schooling_index", "ln_parent_wage"),
        "by" => core("schooling_index", "nonlabor_income"),
        "home_c" => core("home", "const"),
        _ => {
            if let Some(c) = name.strip_prefix("beta_w:") {
                core("work", c)
            } else if let Some(c) = name.strip_prefix("beta_s:") {
                core("school", c)
            } else if let Some(c) = name.strip_prefix("beta_t:") {
                core("schooling_index", c)
            } else {
                core("errors", name)
            }
        }
    }
}

/// Coefficient rows followed by fit statistics. With α estimated in a first
/// step, the home intercept row carries that step's SE.
pub fn estimate_rows(est: &ReducedFormEstimates, alpha: Option<&AlphaEstimate>) -> Vec<Vec<String>> {
    let mut rows = Vec::with_capacity(est.theta.len() + 6);
    for (i, name) in est.names.iter().enumerate() {
        let (eq, var) = equation_of(name);
        let se = match (i, alpha) {
            (HOME_C, Some(a)) if !est.home_c_free => a.c_se,
            _ => est.se(i),
        };
        rows.push(vec![name.clone(), eq.into(), var, num(est.theta[i]), num(se)]);
    }
    let stat = |k: &str, v: f64| vec![k.to_string(), "fit".into(), k.to_string(), num(v), String::new()];
    rows.push(stat("loglik", est.loglik));
    rows.push(stat("n", est.n as f64));
    rows.push(stat("converged", est.converged as u8 as f64));
    rows.push(stat("iterations", est.iterations as f64));
    rows.push(stat("nodes", est.nodes as f64));
    rows.push(stat("home_c_free", est.home_c_free as u8 as f64));
    rows
}

pub fn write_estimates(path: impl AsRef<Path>, est: &ReducedFormEstimates, alpha: Option<&AlphaEstimate>) -> Result<()> {
    write_table(path, &ESTIMATE_HEADER, &estimate_rows(est, alpha))
}

/// Full covariance with parameter names as header and first column.
pub fn write_covariance(path: impl AsRef<Path>, est: &ReducedFormEstimates) -> Result<()> {
    let mut header = vec!["parameter"];
    header.extend(est.names.iter().map(String::as_str));
    let rows: Vec<Vec<String>> = est
        .names
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let mut r = vec![n.clone()];
            r.extend((0..est.names.len()).map(|j| num(est.covariance[(i, j)])));
            r
        })
        .collect();
    write_table(path, &header, &rows)
}

fn bad(path: &Path, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line: 0,
        msg: msg.into(),
    }
}

/// Rebuild estimates from a coefficient table (and covariance file, if
/// given; otherwise a diagonal matrix of squared SEs). Parameters absent
/// from the table are NaN. Returns the first-step α when the home intercept
/// is present.
pub fn read_estimates(
    path: impl AsRef<Path>,
    kind: ModelKind,
    covariance: Option<&Path>,
) -> Result<(ReducedFormEstimates, Option<AlphaEstimate>)> {
    let path = path.as_ref();
    let (header, rows) = read_table(path)?;
    if header != ESTIMATE_HEADER {
        return Err(bad(path, format!("header must be {}", ESTIMATE_HEADER.join(","))));
    }
    let mut covariates: Vec<String> = Vec::new();
    for r in &rows {
        if let Some(c) = r[0].strip_prefix("beta_w:") {
            covariates.push(c.to_string());
        }
    }
    let layout = Layout::new(covariates.clone());
    let names = layout.names();
    let p = names.len();
    let mut theta = vec![f64::NAN; p];
    let mut se = vec![f64::NAN; p];
    let mut stats = std::collections::BTreeMap::new();
    for (line, r) in rows.iter().enumerate() {
        let value = |s: &str| parse_num(s).ok_or_else(|| bad(path, format!("line {}: bad number `{s}`", line + 2)));
        let (v, s) = (value(&r[3])?, value(&r[4])?);
        if r[1] == "fit" {
            stats.insert(r[0].clone(), v);
        } else if let Some(i) = names.iter().position(|n| *n == r[0]) {
            theta[i] = v;
            se[i] = s;
        } else {
            return Err(bad(path, format!("line {}: unknown parameter `{}`", line + 2, r[0])));
        }
    }
    let home_c_free = stats.get("home_c_free").copied().unwrap_or(0.0) != 0.0;
    let mut cov = DMatrix::from_fn(p, p, |i, j| if i == j { se[i] * se[i] } else { 0.0 });
    if let Some(cp) = covariance {
        let (h, crow) = read_table(cp)?;
        if h.len() != p + 1 || crow.len() != p || h[1..] != names[..] {
            return Err(bad(cp, "covariance names do not match the coefficient table"));
        }
        for (i, r) in crow.iter().enumerate() {
            for j in 0..p {
                cov[(i, j)] = parse_num(&r[j + 1]).ok_or_else(|| bad(cp, format!("bad entry ({i}, {j})")))?;
            }
        }
    }
    let alpha = theta[HOME_C].is_finite().then(|| {
        let c = theta[HOME_C];
        let a = logistic(c);
        AlphaEstimate {
            c,
            c_se: se[HOME_C],
            alpha: a,
            alpha_se: a * (1.0 - a) * se[HOME_C],
            n: stats.get("n").copied().unwrap_or(f64::NAN) as usize,
        }
    });
    if !home_c_free {
        // first-step variance lives in the α estimate, not in the model covariance
        for j in 0..p {
            cov[(HOME_C, j)] = 0.0;
            cov[(j, HOME_C)] = 0.0;
        }
    }
    let est = ReducedFormEstimates {
        kind,
        names,
        theta,
        covariance: cov,
        loglik: stats.get("loglik").copied().unwrap_or(f64::NAN),
        n: stats.get("n").copied().unwrap_or(0.0) as usize,
        converged: stats.get("converged").copied().unwrap_or(0.0) != 0.0,
        iterations: stats.get("iterations").copied().unwrap_or(0.0) as usize,
        warnings: Vec::new(),
        covariates,
        home_c_free,
        nodes: stats.get("nodes").copied().unwrap_or(0.0) as usize,
    };
    Ok((est, alpha))
}

pub fn estimates_file(kind: ModelKind, label: &str) -> String {
    format!("estimates_{kind}_{label}.csv")
}

pub fn covariance_file(kind: ModelKind, label: &str) -> String {
    format!("covariance_{kind}_{label}.csv")
}

/// Write the coefficient table and covariance of every fit in the report.
pub fn write_battery_tables(dir: impl AsRef<Path>, rep: &BatteryReport) -> Result<()> {
    let dir = dir.as_ref();
    for f in &rep.fits {
        write_estimates(dir.join(estimates_file(f.kind, &rep.label)), f, rep.alpha.as_ref())?;
        write_covariance(dir.join(covariance_file(f.kind, &rep.label)), f)?;
    }
    Ok(())
}

pub const SHARING_HEADER: [&str; 4] = ["sample", "parameter", "estimate", "se"];

pub fn sharing_rows(label: &str, s: &StructuralParams) -> Vec<Vec<String>> {
    StructuralParams::NAMES
        .iter()
        .zip(s.values())
        .zip(&s.ses)
        .map(|((n, v), se)| vec![label.to_string(), n.to_string(), num(v), num(*se)])
        .collect()
}

/// One table for all samples with a recovered sharing rule.
pub fn write_sharing(path: impl AsRef<Path>, reports: &[BatteryReport]) -> Result<()> {
    let rows: Vec<Vec<String>> = reports
        .iter()
        .filter_map(|r| r.sharing.as_ref().map(|s| sharing_rows(&r.label, s)))
        .flatten()
        .collect();
    write_table(path, &SHARING_HEADER, &rows)
}

fn f3(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.3}")
    } else {
        "n/a".into()
    }
}

fn pval(p: f64) -> String {
    if !p.is_finite() {
        "n/a".into()
    } else if p < 1e-3 {
        format!("{p:.2e}")
    } else {
        format!("{p:.3}")
    }
}

/// One-line sharing-rule summary, e.g. `F′ 0.821, ψ_t 1.146, ψ_p 1.796, ψ_y 2.190`.
pub fn sharing_summary(s: &StructuralParams) -> String {
    format!(
        "F′ {}, ψ_t {}, ψ_p {}, ψ_y {}",
        f3(s.f_prime),
        f3(s.psi_t),
        f3(s.psi_p),
        f3(s.psi_y)
    )
}

/// Markdown verdict in the layout of the published result tables.
pub fn render_verdict(rep: &BatteryReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Household model tests: {}\n", rep.label);
    let _ = writeln!(s, "Households: {}. Test size: {}.\n", rep.n, rep.level);

    let _ = writeln!(s, "## Likelihood-ratio tests\n");
    let _ = writeln!(s, "| Restriction | LR statistic | df | p-value | Decision |");
    let _ = writeln!(s, "|---|---|---|---|---|");
    for kind in [ModelKind::Unitary, ModelKind::Collective] {
        match rep.lr(kind) {
            Some(t) => {
                let d = if t.p < rep.level { "rejected" } else { "not rejected" };
                let _ = writeln!(s, "| {kind} | {:.2} | {} | {} | {d} |", t.stat, t.df, pval(t.p));
            }
            None => {
                let _ = writeln!(s, "| {kind} | n/a | {} | n/a | not run |", kind.restrictions());
            }
        }
    }

    let _ = writeln!(s, "\n## Reservation wages\n");
    let _ = writeln!(s, "| Model | γ_p | SE | γ_y | SE |");
    let _ = writeln!(s, "|---|---|---|---|---|");
    for (k, r) in &rep.reservation {
        let _ = writeln!(s, "| {k} | {} | {} | {} | {} |", f3(r.gamma_p), f3(r.se_p), f3(r.gamma_y), f3(r.se_y));
    }

    if let Some(a) = &rep.alpha {
        let _ = writeln!(s, "\n## Home production\n");
        let _ = writeln!(s, "| Parameter | Estimate | SE |");
        let _ = writeln!(s, "|---|---|---|");
        let _ = writeln!(s, "| Parents (α) | {} | {} |", f3(a.alpha), f3(a.alpha_se));
        let _ = writeln!(s, "| Teen (1 − α) | {} | {} |", f3(a.teen_share()), f3(a.alpha_se));
    }

    if let Some(sh) = &rep.sharing {
        let _ = writeln!(s, "\n## Sharing rule\n");
        let _ = writeln!(s, "| Parameter | Estimate | SE |");
        let _ = writeln!(s, "|---|---|---|");
        for ((n, v), se) in StructuralParams::NAMES.iter().zip(sh.values()).zip(&sh.ses) {
            let _ = writeln!(s, "| {n} | {} | {} |", f3(v), f3(*se));
        }
        let _ = writeln!(s, "| Summary | {} | |", sharing_summary(sh));
        let _ = writeln!(
            s,
            "\nThe sharing-function constants κ₀ and κ₁ are not identified; roots of the F′ quadratic: {:.4}, {:.4}.",
            sh.roots[0], sh.roots[1]
        );
    }

    let _ = writeln!(s, "\n## Verdict\n");
    let _ = writeln!(s, "{}", rep.verdict.describe());
    if !rep.failures.is_empty() {
        let _ = writeln!(s, "\n## Failures\n");
        for f in &rep.failures {
            let _ = writeln!(s, "- {f}");
        }
    }
    if !rep.notes.is_empty() {
        let _ = writeln!(s, "\n## Notes\n");
        for n in &rep.notes {
            let _ = writeln!(s, "- {n}");
        }
    }
    s
}

pub fn verdict_file(label: &str) -> String {
    format!("verdict_{label}.md")
}

/// Point-only sharing rule when the full chain (with SEs) is unavailable,
/// e.g. from published tables that omit the work-regime wage terms.
fn sharing_points(est: &ReducedFormEstimates, alpha: Option<&AlphaEstimate>) -> Result<StructuralParams> {
    let (bt, bp, by) = (est.bt(), est.bp(), est.by());
    if bt.abs() < 1e-10 {
        return Err(Error::SingularFrontier(bt.abs()));
    }
    let (gp, gy) = (-bp / bt, -by / bt);
    let sol = solve_sharing(est.at_s(), est.ay_s(), est.ay(), gp, gy, None)?;
    let theta_p_rho = est.ay() / (1.0 - sol.psi_y);
    let a = alpha.map_or(f64::NAN, |a| a.alpha);
    let ap = est.ap_star() - est.delta() * a / (1.0 - a);
    Ok(StructuralParams {
        alpha: a,
        gamma_p: gp,
        gamma_y: gy,
        f_prime: sol.f_prime,
        psi_p: sol.psi_p,
        psi_t: sol.psi_t,
        psi_y: sol.psi_y,
        theta_p_rho,
        theta_p_w: ap + theta_p_rho * sol.psi_p,
        theta_h_k: None,
        ses: vec![f64::NAN; 9],
        covariance: DMatrix::from_element(9, 9, f64::NAN),
        kappas_identified: false,
        roots: sol.roots,
    })
}

/// Rebuild a report from the tables in `dir` for sample `label`: whatever
/// fits exist are read back, tests recomputed from their logliks.
pub fn report_from_tables(dir: impl AsRef<Path>, label: &str, level: f64) -> Result<BatteryReport> {
    let dir = dir.as_ref();
    let mut fits = Vec::new();
    let mut alpha = None;
    for kind in ModelKind::ALL {
        let p = dir.join(estimates_file(kind, label));
        if !p.exists() {
            continue;
        }
        let cp = dir.join(covariance_file(kind, label));
        let (est, a) = read_estimates(&p, kind, cp.exists().then_some(cp.as_path()))?;
        alpha = alpha.or(a);
        fits.push(est);
    }
    if fits.is_empty() {
        return Err(Error::Prerequisite(format!(
            "no estimates_*_{label}.csv in {}; run the `structural` stage first",
            dir.display()
        )));
    }
    let mut rep = BatteryReport {
        label: label.to_string(),
        n: fits[0].n,
        level,
        alpha,
        fits,
        unitary_lr: None,
        collective_lr: None,
        reservation: Vec::new(),
        sharing: None,
        verdict: Verdict::Incomplete,
        failures: Vec::new(),
        notes: Vec::new(),
    };
    if let Some(u) = rep.fit(ModelKind::Unrestricted).map(|u| u.loglik) {
        for kind in [ModelKind::Unitary, ModelKind::Collective] {
            let Some(r) = rep.fit(kind).map(|r| r.loglik) else { continue };
            match lr_from_logliks(r, u, kind.restrictions()) {
                Ok(t) if kind == ModelKind::Unitary => rep.unitary_lr = Some(t),
                Ok(t) => rep.collective_lr = Some(t),
                Err(e) => rep.failures.push(format!("{kind} LR test: {e}")),
            }
        }
    }
    for f in &rep.fits {
        match reservation_from_estimates(f) {
            Ok(r) => rep.reservation.push((f.kind, r)),
            Err(e) => rep.failures.push(format!("{} reservation wage: {e}", f.kind)),
        }
    }
    if let Some(c) = rep.fit(ModelKind::Collective).cloned() {
        let c = &c;
        let retained = rep.collective_lr.is_none_or(|t| t.p >= level);
        if rep.collective_lr.is_none() {
            rep.notes.push("collective LR test unavailable; sharing rule shown without it".into());
        }
        if retained {
            let full = rep.alpha.as_ref().map(|a| recover_sharing_rule(c, a));
            match full {
                Some(Ok(s)) => rep.sharing = Some(s),
                other => {
                    if let Some(Err(e)) = other {
                        rep.notes.push(format!("full sharing-rule chain unavailable ({e}); point values only"));
                    }
                    match sharing_points(c, rep.alpha.as_ref()) {
                        Ok(s) => rep.sharing = Some(s),
                        Err(e) => rep.failures.push(format!("sharing rule: {e}")),
                    }
                }
            }
        }
    }
    rep.verdict = verdict(rep.unitary_lr, rep.collective_lr, level);
    Ok(rep)
}
