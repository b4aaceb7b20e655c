//! Batch runner: load → select → impute → control function → MTE →
//! structural → report, with a hashed run manifest.

mod config;

pub use config::{GenderSplit, InputConfig, MteConfig, PipelineConfig, Stages, StructuralConfig};

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::auxiliary::{
    fit_control_function, fit_wage_model, impute_wages, overlap_plot, write_control_function, write_wage_model,
};
use crate::data::{load_dataset, select_sample, write_dataset, Dataset, Gender};
use crate::error::{Error, Result};
use crate::household::report::{render_verdict, report_from_tables, verdict_file, write_battery_tables, write_sharing};
use crate::household::{test_battery_prepared, BatteryReport, StructuralData};
use crate::mte::{heterogeneity_tests, mte_bootstrap, write_first_stage, write_mte_outputs, HeterogeneityTests};
use crate::output::{write_figure, write_table};
use crate::simgen::generate;

pub const MANIFEST: &str = "run_manifest.json";

/// Files written by a stage, relative paths resolved by the caller.
pub type Written = Vec<PathBuf>;

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

/// Load the CSV named in the config, or simulate. Simulated runs also
/// write the dataset and its truth ledger.
pub fn load_stage(cfg: &PipelineConfig, out: &Path) -> Result<(Dataset, Written)> {
    if let Some(p) = &cfg.input.path {
        if !p.exists() {
            return Err(Error::Prerequisite(format!("input file {} does not exist", p.display())));
        }
        return Ok((load_dataset(p, &cfg.input.schema)?, vec![]));
    }
    let sim = cfg
        .input
        .simulate
        .as_ref()
        .ok_or_else(|| Error::Config("set input.path or an [input.simulate] table".into()))?;
    let (d, ledger) = generate(sim)?;
    simulate_outputs(&d, &ledger, out)
        .map(|w| (d, w))
}

fn simulate_outputs(d: &Dataset, ledger: &crate::simgen::TruthLedger, out: &Path) -> Result<Written> {
    let files = [out.join("simulated.csv"), out.join("truth_ledger.csv"), out.join("truth_params.csv")];
    write_dataset(d, &files[0])?;
    ledger.write_csv(&files[1])?;
    ledger.write_params_csv(&files[2])?;
    Ok(files.to_vec())
}

/// Simulate to `out` (the `simulate` subcommand).
pub fn simulate_to(sim: &crate::simgen::SimConfig, out: &Path) -> Result<Written> {
    std::fs::create_dir_all(out)?;
    let (d, ledger) = generate(sim)?;
    simulate_outputs(&d, &ledger, out)
}

pub fn select_stage(cfg: &PipelineConfig, d: &Dataset, out: &Path) -> Result<(Dataset, Written)> {
    let (kept, rep) = select_sample(d, &cfg.selection)?;
    let mut rows = vec![vec!["input".to_string(), rep.input.to_string()]];
    rows.extend(rep.dropped.iter().map(|(rule, n)| vec![format!("dropped:{rule}"), n.to_string()]));
    rows.push(vec!["kept".into(), rep.kept.to_string()]);
    let f = out.join("selection.csv");
    write_table(&f, &["rule", "count"], &rows)?;
    Ok((kept, vec![f]))
}

/// Samples to estimate on, by the split rule. Empty gender samples are skipped.
pub fn split_samples(split: GenderSplit, d: &Dataset) -> Vec<(String, Dataset)> {
    match split {
        GenderSplit::Pooled => vec![("all".into(), d.clone())],
        GenderSplit::ByGender => Gender::ALL
            .iter()
            .map(|g| (g.plural().to_string(), d.by_gender(*g)))
            .filter(|(_, s)| !s.is_empty())
            .collect(),
    }
}

/// Wage model and imputation.
pub fn impute_stage(cfg: &PipelineConfig, d: &Dataset, dir: &Path) -> Result<(Dataset, Written)> {
    let m = fit_wage_model(d, &cfg.wage)?;
    let imputed = impute_wages(d, &m)?;
    let mut w = vec![dir.join("wage_model.csv")];
    write_wage_model(&w[0], &m)?;
    if let Some(plot) = overlap_plot(&imputed, 30) {
        let f = dir.join("wage_overlap.svg");
        write_figure(&f, &plot)?;
        w.push(f.clone());
        w.push(f.with_extension("csv"));
    }
    Ok((imputed, w))
}

pub fn control_stage(cfg: &PipelineConfig, d: &Dataset, dir: &Path) -> Result<(Dataset, Written)> {
    let cf = fit_control_function(d, &cfg.control)?;
    let f = dir.join("control_function.csv");
    write_control_function(&f, &cf)?;
    Ok((cf.attach(d)?, vec![f]))
}

pub fn mte_stage(cfg: &PipelineConfig, d: &Dataset, dir: &Path) -> Result<(HeterogeneityTests, Written)> {
    let run = mte_bootstrap(d, &cfg.mte.propensity, &cfg.mte.curve, &cfg.mte.bootstrap)?;
    let tests = heterogeneity_tests(&run.curve, &run.fits, Some(&run.boot))?;
    write_first_stage(dir.join("first_stage.csv"), &run.propensity)?;
    write_mte_outputs(dir, &run.curve, Some(&tests))?;
    let w = ["first_stage.csv", "mte_curve.svg", "mte_curve.csv", "mte_tests.csv"]
        .iter()
        .map(|f| dir.join(f))
        .collect();
    Ok((tests, w))
}

/// Fits and tests; an unrestricted-fit failure is an estimation error.
pub fn structural_stage(cfg: &PipelineConfig, d: &Dataset, label: &str, dir: &Path) -> Result<(BatteryReport, Written)> {
    let data = StructuralData::from_dataset(d, &cfg.structural.model)?;
    let rep = test_battery_prepared(&data, label, &cfg.structural.battery());
    write_battery_tables(dir, &rep)?;
    let mut w: Written = Vec::new();
    for f in &rep.fits {
        w.push(dir.join(crate::household::report::estimates_file(f.kind, label)));
        w.push(dir.join(crate::household::report::covariance_file(f.kind, label)));
    }
    if rep.fit(crate::household::ModelKind::Unrestricted).is_none() {
        return Err(Error::NonConvergence(format!(
            "{label}: unrestricted model failed: {}",
            rep.failures.join("; ")
        )));
    }
    Ok((rep, w))
}

/// Verdict markdown, from the in-memory battery or from tables on disk.
pub fn report_stage(
    dir: &Path,
    label: &str,
    level: f64,
    battery: Option<BatteryReport>,
) -> Result<(BatteryReport, Written)> {
    let rep = match battery {
        Some(b) => b,
        None => report_from_tables(dir, label, level)?,
    };
    let f = dir.join(verdict_file(label));
    std::fs::write(&f, render_verdict(&rep))?;
    Ok((rep, vec![f]))
}

#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub sample: String,
    pub stage: String,
    pub status: String,
}

/// What a run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub outputs: Written,
    pub manifest: PathBuf,
    pub reports: Vec<BatteryReport>,
    pub stages: Vec<StageRecord>,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Execute the enabled stages in order. The manifest is written even when a
/// stage fails; the first failure is then returned.
pub fn run(cfg: &PipelineConfig, config_path: Option<&Path>) -> Result<RunSummary> {
    cfg.validate()?;
    let started = unix_now();
    let out = cfg.output_dir.clone();
    std::fs::create_dir_all(&out)?;
    let mut outputs: Written = Vec::new();
    let mut stages: Vec<StageRecord> = Vec::new();
    let mut reports = Vec::new();
    let result = run_stages(cfg, &out, &mut outputs, &mut stages, &mut reports);
    if let Err(e) = &result {
        stages.push(StageRecord {
            sample: String::new(),
            stage: "error".into(),
            status: e.to_string(),
        });
    }
    let manifest = out.join(MANIFEST);
    write_manifest(cfg, config_path, &out, &outputs, &stages, started, &manifest)?;
    result?;
    Ok(RunSummary {
        outputs,
        manifest,
        reports,
        stages,
    })
}

fn run_stages(
    cfg: &PipelineConfig,
    out: &Path,
    outputs: &mut Written,
    stages: &mut Vec<StageRecord>,
    reports: &mut Vec<BatteryReport>,
) -> Result<()> {
    let mut done = |sample: &str, stage: &str, status: String| {
        stages.push(StageRecord {
            sample: sample.into(),
            stage: stage.into(),
            status,
        })
    };
    let (mut d, w) = load_stage(cfg, out)?;
    outputs.extend(w);
    done("", "load", format!("{} records", d.len()));
    if cfg.stages.select {
        let (kept, w) = select_stage(cfg, &d, out)?;
        done("", "select", format!("{} of {} kept", kept.len(), d.len()));
        d = kept;
        outputs.extend(w);
    }
    for (label, mut s) in split_samples(cfg.split, &d) {
        let dir = out.join(&label);
        std::fs::create_dir_all(&dir)?;
        if cfg.stages.impute {
            let (imp, w) = impute_stage(cfg, &s, &dir)?;
            let n = imp.records().iter().filter(|r| r.teen_wage_imputed).count();
            done(&label, "impute", format!("{n} wages imputed"));
            s = imp;
            outputs.extend(w);
        }
        if cfg.stages.control_function {
            let (cf, w) = control_stage(cfg, &s, &dir)?;
            done(&label, "control_function", "ok".into());
            s = cf;
            outputs.extend(w);
        }
        let f = dir.join("dataset.csv");
        write_dataset(&s, &f)?;
        outputs.push(f);
        if cfg.stages.mte {
            let (t, w) = mte_stage(cfg, &s, &dir)?;
            done(
                &label,
                "mte",
                format!("p_observable {:.4} p_unobservable {:.4}", t.p_observable, t.p_unobservable),
            );
            outputs.extend(w);
        }
        let mut battery = None;
        if cfg.stages.structural {
            let (rep, w) = structural_stage(cfg, &s, &label, &dir)?;
            done(&label, "structural", rep.verdict.describe().to_string());
            battery = Some(rep);
            outputs.extend(w);
        }
        if cfg.stages.report {
            let (rep, w) = report_stage(&dir, &label, cfg.structural.level, battery)?;
            done(&label, "report", rep.verdict.describe().to_string());
            reports.push(rep);
            outputs.extend(w);
        }
    }
    if !reports.is_empty() {
        let f = out.join("sharing_rule.csv");
        write_sharing(&f, reports)?;
        outputs.push(f);
    }
    Ok(())
}

fn rel(out: &Path, p: &Path) -> String {
    p.strip_prefix(out).unwrap_or(p).to_string_lossy().replace('\\', "/")
}

fn write_manifest(
    cfg: &PipelineConfig,
    config_path: Option<&Path>,
    out: &Path,
    outputs: &[PathBuf],
    stages: &[StageRecord],
    started: u64,
    path: &Path,
) -> Result<()> {
    let mut files = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for p in outputs {
        if seen.insert(rel(out, p)) && p.exists() {
            files.push(json!({ "path": rel(out, p), "sha256": sha256_file(p)? }));
        }
    }
    let input = match &cfg.input.path {
        Some(p) => json!({ "path": p.to_string_lossy(), "sha256": sha256_file(p).ok() }),
        None => json!({ "simulated": true }),
    };
    let config = match config_path {
        Some(p) => json!({ "path": p.to_string_lossy(), "sha256": sha256_file(p).ok() }),
        None => json!(null),
    };
    let m = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "started_unix": started,
        "finished_unix": unix_now(),
        "config_file": config,
        "resolved_config": cfg,
        "input": input,
        "seeds": {
            "simulation": cfg.input.simulate.as_ref().filter(|_| cfg.input.path.is_none()).map(|s| s.seed),
            "mte_bootstrap": cfg.stages.mte.then_some(cfg.mte.bootstrap.seed),
        },
        "stages": stages,
        "outputs": files,
    });
    std::fs::write(path, serde_json::to_string_pretty(&m).expect("manifest serializes") + "\n")?;
    Ok(())
}
