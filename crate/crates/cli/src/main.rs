use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bargain_lab::data::{load_dataset, write_dataset, Dataset};
use bargain_lab::error::{Error, Result};
use bargain_lab::household::report::write_sharing;
use bargain_lab::household::ModelKind;
use bargain_lab::mte::MteMethod;
use bargain_lab::pipeline::{self, GenderSplit, PipelineConfig};
use bargain_lab::simgen::{SimConfig, TruthKind};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bargain-lab", version, about = "Household bargaining estimation pipeline")]
struct Cli {
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long, global = true, env = "BARGAIN_LAB_OUT")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every enabled stage from a config file.
    Run {
        config: PathBuf,
        #[arg(long, value_enum)]
        split: Option<Split>,
        /// MTE bootstrap replications.
        #[arg(long)]
        replications: Option<usize>,
    },
    /// Write a synthetic dataset and its truth ledger.
    Simulate {
        /// Simulator TOML (a `SimConfig` table).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        truth: Option<Truth>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit the teen wage model, impute missing wages and attach the control function.
    Impute {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        no_control_function: bool,
    },
    /// Propensity score, MTE curve with bootstrap bands and heterogeneity tests.
    Mte {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum)]
        method: Option<Method>,
        #[arg(long)]
        outcome: Option<String>,
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        grid_step: Option<f64>,
        #[arg(long)]
        bandwidth: Option<f64>,
    },
    /// Fit the household model and run the restriction tests.
    Structural {
        #[command(flatten)]
        input: Input,
        /// Restricted model to test; the unrestricted model is always fitted.
        #[arg(long, value_enum)]
        kind: Vec<Kind>,
        #[arg(long)]
        nodes: Option<usize>,
        #[arg(long)]
        level: Option<f64>,
    },
    /// Render the verdict from estimate tables already on disk.
    Report {
        /// Directory holding `estimates_<kind>_<label>.csv`; defaults to the output directory.
        #[arg(long)]
        dir: Option<PathBuf>,
        #[arg(long, default_value = "all")]
        label: String,
        #[arg(long, default_value_t = 0.05)]
        level: f64,
    },
}

/// A prepared dataset plus the optional pipeline config supplying specs.
#[derive(Args)]
struct Input {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Label used in table file names.
    #[arg(long, default_value = "all")]
    label: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    ByGender,
    Pooled,
}

#[derive(Clone, Copy, ValueEnum)]
enum Truth {
    Unitary,
    Collective,
    Mte,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Parametric,
    Semiparametric,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Unitary,
    Collective,
}

fn config_from(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn out_dir(cli: Option<PathBuf>, cfg: &PipelineConfig) -> Result<PathBuf> {
    let dir = cli.unwrap_or_else(|| cfg.output_dir.clone());
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn load(input: &Input, cfg: &PipelineConfig) -> Result<Dataset> {
    if !input.data.exists() {
        return Err(Error::Prerequisite(format!(
            "{} does not exist; run `simulate` or `impute` first",
            input.data.display()
        )));
    }
    load_dataset(&input.data, &cfg.input.schema)
}

fn report_written(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.cmd {
        Command::Run {
            config,
            split,
            replications,
        } => {
            let mut cfg = PipelineConfig::load(&config)?;
            if let Some(o) = cli.out {
                cfg.output_dir = o;
            }
            if let Some(s) = split {
                cfg.split = match s {
                    Split::ByGender => GenderSplit::ByGender,
                    Split::Pooled => GenderSplit::Pooled,
                };
            }
            if let Some(b) = replications {
                cfg.mte.bootstrap.replications = b;
            }
            let s = pipeline::run(&cfg, Some(&config))?;
            for st in &s.stages {
                println!("{:<10} {:<17} {}", st.sample, st.stage, st.status);
            }
            println!("manifest {}", s.manifest.display());
        }
        Command::Simulate { config, truth, n, seed } => {
            let mut sim = match &config {
                Some(p) => {
                    let text = std::fs::read_to_string(p)?;
                    toml::from_str::<SimConfig>(&text).map_err(|e| Error::Config(e.to_string()))?
                }
                None => SimConfig::default(),
            };
            if let Some(t) = truth {
                sim.truth = match t {
                    Truth::Unitary => TruthKind::Unitary,
                    Truth::Collective => TruthKind::Collective,
                    Truth::Mte => TruthKind::MteScenario,
                };
            }
            if let Some(n) = n {
                sim.n = n;
            }
            if let Some(s) = seed {
                sim.seed = s;
            }
            let dir = cli.out.unwrap_or_else(|| PathBuf::from("."));
            report_written(&pipeline::simulate_to(&sim, &dir)?);
        }
        Command::Impute {
            input,
            no_control_function,
        } => {
            let cfg = config_from(input.config.as_deref())?;
            let dir = out_dir(cli.out, &cfg)?;
            let d = load(&input, &cfg)?;
            let (mut d, mut w) = pipeline::impute_stage(&cfg, &d, &dir)?;
            if !no_control_function {
                let (cf, w2) = pipeline::control_stage(&cfg, &d, &dir)?;
                d = cf;
                w.extend(w2);
            }
            let f = dir.join("dataset.csv");
            write_dataset(&d, &f)?;
            w.push(f);
            report_written(&w);
        }
        Command::Mte {
            input,
            method,
            outcome,
            replications,
            seed,
            grid_step,
            bandwidth,
        } => {
            let mut cfg = config_from(input.config.as_deref())?;
            let m = &mut cfg.mte;
            if let Some(x) = method {
                m.curve.method = match x {
                    Method::Parametric => MteMethod::ParametricDeg1,
                    Method::Semiparametric => MteMethod::SemiparametricDeg2,
                };
            }
            if let Some(x) = outcome {
                m.curve.outcome = x;
            }
            if let Some(x) = replications {
                m.bootstrap.replications = x;
            }
            if let Some(x) = seed {
                m.bootstrap.seed = x;
            }
            if let Some(x) = grid_step {
                m.curve.grid_step = x;
            }
            if bandwidth.is_some() {
                m.curve.bandwidth = bandwidth;
            }
            cfg.stages.mte = true;
            cfg.validate()?;
            let dir = out_dir(cli.out, &cfg)?;
            let d = load(&input, &cfg)?;
            let (t, w) = pipeline::mte_stage(&cfg, &d, &dir)?;
            report_written(&w);
            println!(
                "observable heterogeneity p = {:.4}; unobservable heterogeneity p = {:.4}",
                t.p_observable, t.p_unobservable
            );
        }
        Command::Structural {
            input,
            kind,
            nodes,
            level,
        } => {
            let mut cfg = config_from(input.config.as_deref())?;
            if !kind.is_empty() {
                cfg.structural.kinds = kind
                    .iter()
                    .map(|k| match k {
                        Kind::Unitary => ModelKind::Unitary,
                        Kind::Collective => ModelKind::Collective,
                    })
                    .collect();
            }
            if let Some(x) = nodes {
                cfg.structural.model.nodes = x;
            }
            if let Some(x) = level {
                cfg.structural.level = x;
            }
            cfg.stages.structural = true;
            cfg.validate()?;
            let dir = out_dir(cli.out, &cfg)?;
            let d = load(&input, &cfg)?;
            let (rep, mut w) = pipeline::structural_stage(&cfg, &d, &input.label, &dir)?;
            let (rep, w2) = pipeline::report_stage(&dir, &input.label, cfg.structural.level, Some(rep))?;
            w.extend(w2);
            report_written(&w);
            println!("{}", rep.verdict.describe());
        }
        Command::Report { dir, label, level } => {
            let dir = match dir.or(cli.out) {
                Some(d) => d,
                None => PathBuf::from("."),
            };
            let (rep, mut w) = pipeline::report_stage(&dir, &label, level, None)?;
            let f = dir.join(format!("sharing_rule_{label}.csv"));
            write_sharing(&f, std::slice::from_ref(&rep))?;
            w.push(f);
            report_written(&w);
            if let Some(s) = &rep.sharing {
                println!("{}", bargain_lab::household::report::sharing_summary(s));
            }
            println!("{}", rep.verdict.describe());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
