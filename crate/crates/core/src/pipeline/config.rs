use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::auxiliary::{ControlSpec, WageSpec};
use crate::data::{Schema, SelectionRules};
use crate::error::{Error, Result};
use crate::household::{BatteryOptions, ModelKind, StructuralSpec};
use crate::mte::{MteBootstrap, MteSpec, PropensitySpec};
use crate::simgen::SimConfig;

/// Where the households come from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    /// Household CSV, relative to the config file.
    pub path: Option<PathBuf>,
    pub schema: Schema,
    /// Simulated households when `path` is absent.
    pub simulate: Option<SimConfig>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenderSplit {
    /// Separate estimates for sons and daughters.
    #[default]
    ByGender,
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stages {
    pub select: bool,
    pub impute: bool,
    pub control_function: bool,
    pub mte: bool,
    pub structural: bool,
    pub report: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Stages {
            select: true,
            impute: true,
            control_function: true,
            mte: true,
            structural: true,
            report: true,
        }
    }
}

impl Stages {
    pub fn any(&self) -> bool {
        self.select || self.impute || self.control_function || self.mte || self.structural || self.report
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MteConfig {
    pub propensity: PropensitySpec,
    pub curve: MteSpec,
    pub bootstrap: MteBootstrap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StructuralConfig {
    /// Restricted models tested against the unrestricted one.
    pub kinds: Vec<ModelKind>,
    pub level: f64,
    pub max_refits: usize,
    pub model: StructuralSpec,
}

impl Default for StructuralConfig {
    fn default() -> Self {
        let b = BatteryOptions::default();
        StructuralConfig {
            kinds: b.restricted,
            level: b.level,
            max_refits: b.max_refits,
            model: b.spec,
        }
    }
}

impl StructuralConfig {
    pub fn battery(&self) -> BatteryOptions {
        BatteryOptions {
            spec: self.model.clone(),
            restricted: self.kinds.iter().copied().filter(|k| *k != ModelKind::Unrestricted).collect(),
            level: self.level,
            max_refits: self.max_refits,
        }
    }
}

/// Whole-run configuration. Every table is optional in TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub output_dir: PathBuf,
    pub split: GenderSplit,
    pub input: InputConfig,
    pub stages: Stages,
    pub selection: SelectionRules,
    pub wage: WageSpec,
    pub control: ControlSpec,
    pub mte: MteConfig,
    pub structural: StructuralConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            output_dir: PathBuf::from("out"),
            split: GenderSplit::ByGender,
            input: InputConfig {
                simulate: Some(SimConfig::default()),
                ..InputConfig::default()
            },
            stages: Stages::default(),
            selection: SelectionRules::default(),
            wage: WageSpec::default(),
            control: ControlSpec::default(),
            mte: MteConfig::default(),
            structural: StructuralConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parse a config file; a relative input path is resolved against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let (Some(p), Some(base)) = (&cfg.input.path, path.parent()) {
            if p.is_relative() {
                cfg.input.path = Some(base.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks that need no data.
    pub fn validate(&self) -> Result<()> {
        if !self.stages.any() {
            return Err(Error::Config("no stage enabled".into()));
        }
        if self.input.path.is_none() && self.input.simulate.is_none() {
            return Err(Error::Config("set input.path or an [input.simulate] table".into()));
        }
        if let Some(sim) = &self.input.simulate {
            if self.input.path.is_none() {
                sim.validate()?;
            }
        }
        if self.stages.mte {
            let b = self.mte.bootstrap.replications;
            if b < 2 {
                return Err(Error::Config(format!("mte.bootstrap.replications must be at least 2, got {b}")));
            }
            let g = self.mte.curve.grid_step;
            if !(g > 0.0 && g < 1.0) {
                return Err(Error::Config(format!("mte.curve.grid_step must lie in (0, 1), got {g}")));
            }
            if let Some(h) = self.mte.curve.bandwidth {
                if !(h > 0.0) {
                    return Err(Error::Config(format!("mte.curve.bandwidth must be positive, got {h}")));
                }
            }
        }
        if self.stages.structural {
            let s = &self.structural;
            if !(s.level > 0.0 && s.level < 1.0) {
                return Err(Error::Config(format!("structural.level must lie in (0, 1), got {}", s.level)));
            }
            if s.model.nodes == 0 {
                return Err(Error::Config("structural.model.nodes must be positive".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_toml() {
        let c = PipelineConfig::default();
        assert_eq!(PipelineConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_key_is_named() {
        let e = PipelineConfig::from_toml("[mte.bootstrap]\nreplicatons = 10\n").unwrap_err();
        assert!(e.to_string().contains("replicatons"), "{e}");
    }

    #[test]
    fn zero_replications_fail_validation() {
        let c = PipelineConfig::from_toml("[mte.bootstrap]\nreplications = 0\n").unwrap();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn all_stages_off_is_rejected() {
        let mut c = PipelineConfig::default();
        c.stages = Stages {
            select: false,
            impute: false,
            control_function: false,
            mte: false,
            structural: false,
            report: false,
        };
        assert!(c.validate().is_err());
    }
}
