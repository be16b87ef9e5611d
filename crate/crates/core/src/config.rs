//! TOML files for campaigns and experiment batteries.
//!
//! A campaign file mirrors [`CampaignConfig`]; the program is given as a
//! source string (a path, `preset:<name>[@seed]` or `gen:...@seed`) and
//! any model as a path. Unset fields take their defaults.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coordinator::{LearningConfig, PolicyKind};
use crate::error::{Error, Result};
use crate::experiment::CampaignTemplate;
use crate::learning::load_model;
use crate::program::ProgramSource;
use crate::sim::{CampaignConfig, InitialSeed, SimParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignFile {
    pub program: Option<String>,
    pub policy: Option<PolicyKind>,
    pub seed: Option<u64>,
    pub init_model: Option<PathBuf>,
    pub repetition: u32,
    pub ticks: u64,
    pub fuzzer_epoch: usize,
    pub concolic_budget: u32,
    pub label_window: u64,
    pub dispatch_k: usize,
    pub dispatch_interval: u64,
    pub initial_seeds: Vec<InitialSeed>,
    pub learning: LearningConfig,
    pub sim: SimParams,
}

impl Default for CampaignFile {
    fn default() -> Self {
        let t = CampaignTemplate::default();
        Self {
            program: None,
            policy: None,
            seed: None,
            init_model: None,
            repetition: 0,
            ticks: t.ticks,
            fuzzer_epoch: t.fuzzer_epoch,
            concolic_budget: t.concolic_budget,
            label_window: t.label_window,
            dispatch_k: t.dispatch_k,
            dispatch_interval: t.dispatch_interval,
            initial_seeds: t.initial_seeds,
            learning: t.learning,
            sim: t.sim,
        }
    }
}

impl CampaignFile {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("campaign files serialize")
    }

    pub fn template(&self) -> CampaignTemplate {
        CampaignTemplate {
            ticks: self.ticks,
            fuzzer_epoch: self.fuzzer_epoch,
            concolic_budget: self.concolic_budget,
            label_window: self.label_window,
            dispatch_k: self.dispatch_k,
            dispatch_interval: self.dispatch_interval,
            initial_seeds: self.initial_seeds.clone(),
            learning: self.learning.clone(),
            sim: self.sim.clone(),
        }
    }

    /// Resolves the program and model and builds a validated config. The
    /// seed, when set, is used as the campaign seed as is.
    pub fn resolve(&self) -> Result<CampaignConfig> {
        let source: ProgramSource = self
            .program
            .as_deref()
            .ok_or_else(|| Error::Config("no program given".into()))?
            .parse()?;
        let policy = self.policy.ok_or_else(|| Error::Config("no policy given".into()))?;
        let program = Arc::new(source.resolve()?);
        let mut cfg = self.template().config(&program, policy, self.repetition, 0);
        cfg.rng_seed = self.seed.unwrap_or(0);
        cfg.init_model = self.init_model.as_ref().map(load_model).transpose()?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Effectiveness,
    Reusability,
    Transferability,
    FeatureImportance,
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "effectiveness" => Ok(Self::Effectiveness),
            "reusability" | "reuse" => Ok(Self::Reusability),
            "transferability" | "transfer" => Ok(Self::Transferability),
            "feature-importance" | "importance" => Ok(Self::FeatureImportance),
            other => Err(Error::Config(format!(
                "unknown experiment `{other}` (expected effectiveness, reusability, transferability or feature-importance)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub programs: Vec<String>,
    #[serde(default)]
    pub policies: Vec<PolicyKind>,
    #[serde(default = "default_repetitions")]
    pub repetitions: u32,
    #[serde(default)]
    pub seed: u64,
    /// Baseline for the effectiveness p-values.
    #[serde(default)]
    pub baseline: Option<PolicyKind>,
    /// Pre-trained models for the transfer experiment, one per program,
    /// named `<program>.model`.
    #[serde(default)]
    pub models_dir: Option<PathBuf>,
    #[serde(default)]
    pub campaign: CampaignTemplate,
}

fn default_repetitions() -> u32 {
    5
}

impl ExperimentSpec {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let spec: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.programs.is_empty() {
            return Err(Error::Config("at least one program is required".into()));
        }
        if self.kind == ExperimentKind::Transferability && self.programs.len() < 2 {
            return Err(Error::Config("transferability needs at least two programs".into()));
        }
        if self.kind == ExperimentKind::Effectiveness && self.policies.is_empty() {
            return Err(Error::Config("effectiveness needs at least one policy".into()));
        }
        for p in &self.programs {
            p.parse::<ProgramSource>()?;
        }
        Ok(())
    }
}
