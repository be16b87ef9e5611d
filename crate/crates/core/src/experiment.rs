//! Campaign batteries: coverage comparison between policies, model reuse on
//! the same program, transfer across programs, and feature importance.
//!
//! Campaign seeds derive from a base seed, the program name and the
//! repetition index, so every policy sees the same fuzzer randomness for a
//! given repetition.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coordinator::{LearningConfig, PolicyKind};
use crate::error::{Error, Result};
use crate::features::FEATURE_DIM;
use crate::learning::{ForestParams, ModelBundle, RandomForestModel, TrainingExample};
use crate::program::ProgramModel;
use crate::sim::{derive_campaign_seed, run_campaign, CampaignConfig, CampaignStats, InitialSeed, SimParams};
use crate::stats::{mann_whitney_u, mean, MannWhitney, MIN_SAMPLE};

/// Repetition index reserved for model-training campaigns.
pub const TRAINING_REPETITION: u32 = u32::MAX;

/// Campaign settings shared by every run of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignTemplate {
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

impl Default for CampaignTemplate {
    fn default() -> Self {
        Self {
            ticks: 200,
            fuzzer_epoch: 128,
            concolic_budget: 48,
            label_window: 5,
            dispatch_k: 1,
            dispatch_interval: 2,
            initial_seeds: vec![InitialSeed::default()],
            learning: LearningConfig::default(),
            sim: SimParams::default(),
        }
    }
}

impl CampaignTemplate {
    pub fn from_config(cfg: &CampaignConfig) -> Self {
        Self {
            ticks: cfg.ticks,
            fuzzer_epoch: cfg.fuzzer_epoch,
            concolic_budget: cfg.concolic_budget,
            label_window: cfg.label_window,
            dispatch_k: cfg.dispatch_k,
            dispatch_interval: cfg.dispatch_interval,
            initial_seeds: cfg.initial_seeds.clone(),
            learning: cfg.learning.clone(),
            sim: cfg.sim.clone(),
        }
    }

    pub fn config(
        &self,
        program: &Arc<ProgramModel>,
        policy: PolicyKind,
        repetition: u32,
        base_seed: u64,
    ) -> CampaignConfig {
        CampaignConfig {
            program: Arc::clone(program),
            policy,
            ticks: self.ticks,
            fuzzer_epoch: self.fuzzer_epoch,
            concolic_budget: self.concolic_budget,
            label_window: self.label_window,
            dispatch_k: self.dispatch_k,
            dispatch_interval: self.dispatch_interval,
            rng_seed: derive_campaign_seed(base_seed, program.name(), repetition),
            repetition,
            initial_seeds: self.initial_seeds.clone(),
            learning: self.learning.clone(),
            sim: self.sim.clone(),
            init_model: None,
        }
    }
}

fn run_all(configs: Vec<CampaignConfig>) -> Result<Vec<CampaignStats>> {
    configs.par_iter().map(run_campaign).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct Comparison {
    pub program: String,
    pub policy: PolicyKind,
    pub baseline: PolicyKind,
    pub mean_coverage: f64,
    pub baseline_mean_coverage: f64,
    /// Repetitions in which the policy covered strictly more.
    pub wins: usize,
    pub test: MannWhitney,
}

#[derive(Clone, Debug)]
pub struct EffectivenessReport {
    pub runs: Vec<CampaignStats>,
    pub comparisons: Vec<Comparison>,
}

impl EffectivenessReport {
    pub fn final_coverages(&self, program: &str, policy: PolicyKind) -> Vec<f64> {
        let mut runs: Vec<&CampaignStats> = self
            .runs
            .iter()
            .filter(|r| r.program == program && r.policy == policy)
            .collect();
        runs.sort_by_key(|r| r.repetition);
        runs.iter().map(|r| r.final_coverage() as f64).collect()
    }

    pub fn comparison(&self, program: &str, policy: PolicyKind, baseline: PolicyKind) -> Option<&Comparison> {
        self.comparisons
            .iter()
            .find(|c| c.program == program && c.policy == policy && c.baseline == baseline)
    }
}

/// Runs every policy on every program `repetitions` times and compares
/// each learned policy's final coverage with each baseline policy present.
/// Comparisons need at least three repetitions.
pub fn effectiveness(
    programs: &[Arc<ProgramModel>],
    policies: &[PolicyKind],
    repetitions: u32,
    template: &CampaignTemplate,
    base_seed: u64,
) -> Result<EffectivenessReport> {
    if repetitions == 0 {
        return Err(Error::Config("at least one repetition is required".into()));
    }
    let mut configs = Vec::new();
    for p in programs {
        for &policy in policies {
            for rep in 0..repetitions {
                configs.push(template.config(p, policy, rep, base_seed));
            }
        }
    }
    let mut report = EffectivenessReport {
        runs: run_all(configs)?,
        comparisons: Vec::new(),
    };
    for p in programs {
        for &policy in policies.iter().filter(|k| k.is_learned()) {
            for &baseline in policies.iter().filter(|k| !k.is_learned()) {
                let a = report.final_coverages(p.name(), policy);
                let b = report.final_coverages(p.name(), baseline);
                if a.len() < MIN_SAMPLE {
                    continue;
                }
                let test = mann_whitney_u(&a, &b)?;
                report.comparisons.push(Comparison {
                    program: p.name().to_string(),
                    policy,
                    baseline,
                    mean_coverage: mean(&a),
                    baseline_mean_coverage: mean(&b),
                    wins: a.iter().zip(&b).filter(|(x, y)| x > y).count(),
                    test,
                });
            }
        }
    }
    Ok(report)
}

/// Trains a model for `policy` with one campaign on `program`.
pub fn train_model(
    program: &Arc<ProgramModel>,
    policy: PolicyKind,
    template: &CampaignTemplate,
    base_seed: u64,
) -> Result<ModelBundle> {
    if !policy.is_learned() {
        return Err(Error::Config(format!("policy {policy} does not use a model")));
    }
    let stats = run_campaign(&template.config(program, policy, TRAINING_REPETITION, base_seed))?;
    stats
        .models
        .ok_or_else(|| Error::Config(format!("policy {policy} produced no model")))
}

#[derive(Clone, Debug)]
pub struct ReuseReport {
    pub program: String,
    pub policy: PolicyKind,
    pub fresh: Vec<CampaignStats>,
    pub reused: Vec<CampaignStats>,
    /// `100 · (reused − fresh) / fresh` per repetition.
    pub improvements: Vec<f64>,
    pub mean_improvement: f64,
}

impl ReuseReport {
    pub fn fresh_mean(&self) -> f64 {
        mean(&self.fresh.iter().map(|r| r.final_coverage() as f64).collect::<Vec<_>>())
    }

    pub fn reused_mean(&self) -> f64 {
        mean(
            &self
                .reused
                .iter()
                .map(|r| r.final_coverage() as f64)
                .collect::<Vec<_>>(),
        )
    }
}

/// Paired fresh and model-initialized campaigns on `program`. Fresh runs
/// depend only on the program and repetition, so callers comparing several
/// models on one target may pass them in via `fresh`.
fn reuse_runs(
    program: &Arc<ProgramModel>,
    policy: PolicyKind,
    model: &ModelBundle,
    repetitions: u32,
    template: &CampaignTemplate,
    base_seed: u64,
    fresh: Option<&[CampaignStats]>,
) -> Result<ReuseReport> {
    let fresh = match fresh {
        Some(f) => f.to_vec(),
        None => run_all(
            (0..repetitions)
                .map(|rep| template.config(program, policy, rep, base_seed))
                .collect(),
        )?,
    };
    let reused = run_all(
        (0..repetitions)
            .map(|rep| {
                let mut c = template.config(program, policy, rep, base_seed);
                c.init_model = Some(model.clone());
                c
            })
            .collect(),
    )?;
    let improvements: Vec<f64> = fresh
        .iter()
        .zip(&reused)
        .map(|(f, r)| {
            let base = f.final_coverage() as f64;
            100.0 * (r.final_coverage() as f64 - base) / base
        })
        .collect();
    Ok(ReuseReport {
        program: program.name().to_string(),
        policy,
        mean_improvement: mean(&improvements),
        fresh,
        reused,
        improvements,
    })
}

/// Trains on `program`, then compares fresh and initialized campaigns on
/// the same program.
pub fn reusability(
    program: &Arc<ProgramModel>,
    policy: PolicyKind,
    repetitions: u32,
    template: &CampaignTemplate,
    base_seed: u64,
) -> Result<(ModelBundle, ReuseReport)> {
    if repetitions == 0 {
        return Err(Error::Config("at least one repetition is required".into()));
    }
    let model = train_model(program, policy, template, base_seed)?;
    let report = reuse_runs(program, policy, &model, repetitions, template, base_seed, None)?;
    Ok((model, report))
}

#[derive(Clone, Debug, Serialize)]
pub struct TransferMatrix {
    pub programs: Vec<String>,
    pub policy: PolicyKind,
    /// `cells[i][j]`: mean improvement on program `j` of the model trained
    /// on program `i`.
    pub cells: Vec<Vec<f64>>,
}

/// Models transfer from every program (row) to every program (column).
/// `models`, if given, replaces training and must hold one bundle per
/// program in order.
pub fn transferability(
    programs: &[Arc<ProgramModel>],
    policy: PolicyKind,
    repetitions: u32,
    template: &CampaignTemplate,
    base_seed: u64,
    models: Option<Vec<ModelBundle>>,
) -> Result<(Vec<ModelBundle>, TransferMatrix)> {
    if repetitions == 0 {
        return Err(Error::Config("at least one repetition is required".into()));
    }
    let models = match models {
        Some(m) if m.len() != programs.len() => {
            return Err(Error::Config(format!(
                "{} models given for {} programs",
                m.len(),
                programs.len()
            )));
        }
        Some(m) => m,
        None => programs
            .par_iter()
            .map(|p| train_model(p, policy, template, base_seed))
            .collect::<Result<_>>()?,
    };
    let fresh: Vec<Vec<CampaignStats>> = programs
        .iter()
        .map(|p| {
            run_all(
                (0..repetitions)
                    .map(|rep| template.config(p, policy, rep, base_seed))
                    .collect(),
            )
        })
        .collect::<Result<_>>()?;
    let mut cells = vec![vec![0.0; programs.len()]; programs.len()];
    for (i, model) in models.iter().enumerate() {
        for (j, target) in programs.iter().enumerate() {
            let r = reuse_runs(target, policy, model, repetitions, template, base_seed, Some(&fresh[j]))?;
            cells[i][j] = r.mean_improvement;
        }
    }
    Ok((
        models,
        TransferMatrix {
            programs: programs.iter().map(|p| p.name().to_string()).collect(),
            policy,
            cells,
        },
    ))
}

#[derive(Clone, Debug, Serialize)]
pub struct ImportanceRow {
    pub program: String,
    pub examples: usize,
    /// Normalized mean decrease in impurity, in feature order.
    pub importance: Vec<f64>,
}

/// Fits a forest to the labels one `policy` campaign collects on each
/// program and reports its feature importance.
pub fn feature_importance(
    programs: &[Arc<ProgramModel>],
    policy: PolicyKind,
    template: &CampaignTemplate,
    forest: &ForestParams,
    base_seed: u64,
) -> Result<Vec<ImportanceRow>> {
    programs
        .par_iter()
        .map(|p| {
            let stats = run_campaign(&template.config(p, policy, 0, base_seed))?;
            let data: Vec<TrainingExample> = stats
                .matured
                .iter()
                .map(|m| TrainingExample {
                    x: m.features.to_array().to_vec(),
                    y: m.label,
                })
                .collect();
            let importance = if data.is_empty() {
                vec![0.0; FEATURE_DIM]
            } else {
                RandomForestModel::fit(&data, forest.clone(), base_seed)?.feature_importance()?
            };
            Ok(ImportanceRow {
                program: p.name().to_string(),
                examples: data.len(),
                importance,
            })
        })
        .collect()
}
