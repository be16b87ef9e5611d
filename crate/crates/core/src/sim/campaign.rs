use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{concolic_step, fuzzer_epoch_step, FuzzState, InitialSeed, SimParams};
use crate::coordinator::{Coordinator, DispatchRecord, LearningConfig, PolicyKind, SchedulerPolicy, StageTimings};
use crate::error::{Error, Result};
use crate::experiment::CampaignTemplate;
use crate::features::FEATURE_NAMES;
use crate::learning::ModelBundle;
use crate::lineage::{MaturedLabel, Origin, SeedId, Tick};
use crate::program::ProgramModel;

#[derive(Clone, Debug)]
pub struct CampaignConfig {
    pub program: Arc<ProgramModel>,
    pub policy: PolicyKind,
    pub ticks: u64,
    /// Mutations per tick.
    pub fuzzer_epoch: usize,
    pub concolic_budget: u32,
    /// Ticks between dispatch and labeling.
    pub label_window: Tick,
    /// Seeds dispatched per dispatch round.
    pub dispatch_k: usize,
    /// Ticks between dispatch rounds; concolic execution is slower than
    /// fuzzing.
    pub dispatch_interval: u64,
    pub rng_seed: u64,
    pub repetition: u32,
    pub initial_seeds: Vec<InitialSeed>,
    pub learning: LearningConfig,
    pub sim: SimParams,
    /// Trained models to start from instead of a fresh initialization.
    pub init_model: Option<ModelBundle>,
}

impl CampaignConfig {
    /// Default settings for `ticks` ticks of `policy` on `program`.
    pub fn new(program: Arc<ProgramModel>, policy: PolicyKind, ticks: u64, rng_seed: u64) -> Self {
        let mut cfg = CampaignTemplate::default().config(&program, policy, 0, 0);
        cfg.ticks = ticks;
        cfg.rng_seed = rng_seed;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("fuzzer_epoch", self.fuzzer_epoch as u64),
            ("concolic_budget", u64::from(self.concolic_budget)),
            ("label_window", self.label_window),
            ("dispatch_k", self.dispatch_k as u64),
            ("dispatch_interval", self.dispatch_interval),
            ("refit_batch", self.learning.refit_batch as u64),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.initial_seeds.is_empty() {
            return Err(Error::Config("at least one initial seed is required".into()));
        }
        if self.init_model.is_some() && !self.policy.is_learned() {
            return Err(Error::Config(format!("policy {} does not use a model", self.policy)));
        }
        self.learning.forest.validate()?;
        self.sim.validate()
    }
}

/// Mixes a base seed, a program name and a repetition index into the seed
/// of one campaign.
pub fn derive_campaign_seed(base: u64, program: &str, repetition: u32) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update((program.len() as u64).to_le_bytes());
    h.update(program.as_bytes());
    h.update(repetition.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SeedRecord {
    pub id: SeedId,
    pub parent: Option<SeedId>,
    pub origin: Origin,
    pub size: u64,
    pub path_length: usize,
    pub first_new_cov: bool,
    pub created_at: Tick,
}

#[derive(Clone, Debug)]
pub struct CampaignStats {
    pub program: String,
    pub policy: PolicyKind,
    pub repetition: u32,
    pub rng_seed: u64,
    pub initial_coverage: usize,
    /// Covered branches after each tick; entry `t - 1` is tick `t`.
    pub coverage: Vec<usize>,
    pub dispatches: Vec<DispatchRecord>,
    pub matured: Vec<MaturedLabel>,
    pub pending_at_end: usize,
    pub concolic_imports: usize,
    pub timings: StageTimings,
    pub models: Option<ModelBundle>,
    pub seeds: Vec<SeedRecord>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CampaignSummary<'a> {
    pub program: &'a str,
    pub policy: PolicyKind,
    pub repetition: u32,
    pub rng_seed: u64,
    pub ticks: usize,
    pub initial_coverage: usize,
    pub final_coverage: usize,
    pub queue_size: usize,
    pub dispatches: usize,
    pub matured_labels: usize,
    pub pending_labels: usize,
    pub concolic_imports: usize,
    pub timings: &'a StageTimings,
}

impl CampaignStats {
    pub fn final_coverage(&self) -> usize {
        self.coverage.last().copied().unwrap_or(self.initial_coverage)
    }

    pub fn summary(&self) -> CampaignSummary<'_> {
        CampaignSummary {
            program: &self.program,
            policy: self.policy,
            repetition: self.repetition,
            rng_seed: self.rng_seed,
            ticks: self.coverage.len(),
            initial_coverage: self.initial_coverage,
            final_coverage: self.final_coverage(),
            queue_size: self.seeds.len(),
            dispatches: self.dispatches.len(),
            matured_labels: self.matured.len(),
            pending_labels: self.pending_at_end,
            concolic_imports: self.concolic_imports,
            timings: &self.timings,
        }
    }
}

/// Runs one campaign. Every tick: a fuzzer epoch, label maturation and
/// training, dispatch of the top-ranked seeds, concolic execution of each,
/// and import of novel results.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignStats> {
    cfg.validate()?;
    let model = &*cfg.program;
    let mut root = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut fuzz_rng = ChaCha8Rng::seed_from_u64(root.gen());
    let mut concolic_rng = ChaCha8Rng::seed_from_u64(root.gen());
    let policy_seed: u64 = root.gen();

    let policy = match &cfg.init_model {
        Some(b) => SchedulerPolicy::with_models(cfg.policy, b.clone(), cfg.learning.clone(), policy_seed)?,
        None => SchedulerPolicy::new(cfg.policy, cfg.learning.clone(), policy_seed)?,
    };
    let mut coord = Coordinator::new(policy, cfg.label_window);
    let mut state = FuzzState::new(model, &cfg.initial_seeds, &cfg.sim, &mut fuzz_rng)?;
    let initial_coverage = state.coverage().covered_count();
    let mut coverage = Vec::with_capacity(cfg.ticks as usize);
    let mut imports = 0;

    for t in 1..=cfg.ticks {
        fuzzer_epoch_step(&mut state, model, &cfg.sim, cfg.fuzzer_epoch, t, &mut fuzz_rng)?;
        coord.mature_and_train(state.lineage(), t)?;

        if t % cfg.dispatch_interval != 0 {
            coverage.push(state.coverage().covered_count());
            continue;
        }
        let dispatched = {
            let (queue, view, lineage) = state.split_for_dispatch();
            coord.dispatch(queue, cfg.dispatch_k, model, &view, lineage, t)?
        };

        for rec in &dispatched {
            let seed = state.seed(rec.seed).expect("dispatched seed is queued").clone();
            let inputs = concolic_step(
                &seed,
                model,
                state.coverage(),
                cfg.concolic_budget,
                &cfg.sim,
                &mut concolic_rng,
            )?;
            for input in inputs {
                if state
                    .import(seed.id, Origin::ConcolicImport, input.size, input.trace, t)?
                    .is_some()
                {
                    imports += 1;
                }
            }
        }
        coverage.push(state.coverage().covered_count());
    }

    let seeds = state
        .queue()
        .iter()
        .map(|s| SeedRecord {
            id: s.id,
            parent: s.parent,
            origin: s.origin,
            size: s.size,
            path_length: s.trace.len(),
            first_new_cov: s.first_new_cov,
            created_at: s.created_at,
        })
        .collect();
    Ok(CampaignStats {
        program: model.name().to_string(),
        policy: cfg.policy,
        repetition: cfg.repetition,
        rng_seed: cfg.rng_seed,
        initial_coverage,
        coverage,
        dispatches: coord.records().to_vec(),
        matured: coord.matured().to_vec(),
        pending_at_end: coord.pending().len(),
        concolic_imports: imports,
        timings: coord.policy().timings().clone(),
        models: coord.policy().bundle(),
        seeds,
    })
}

/// `tick,policy,program,repetition,covered`, one row per completed tick
/// starting at 1. Initial coverage is in the summary.
pub fn write_stats_csv<W: Write>(out: W, runs: &[CampaignStats]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tick", "policy", "program", "repetition", "covered"])?;
    for r in runs {
        for (i, covered) in r.coverage.iter().enumerate() {
            w.write_record([
                (i + 1).to_string(),
                r.policy.to_string(),
                r.program.clone(),
                r.repetition.to_string(),
                covered.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `tick,seed,policy,score,label`; the label is empty while pending.
pub fn write_dispatch_csv<W: Write>(out: W, run: &CampaignStats) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tick", "seed", "policy", "score", "label"])?;
    for d in &run.dispatches {
        w.write_record([
            d.tick.to_string(),
            d.seed.0.to_string(),
            run.policy.to_string(),
            format!("{}", d.predicted_utility),
            d.label.map(|l| format!("{l}")).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Matured training pairs: the raw features, the label and the tick.
pub fn write_training_csv<W: Write>(out: W, run: &CampaignStats) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = FEATURE_NAMES.to_vec();
    header.extend(["label", "tick"]);
    w.write_record(&header)?;
    for m in &run.matured {
        let mut row: Vec<String> = m.features.to_array().iter().map(|x| format!("{x}")).collect();
        row.push(format!("{}", m.label));
        row.push(m.matured_at.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
