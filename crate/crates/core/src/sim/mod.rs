//! A discrete-time hybrid fuzzing simulator over a [`ProgramModel`].
//!
//! Inputs are identified with the branch trace they produce. The fuzzer
//! mutates queued inputs by flipping one branch decision; Easy branches
//! flip with a fixed probability, Hard branches with `2^-w` for magic width
//! `w`. The concolic executor flips uncovered alternatives along a trace
//! until its constraint budget runs out.

mod campaign;
mod concolic;
mod fuzzer;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::program::{BranchId, Hardness, ProgramModel};

pub use campaign::{
    derive_campaign_seed, run_campaign, write_dispatch_csv, write_stats_csv, write_training_csv, CampaignConfig,
    CampaignStats, SeedRecord,
};
pub use concolic::{concolic_step, ConcolicInput};
pub use fuzzer::{fuzzer_epoch_step, FuzzState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    /// Chance that one mutation flips an Easy branch as intended.
    pub p_easy: f64,
    /// Chance that one external call defeats constraint solving.
    pub p_ext: f64,
    /// Chance that the fuzzer picks its next parent among the seeds that
    /// found new branches.
    pub favored_prob: f64,
    /// Bytes a mutation may append, inclusive.
    pub max_growth: u64,
    pub max_trace_len: usize,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            p_easy: 0.2,
            p_ext: 0.3,
            favored_prob: 0.75,
            max_growth: 4,
            max_trace_len: 4096,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_easy", self.p_easy),
            ("p_ext", self.p_ext),
            ("favored_prob", self.favored_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if self.max_trace_len == 0 {
            return Err(Error::Config("max_trace_len must be at least 1".into()));
        }
        Ok(())
    }

    /// Probability that the fuzzer steers execution into `b`.
    pub fn flip_probability(&self, hardness: Hardness) -> f64 {
        match hardness {
            Hardness::Easy => self.p_easy,
            Hardness::Hard { magic_width } => 0.5f64.powi(i32::from(magic_width)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    /// Always the first Easy successor.
    Default,
    /// A uniformly chosen Easy successor at every step.
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSeed {
    pub size: u64,
    pub route: Route,
}

impl Default for InitialSeed {
    /// A short input of four blank bytes.
    fn default() -> Self {
        Self {
            size: 4,
            route: Route::Default,
        }
    }
}

/// Extends `trace` from its last branch, taking Easy successors until none
/// is left or the length cap is hit.
pub(crate) fn walk<R: Rng>(model: &ProgramModel, trace: &mut Vec<BranchId>, route: Route, max_len: usize, rng: &mut R) {
    let mut easy = Vec::new();
    while trace.len() < max_len {
        let last = *trace.last().expect("walk starts from a non-empty trace");
        easy.clear();
        easy.extend(
            model
                .successors(last)
                .iter()
                .copied()
                .filter(|s| !model.annotation(*s).hardness.is_hard()),
        );
        let next = match route {
            Route::Default => easy.first().copied(),
            Route::Random => easy.choose(rng).copied(),
        };
        match next {
            Some(b) => trace.push(b),
            None => break,
        }
    }
}

/// Successors of `trace[i]` other than the one the trace takes next.
pub(crate) fn alternatives<'a>(
    model: &'a ProgramModel,
    trace: &[BranchId],
    i: usize,
) -> impl Iterator<Item = BranchId> + 'a {
    let taken = trace.get(i + 1).copied();
    model
        .successors(trace[i])
        .iter()
        .copied()
        .filter(move |s| Some(*s) != taken)
}
