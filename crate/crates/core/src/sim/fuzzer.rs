use std::collections::HashSet;

use rand::Rng;

use super::{alternatives, walk, InitialSeed, Route, SimParams};
use crate::coverage::CoverageStore;
use crate::error::{Error, Result};
use crate::features::FuzzerStateView;
use crate::lineage::{LineageIndex, Origin, Seed, SeedId, Tick};
use crate::program::{BranchId, ProgramModel};

/// The fuzzer's queue with its branch and edge coverage and the lineage of
/// every seed.
pub struct FuzzState {
    queue: Vec<Seed>,
    favored: Vec<usize>,
    coverage: CoverageStore,
    edges: HashSet<(BranchId, BranchId)>,
    lineage: LineageIndex,
}

impl FuzzState {
    pub fn new<R: Rng>(model: &ProgramModel, initial: &[InitialSeed], params: &SimParams, rng: &mut R) -> Result<Self> {
        if initial.is_empty() {
            return Err(Error::Config("at least one initial seed is required".into()));
        }
        let mut state = Self {
            queue: Vec::new(),
            favored: Vec::new(),
            coverage: CoverageStore::new(model),
            edges: HashSet::new(),
            lineage: LineageIndex::new(),
        };
        for s in initial {
            let mut trace = vec![model.entry()];
            walk(model, &mut trace, s.route, params.max_trace_len, rng);
            let size = s.size.max(1);
            state.add(None, Origin::Initial, size, trace, 0)?;
        }
        Ok(state)
    }

    pub fn queue(&self) -> &[Seed] {
        &self.queue
    }

    pub fn seed(&self, id: SeedId) -> Option<&Seed> {
        self.queue.get(id.0 as usize)
    }

    pub fn coverage(&self) -> &CoverageStore {
        &self.coverage
    }

    pub fn lineage(&self) -> &LineageIndex {
        &self.lineage
    }

    pub fn lineage_mut(&mut self) -> &mut LineageIndex {
        &mut self.lineage
    }

    pub fn view(&self) -> FuzzerStateView<'_> {
        FuzzerStateView {
            queue_size: self.queue.len(),
            coverage: &self.coverage,
        }
    }

    /// The queue and coverage for ranking, and the lineage for marking roots.
    pub fn split_for_dispatch(&mut self) -> (&[Seed], FuzzerStateView<'_>, &mut LineageIndex) {
        let view = FuzzerStateView {
            queue_size: self.queue.len(),
            coverage: &self.coverage,
        };
        (&self.queue, view, &mut self.lineage)
    }

    /// Whether `trace` covers a branch or an edge the queue has not seen.
    pub fn novelty(&self, trace: &[BranchId]) -> Option<bool> {
        if self.coverage.count_new(trace) > 0 {
            Some(true)
        } else if trace.windows(2).any(|w| !self.edges.contains(&(w[0], w[1]))) {
            Some(false)
        } else {
            None
        }
    }

    /// Appends a seed and records its coverage. Ids are queue positions.
    pub fn add(
        &mut self,
        parent: Option<SeedId>,
        origin: Origin,
        size: u64,
        trace: Vec<BranchId>,
        created_at: Tick,
    ) -> Result<SeedId> {
        let id = SeedId(self.queue.len() as u64);
        let new = self.coverage.count_new(&trace) > 0;
        let seed = Seed {
            id,
            parent,
            origin,
            size,
            trace,
            first_new_cov: new,
            created_at,
        };
        self.lineage.record_seed(&seed)?;
        self.coverage.mark_covered(&seed.trace)?;
        self.edges.extend(seed.trace.windows(2).map(|w| (w[0], w[1])));
        if new {
            self.favored.push(self.queue.len());
        }
        self.queue.push(seed);
        Ok(id)
    }

    /// Adds `trace` if it is novel; returns the new id.
    pub fn import(
        &mut self,
        parent: SeedId,
        origin: Origin,
        size: u64,
        trace: Vec<BranchId>,
        created_at: Tick,
    ) -> Result<Option<SeedId>> {
        match self.novelty(&trace) {
            Some(_) => self.add(Some(parent), origin, size, trace, created_at).map(Some),
            None => Ok(None),
        }
    }
}

/// One epoch of `budget` mutations. Each picks a parent, flips one branch
/// decision and keeps the child if it reaches a new branch or edge. Returns
/// the ids of the seeds added.
pub fn fuzzer_epoch_step<R: Rng>(
    state: &mut FuzzState,
    model: &ProgramModel,
    params: &SimParams,
    budget: usize,
    tick: Tick,
    rng: &mut R,
) -> Result<Vec<SeedId>> {
    let mut added = Vec::new();
    let mut alts = Vec::new();
    for _ in 0..budget {
        let parent = if !state.favored.is_empty() && rng.gen_bool(params.favored_prob) {
            state.favored[rng.gen_range(0..state.favored.len())]
        } else {
            rng.gen_range(0..state.queue.len())
        };
        let p = &state.queue[parent];
        let i = rng.gen_range(0..p.trace.len());
        alts.clear();
        alts.extend(alternatives(model, &p.trace, i));
        if alts.is_empty() {
            continue;
        }
        let target = alts[rng.gen_range(0..alts.len())];
        if !rng.gen_bool(params.flip_probability(model.annotation(target).hardness)) {
            continue;
        }
        let mut trace = p.trace[..=i].to_vec();
        trace.push(target);
        walk(model, &mut trace, Route::Random, params.max_trace_len, rng);
        let size = (p.size + rng.gen_range(0..=params.max_growth)).max(trace.len() as u64);
        let parent_id = p.id;
        if let Some(id) = state.import(parent_id, Origin::FuzzerMutation, size, trace, tick)? {
            added.push(id);
        }
    }
    Ok(added)
}
