//! The scheduling loop between fuzzer and concolic executor: rank the queue
//! by predicted utility, dispatch the best undispatched seeds, and train
//! the models on labels as they mature.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{extract_features, transform_for_linear, FeatureVector, FuzzerStateView, FEATURE_DIM};
use crate::learning::{
    ensemble_predict, ForestParams, ModelBundle, ModelKind, OnlineLinearModel, RandomForestModel, TrainingExample,
};
use crate::lineage::{mature_labels, LineageIndex, MaturedLabel, PendingLabel, Seed, SeedId, Tick};
use crate::program::ProgramModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PolicyKind {
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "afl", alias = "heuristic-afl")]
    HeuristicAfl,
    #[serde(rename = "meuzz-ol")]
    MeuzzOl,
    #[serde(rename = "meuzz-rf")]
    MeuzzRf,
    #[serde(rename = "meuzz-en")]
    MeuzzEn,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::Random,
        PolicyKind::HeuristicAfl,
        PolicyKind::MeuzzOl,
        PolicyKind::MeuzzRf,
        PolicyKind::MeuzzEn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Random => "random",
            PolicyKind::HeuristicAfl => "afl",
            PolicyKind::MeuzzOl => "meuzz-ol",
            PolicyKind::MeuzzRf => "meuzz-rf",
            PolicyKind::MeuzzEn => "meuzz-en",
        }
    }

    pub fn is_learned(self) -> bool {
        matches!(self, PolicyKind::MeuzzOl | PolicyKind::MeuzzRf | PolicyKind::MeuzzEn)
    }

    fn uses_linear(self) -> bool {
        matches!(self, PolicyKind::MeuzzOl | PolicyKind::MeuzzEn)
    }

    fn uses_forest(self) -> bool {
        matches!(self, PolicyKind::MeuzzRf | PolicyKind::MeuzzEn)
    }

    pub fn model_kind(self) -> Option<ModelKind> {
        match self {
            PolicyKind::MeuzzOl => Some(ModelKind::Online),
            PolicyKind::MeuzzRf => Some(ModelKind::Forest),
            PolicyKind::MeuzzEn => Some(ModelKind::Ensemble),
            _ => None,
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(PolicyKind::Random),
            "afl" | "heuristic-afl" => Ok(PolicyKind::HeuristicAfl),
            "meuzz-ol" | "ol" => Ok(PolicyKind::MeuzzOl),
            "meuzz-rf" | "rf" => Ok(PolicyKind::MeuzzRf),
            "meuzz-en" | "en" => Ok(PolicyKind::MeuzzEn),
            other => Err(Error::Config(format!(
                "unknown policy `{other}` (expected one of random, afl, meuzz-ol, meuzz-rf, meuzz-en)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningConfig {
    pub lambda: f64,
    pub forest: ForestParams,
    /// Matured labels collected between forest refits.
    pub refit_batch: usize,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            forest: ForestParams::default(),
            refit_batch: 16,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimer {
    pub total_ns: u64,
    pub count: u64,
}

impl StageTimer {
    fn record(&mut self, start: Instant, items: u64) {
        self.total_ns += start.elapsed().as_nanos() as u64;
        self.count += items;
    }

    pub fn mean_ns(&self) -> Option<f64> {
        (self.count > 0).then(|| self.total_ns as f64 / self.count as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingLogPoint {
    pub tick: Tick,
    pub online_update_mean_ns: Option<f64>,
    pub offline_refit_mean_ns: Option<f64>,
    pub extraction_mean_ns: Option<f64>,
}

/// Wall-clock cost of each learning stage; one log point per forest refit.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub extraction: StageTimer,
    pub prediction: StageTimer,
    pub online_update: StageTimer,
    pub offline_refit: StageTimer,
    pub log: Vec<TimingLogPoint>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankedSeed {
    pub id: SeedId,
    pub score: f64,
    pub features: Option<FeatureVector>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeedbackOutcome {
    /// The policy has no model to train.
    Ignored,
    Trained {
        online_updates: usize,
        refit: bool,
    },
}

pub struct SchedulerPolicy {
    kind: PolicyKind,
    config: LearningConfig,
    linear: Option<OnlineLinearModel>,
    forest: Option<RandomForestModel>,
    rng: ChaCha8Rng,
    forest_seed: u64,
    training: Vec<TrainingExample>,
    since_refit: usize,
    refits: u64,
    timings: StageTimings,
}

impl SchedulerPolicy {
    pub fn new(kind: PolicyKind, config: LearningConfig, rng_seed: u64) -> Result<Self> {
        if config.refit_batch == 0 {
            return Err(Error::Config("refit_batch must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let linear_seed: u64 = rng.gen();
        let forest_seed: u64 = rng.gen();
        let linear = kind
            .uses_linear()
            .then(|| OnlineLinearModel::new(FEATURE_DIM, config.lambda, linear_seed))
            .transpose()?;
        let forest = kind
            .uses_forest()
            .then(|| RandomForestModel::unfitted(FEATURE_DIM, config.forest.clone(), forest_seed))
            .transpose()?;
        Ok(Self {
            kind,
            config,
            linear,
            forest,
            rng,
            forest_seed,
            training: Vec::new(),
            since_refit: 0,
            refits: 0,
            timings: StageTimings::default(),
        })
    }

    /// Starts from previously trained models. The bundle must contain every
    /// sub-model the policy uses; an ensemble policy accepts a linear-only
    /// bundle and starts its forest unfitted.
    pub fn with_models(kind: PolicyKind, bundle: ModelBundle, config: LearningConfig, rng_seed: u64) -> Result<Self> {
        let mut policy = Self::new(kind, config, rng_seed)?;
        if !kind.is_learned() {
            return Err(Error::Config(format!("policy {kind} does not use a model")));
        }
        if bundle.dim() != FEATURE_DIM {
            return Err(Error::Dimension {
                expected: FEATURE_DIM,
                got: bundle.dim(),
            });
        }
        let (_, linear, forest) = bundle.into_parts();
        if kind.uses_linear() {
            policy.linear =
                Some(linear.ok_or_else(|| Error::Config(format!("policy {kind} needs a linear model in the bundle")))?);
        }
        if kind.uses_forest() {
            match forest {
                Some(f) => policy.forest = Some(f),
                None if kind == PolicyKind::MeuzzEn => {}
                None => {
                    return Err(Error::Config(format!("policy {kind} needs a forest in the bundle")));
                }
            }
        }
        Ok(policy)
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn linear(&self) -> Option<&OnlineLinearModel> {
        self.linear.as_ref()
    }

    pub fn forest(&self) -> Option<&RandomForestModel> {
        self.forest.as_ref()
    }

    pub fn refits(&self) -> u64 {
        self.refits
    }

    pub fn training_examples(&self) -> usize {
        self.training.len()
    }

    pub fn timings(&self) -> &StageTimings {
        &self.timings
    }

    /// Current models, if the policy has any.
    pub fn bundle(&self) -> Option<ModelBundle> {
        let kind = self.kind.model_kind()?;
        ModelBundle::new(kind, self.linear.clone(), self.forest.clone(), None).ok()
    }

    fn predict(&self, v: &FeatureVector) -> f64 {
        match self.kind {
            PolicyKind::MeuzzOl => self
                .linear
                .as_ref()
                .map_or(0.0, |l| l.predict(&transform_for_linear(v))),
            PolicyKind::MeuzzRf => self
                .forest
                .as_ref()
                .and_then(|f| f.predict(&v.to_array()).ok())
                .unwrap_or(0.0),
            PolicyKind::MeuzzEn => match &self.linear {
                Some(l) => ensemble_predict(l, self.forest.as_ref(), v).value,
                None => 0.0,
            },
            _ => 0.0,
        }
    }

    /// Scores `queue` and returns it best-first; ties go to the lower id.
    /// Learned policies attach the features they scored.
    pub fn rank_queue(
        &mut self,
        queue: &[&Seed],
        model: &ProgramModel,
        state: &FuzzerStateView<'_>,
    ) -> Result<Vec<RankedSeed>> {
        let mut ranked = Vec::with_capacity(queue.len());
        match self.kind {
            PolicyKind::Random => {
                for s in queue {
                    ranked.push(RankedSeed {
                        id: s.id,
                        score: self.rng.gen(),
                        features: None,
                    });
                }
            }
            PolicyKind::HeuristicAfl => {
                // New coverage first, then smaller inputs.
                const SIZE_SPAN: u64 = 1 << 40;
                for s in queue {
                    let flag = if s.first_new_cov { SIZE_SPAN as f64 } else { 0.0 };
                    let small = (SIZE_SPAN - 1 - s.size.min(SIZE_SPAN - 1)) as f64;
                    ranked.push(RankedSeed {
                        id: s.id,
                        score: flag + small,
                        features: None,
                    });
                }
            }
            _ => {
                let start = Instant::now();
                let features = queue
                    .iter()
                    .map(|s| extract_features(s, model, state))
                    .collect::<Result<Vec<_>>>()?;
                self.timings.extraction.record(start, queue.len() as u64);
                let start = Instant::now();
                for (s, v) in queue.iter().zip(features) {
                    ranked.push(RankedSeed {
                        id: s.id,
                        score: self.predict(&v),
                        features: Some(v),
                    });
                }
                self.timings.prediction.record(start, queue.len() as u64);
            }
        }
        ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.id.cmp(&b.id)));
        Ok(ranked)
    }

    /// Trains on matured `(features, label)` pairs in order.
    pub fn feedback(&mut self, matured: &[MaturedLabel], tick: Tick) -> Result<FeedbackOutcome> {
        if !self.kind.is_learned() {
            return Ok(FeedbackOutcome::Ignored);
        }
        let mut online_updates = 0;
        let mut refit = false;
        for m in matured {
            if let Some(l) = &mut self.linear {
                let start = Instant::now();
                l.update(&transform_for_linear(&m.features), m.label)?;
                self.timings.online_update.record(start, 1);
                online_updates += 1;
            }
            if self.forest.is_some() {
                self.training.push(TrainingExample {
                    x: m.features.to_array().to_vec(),
                    y: m.label,
                });
                self.since_refit += 1;
                if self.since_refit >= self.config.refit_batch {
                    self.refit()?;
                    refit = true;
                    self.timings.log.push(TimingLogPoint {
                        tick,
                        online_update_mean_ns: self.timings.online_update.mean_ns(),
                        offline_refit_mean_ns: self.timings.offline_refit.mean_ns(),
                        extraction_mean_ns: self.timings.extraction.mean_ns(),
                    });
                }
            }
        }
        Ok(FeedbackOutcome::Trained { online_updates, refit })
    }

    fn refit(&mut self) -> Result<()> {
        let start = Instant::now();
        let seed = self.forest_seed.wrapping_add(self.refits);
        let forest = RandomForestModel::fit(&self.training, self.config.forest.clone(), seed)?;
        self.timings.offline_refit.record(start, 1);
        self.forest = Some(forest);
        self.since_refit = 0;
        self.refits += 1;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DispatchRecord {
    pub seed: SeedId,
    pub predicted_utility: f64,
    pub tick: Tick,
    pub features: FeatureVector,
    /// Filled in once the seed's label matures.
    pub label: Option<f64>,
}

/// Dispatch bookkeeping for one campaign.
pub struct Coordinator {
    policy: SchedulerPolicy,
    window: Tick,
    dispatched: HashSet<SeedId>,
    pending: Vec<PendingLabel>,
    records: Vec<DispatchRecord>,
    record_of: HashMap<SeedId, usize>,
    matured: Vec<MaturedLabel>,
}

impl Coordinator {
    pub fn new(policy: SchedulerPolicy, window: Tick) -> Self {
        Self {
            policy,
            window,
            dispatched: HashSet::new(),
            pending: Vec::new(),
            records: Vec::new(),
            record_of: HashMap::new(),
            matured: Vec::new(),
        }
    }

    pub fn policy(&self) -> &SchedulerPolicy {
        &self.policy
    }

    pub fn records(&self) -> &[DispatchRecord] {
        &self.records
    }

    pub fn pending(&self) -> &[PendingLabel] {
        &self.pending
    }

    pub fn matured(&self) -> &[MaturedLabel] {
        &self.matured
    }

    pub fn is_dispatched(&self, id: SeedId) -> bool {
        self.dispatched.contains(&id)
    }

    /// Sends the top `k` undispatched seeds to concolic execution: marks
    /// them dispatched and as lineage roots, and queues a pending label for
    /// each.
    #[allow(clippy::too_many_arguments)]
    pub fn dispatch(
        &mut self,
        queue: &[Seed],
        k: usize,
        model: &ProgramModel,
        state: &FuzzerStateView<'_>,
        lineage: &mut LineageIndex,
        tick: Tick,
    ) -> Result<Vec<DispatchRecord>> {
        if k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        let eligible: Vec<&Seed> = queue.iter().filter(|s| !self.dispatched.contains(&s.id)).collect();
        if eligible.is_empty() {
            return Ok(Vec::new());
        }
        let ranked = self.policy.rank_queue(&eligible, model, state)?;
        let by_id: HashMap<SeedId, &Seed> = eligible.iter().map(|s| (s.id, *s)).collect();
        let mut out = Vec::with_capacity(k.min(ranked.len()));
        for r in ranked.into_iter().take(k) {
            let features = match r.features {
                Some(f) => f,
                None => {
                    let start = Instant::now();
                    let f = extract_features(by_id[&r.id], model, state)?;
                    self.policy.timings.extraction.record(start, 1);
                    f
                }
            };
            lineage.mark_root(r.id)?;
            self.dispatched.insert(r.id);
            self.pending.push(PendingLabel::new(r.id, features, tick, self.window));
            let rec = DispatchRecord {
                seed: r.id,
                predicted_utility: r.score,
                tick,
                features,
                label: None,
            };
            self.record_of.insert(r.id, self.records.len());
            self.records.push(rec.clone());
            out.push(rec);
        }
        Ok(out)
    }

    /// Labels every pending dispatch whose window has elapsed and feeds the
    /// pairs to the policy.
    pub fn mature_and_train(&mut self, lineage: &LineageIndex, now: Tick) -> Result<usize> {
        let matured = mature_labels(&mut self.pending, lineage, now)?;
        for m in &matured {
            if let Some(&i) = self.record_of.get(&m.root) {
                self.records[i].label = Some(m.label);
            }
        }
        self.policy.feedback(&matured, now)?;
        let n = matured.len();
        self.matured.extend(matured);
        Ok(n)
    }
}
