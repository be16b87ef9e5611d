//! Learned seed scheduling for hybrid fuzzing.
//!
//! A coordinator sits between a coverage-guided fuzzer and a concolic
//! executor. It ranks the fuzzer's queue by predicted utility, sends the
//! best seeds to concolic execution, and learns from how large a descendant
//! tree each dispatched seed grows. The fuzzer and executor are simulated
//! over synthetic program models.

pub mod config;
pub mod coordinator;
pub mod coverage;
pub mod error;
pub mod experiment;
pub mod features;
pub mod learning;
pub mod lineage;
pub mod program;
pub mod sim;
pub mod stats;
mod union_find;

pub use coordinator::{Coordinator, LearningConfig, PolicyKind, SchedulerPolicy};
pub use coverage::CoverageStore;
pub use error::{Error, Result};
pub use features::{extract_features, FeatureVector, FuzzerStateView, FEATURE_DIM, FEATURE_NAMES};
pub use lineage::{LineageIndex, Seed, SeedId, Tick};
pub use program::{BranchId, ProgramModel, ProgramSource};
pub use sim::{run_campaign, CampaignConfig, CampaignStats};
pub use union_find::DisjointSet;
