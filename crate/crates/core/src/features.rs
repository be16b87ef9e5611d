//! Utility features of a seed.
//!
//! Ten counts, always in this order: reachable sanitizer checks, reached
//! sanitizer checks, undiscovered neighbor branches, external calls,
//! comparison instructions, indirect calls, path length, input size, the
//! first-new-coverage flag and the queue size at query time.
//!
//! Sanitizer-check features are summed over the distinct branches of the
//! trace. Instruction counts and path length use raw trace occurrences.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::coverage::CoverageStore;
use crate::error::{Error, Result};
use crate::lineage::Seed;
use crate::program::{BranchId, ProgramModel};

pub const FEATURE_DIM: usize = 10;

pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "reachable_labels",
    "reached_labels",
    "undiscovered_neighbors",
    "external_calls",
    "cmp_count",
    "indirect_calls",
    "path_length",
    "input_size",
    "first_new_cov",
    "queue_size",
];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureVector {
    pub reachable_labels: u64,
    pub reached_labels: u64,
    pub undiscovered_neighbors: u64,
    pub external_calls: u64,
    pub cmp_count: u64,
    pub indirect_calls: u64,
    pub path_length: u64,
    pub input_size: u64,
    pub first_new_cov: bool,
    pub queue_size: u64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; FEATURE_DIM] {
        [
            self.reachable_labels as f64,
            self.reached_labels as f64,
            self.undiscovered_neighbors as f64,
            self.external_calls as f64,
            self.cmp_count as f64,
            self.indirect_calls as f64,
            self.path_length as f64,
            self.input_size as f64,
            if self.first_new_cov { 1.0 } else { 0.0 },
            self.queue_size as f64,
        ]
    }
}

/// Fuzzer state visible to the extractor at query time.
#[derive(Clone, Copy)]
pub struct FuzzerStateView<'a> {
    pub queue_size: usize,
    pub coverage: &'a CoverageStore,
}

/// Computes the feature vector of `seed`. Reads only branch annotations,
/// coverage and seed metadata.
pub fn extract_features(seed: &Seed, model: &ProgramModel, state: &FuzzerStateView<'_>) -> Result<FeatureVector> {
    if seed.trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    model.check_trace(&seed.trace)?;
    if state.coverage.branch_count() != model.branch_count() {
        return Err(Error::Dimension {
            expected: model.branch_count(),
            got: state.coverage.branch_count(),
        });
    }

    let mut v = FeatureVector {
        path_length: seed.trace.len() as u64,
        input_size: seed.size,
        first_new_cov: seed.first_new_cov,
        queue_size: state.queue_size as u64,
        ..FeatureVector::default()
    };
    for &b in &seed.trace {
        let a = model.annotation(b);
        v.external_calls += u64::from(a.external_calls);
        v.cmp_count += u64::from(a.cmp_count);
        v.indirect_calls += u64::from(a.indirect_calls);
    }

    let mut distinct: Vec<BranchId> = seed.trace.clone();
    distinct.sort_unstable();
    distinct.dedup();
    for b in distinct {
        let a = model.annotation(b);
        v.reachable_labels += u64::from(a.reachable_labels);
        v.reached_labels += u64::from(a.local_labels);
        v.undiscovered_neighbors += u64::from(state.coverage.uncovered_neighbors_of(b));
    }
    Ok(v)
}

/// `ln(1 + x)` on every count; the first-new-coverage flag passes through.
pub fn transform_for_linear(v: &FeatureVector) -> [f64; FEATURE_DIM] {
    log_scale(v.to_array())
}

/// [`transform_for_linear`] on a raw feature array.
pub fn log_scale(mut raw: [f64; FEATURE_DIM]) -> [f64; FEATURE_DIM] {
    for (i, x) in raw.iter_mut().enumerate() {
        if i != FIRST_NEW_COV {
            *x = x.ln_1p();
        }
    }
    raw
}

const FIRST_NEW_COV: usize = 8;

pub fn feature_csv_header() -> Vec<&'static str> {
    FEATURE_NAMES.to_vec()
}

/// Writes feature vectors as CSV rows under the fixed header.
pub fn write_feature_csv<W: Write>(out: W, rows: &[FeatureVector]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FEATURE_NAMES)?;
    for v in rows {
        w.write_record(v.to_array().iter().map(|x| format!("{x}")))?;
    }
    w.flush()?;
    Ok(())
}
