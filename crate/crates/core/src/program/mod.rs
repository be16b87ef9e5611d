//! Synthetic target programs.
//!
//! A [`ProgramModel`] stands in for an instrumented binary: a directed
//! successor graph over branch sites, with the static annotations the
//! scheduler's features are computed from (sanitizer checks, comparison and
//! call counts) and a hardness ground truth the simulator uses to decide how
//! easily a mutation can flip a branch.

mod file;
mod generate;
mod reach;
mod source;

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use file::{from_toml_str, load_program, save_program, to_toml_string, PROGRAM_FORMAT_VERSION};
pub use generate::{generate_program, preset, preset_names, AnnotationRanges, GenParams, Layout, PRESETS};
pub use reach::reachable_label_table;
pub use source::ProgramSource;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BranchId(pub u32);

impl BranchId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for BranchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Hardness {
    Easy,
    /// A magic-value comparison that random mutation satisfies with
    /// probability `2^-magic_width`.
    Hard {
        magic_width: u8,
    },
}

impl Hardness {
    pub fn is_hard(self) -> bool {
        matches!(self, Hardness::Hard { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchAnnotation {
    /// Sanitizer checks statically reachable from this branch, itself
    /// included. Derived from the successor graph when the model is built.
    #[serde(default)]
    pub reachable_labels: u32,
    /// Sanitizer checks sitting directly on this branch.
    pub local_labels: u32,
    pub cmp_count: u32,
    pub external_calls: u32,
    pub indirect_calls: u32,
    pub hardness: Hardness,
}

impl BranchAnnotation {
    pub fn easy() -> Self {
        Self {
            reachable_labels: 0,
            local_labels: 0,
            cmp_count: 0,
            external_calls: 0,
            indirect_calls: 0,
            hardness: Hardness::Easy,
        }
    }
}

/// Branches stemming from one conditional statement.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConditionalGroup {
    pub members: Vec<BranchId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProgramModel {
    name: String,
    gen_seed: u64,
    branches: Vec<BranchAnnotation>,
    groups: Vec<ConditionalGroup>,
    successors: Vec<Vec<BranchId>>,
    entry: BranchId,
    group_of: Vec<Option<u32>>,
}

impl ProgramModel {
    /// Validates the parts and computes the reachable-label annotation of
    /// every branch.
    pub fn new(
        name: impl Into<String>,
        gen_seed: u64,
        mut branches: Vec<BranchAnnotation>,
        groups: Vec<ConditionalGroup>,
        successors: Vec<Vec<BranchId>>,
        entry: BranchId,
    ) -> Result<Self> {
        let n = branches.len();
        if n == 0 {
            return Err(Error::InvalidProgram("program has no branches".into()));
        }
        if successors.len() != n {
            return Err(Error::InvalidProgram(format!(
                "{} successor lists for {} branches",
                successors.len(),
                n
            )));
        }
        let check = |b: BranchId| {
            if b.index() < n {
                Ok(())
            } else {
                Err(Error::BranchOutOfRange { id: b.0, count: n })
            }
        };
        check(entry)?;
        for succ in &successors {
            for &s in succ {
                check(s)?;
            }
        }
        let mut group_of = vec![None; n];
        for (gi, group) in groups.iter().enumerate() {
            if group.members.len() < 2 {
                return Err(Error::InvalidProgram(format!("group {gi} has fewer than two members")));
            }
            for &m in &group.members {
                check(m)?;
                if group_of[m.index()].replace(gi as u32).is_some() {
                    return Err(Error::InvalidProgram(format!("{m} belongs to two groups")));
                }
            }
        }

        let mut seen = vec![false; n];
        let mut work = VecDeque::from([entry]);
        seen[entry.index()] = true;
        while let Some(b) = work.pop_front() {
            for &s in &successors[b.index()] {
                if !std::mem::replace(&mut seen[s.index()], true) {
                    work.push_back(s);
                }
            }
        }
        if let Some(orphan) = seen.iter().position(|&s| !s) {
            return Err(Error::InvalidProgram(format!(
                "b{orphan} is not reachable from the entry"
            )));
        }

        let table = reachable_label_table(&branches, &successors);
        for (ann, reach) in branches.iter_mut().zip(table) {
            ann.reachable_labels = reach;
        }

        Ok(Self {
            name: name.into(),
            gen_seed,
            branches,
            groups,
            successors,
            entry,
            group_of,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn gen_seed(&self) -> u64 {
        self.gen_seed
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    pub fn entry(&self) -> BranchId {
        self.entry
    }

    pub fn branches(&self) -> &[BranchAnnotation] {
        &self.branches
    }

    pub fn annotation(&self, b: BranchId) -> &BranchAnnotation {
        &self.branches[b.index()]
    }

    pub fn groups(&self) -> &[ConditionalGroup] {
        &self.groups
    }

    pub fn group_of(&self, b: BranchId) -> Option<&ConditionalGroup> {
        self.group_of[b.index()].map(|g| &self.groups[g as usize])
    }

    pub fn successors(&self, b: BranchId) -> &[BranchId] {
        &self.successors[b.index()]
    }

    pub fn all_successors(&self) -> &[Vec<BranchId>] {
        &self.successors
    }

    /// Reachable-label counts per branch, in `BranchId` order.
    pub fn reachable_labels(&self) -> Vec<u32> {
        self.branches.iter().map(|a| a.reachable_labels).collect()
    }

    pub fn contains(&self, b: BranchId) -> bool {
        b.index() < self.branches.len()
    }

    pub fn check_trace(&self, trace: &[BranchId]) -> Result<()> {
        match trace.iter().find(|b| !self.contains(**b)) {
            Some(b) => Err(Error::BranchOutOfRange {
                id: b.0,
                count: self.branch_count(),
            }),
            None => Ok(()),
        }
    }

    pub fn summary(&self) -> ProgramSummary {
        let guarded = self.guarded_branches();
        let hard = self.branches.iter().filter(|a| a.hardness.is_hard()).count();
        let total_labels = self.branches.iter().map(|a| a.local_labels as u64).sum();
        let guarded_labels = self
            .branches
            .iter()
            .zip(&guarded)
            .filter(|(_, g)| **g)
            .map(|(a, _)| a.local_labels as u64)
            .sum();
        ProgramSummary {
            name: self.name.clone(),
            gen_seed: self.gen_seed,
            branches: self.branch_count(),
            groups: self.groups.len(),
            hard_branches: hard,
            guarded_branches: guarded.iter().filter(|g| **g).count(),
            total_labels,
            guarded_labels,
        }
    }

    /// Branches that cannot be reached from the entry without passing
    /// through a Hard branch.
    pub fn guarded_branches(&self) -> Vec<bool> {
        let n = self.branch_count();
        let mut open = vec![false; n];
        if self.annotation(self.entry).hardness.is_hard() {
            return vec![true; n];
        }
        let mut work = vec![self.entry];
        open[self.entry.index()] = true;
        while let Some(b) = work.pop() {
            for &s in self.successors(b) {
                if !open[s.index()] && !self.annotation(s).hardness.is_hard() {
                    open[s.index()] = true;
                    work.push(s);
                }
            }
        }
        open.into_iter().map(|o| !o).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramSummary {
    pub name: String,
    pub gen_seed: u64,
    pub branches: usize,
    pub groups: usize,
    pub hard_branches: usize,
    pub guarded_branches: usize,
    pub total_labels: u64,
    pub guarded_labels: u64,
}

impl fmt::Display for ProgramSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "program:          {}", self.name)?;
        writeln!(f, "gen seed:         {}", self.gen_seed)?;
        writeln!(f, "branches:         {}", self.branches)?;
        writeln!(f, "groups:           {}", self.groups)?;
        writeln!(f, "hard branches:    {}", self.hard_branches)?;
        writeln!(f, "guarded branches: {}", self.guarded_branches)?;
        writeln!(f, "labels:           {}", self.total_labels)?;
        write!(f, "guarded labels:   {}", self.guarded_labels)
    }
}
