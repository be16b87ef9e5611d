//! Branch coverage bookkeeping shared by the fuzzer, the concolic executor
//! and the feature engine.

use crate::error::{Error, Result};
use crate::program::{BranchId, ProgramModel};
use crate::union_find::DisjointSet;

/// Covered-branch bitset plus a union-find index from each branch to its
/// conditional group, with a running count of uncovered members per group.
#[derive(Clone, Debug)]
pub struct CoverageStore {
    covered: Vec<u64>,
    count: usize,
    len: usize,
    rep: Vec<u32>,
    uncovered_in_set: Vec<u32>,
}

impl CoverageStore {
    pub fn new(model: &ProgramModel) -> Self {
        let len = model.branch_count();
        let mut sets = DisjointSet::new(len);
        for g in model.groups() {
            for pair in g.members.windows(2) {
                sets.union(pair[0].index(), pair[1].index());
            }
        }
        let rep = sets.representatives();
        let mut uncovered_in_set = vec![0u32; len];
        for &r in &rep {
            uncovered_in_set[r as usize] += 1;
        }
        Self {
            covered: vec![0; len.div_ceil(64)],
            count: 0,
            len,
            rep,
            uncovered_in_set,
        }
    }

    pub fn branch_count(&self) -> usize {
        self.len
    }

    pub fn covered_count(&self) -> usize {
        self.count
    }

    #[inline]
    pub fn is_covered(&self, b: BranchId) -> bool {
        let i = b.index();
        self.covered[i / 64] & (1 << (i % 64)) != 0
    }

    fn check(&self, trace: &[BranchId]) -> Result<()> {
        match trace.iter().find(|b| b.index() >= self.len) {
            Some(b) => Err(Error::BranchOutOfRange {
                id: b.0,
                count: self.len,
            }),
            None => Ok(()),
        }
    }

    /// Marks every branch on `trace` covered and returns how many were new.
    /// The store is left untouched if any id is out of range.
    pub fn mark_covered(&mut self, trace: &[BranchId]) -> Result<usize> {
        self.check(trace)?;
        let mut added = 0;
        for &b in trace {
            let i = b.index();
            let mask = 1 << (i % 64);
            if self.covered[i / 64] & mask == 0 {
                self.covered[i / 64] |= mask;
                self.uncovered_in_set[self.rep[i] as usize] -= 1;
                added += 1;
            }
        }
        self.count += added;
        Ok(added)
    }

    /// Number of branches on `trace` that are not yet covered, counted once.
    pub fn count_new(&self, trace: &[BranchId]) -> usize {
        let mut seen: Vec<u32> = trace
            .iter()
            .filter(|b| b.index() < self.len && !self.is_covered(**b))
            .map(|b| b.0)
            .collect();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }

    /// Uncovered group siblings of `b`.
    #[inline]
    pub fn uncovered_neighbors_of(&self, b: BranchId) -> u32 {
        let i = b.index();
        let in_set = self.uncovered_in_set[self.rep[i] as usize];
        in_set - u32::from(!self.is_covered(b))
    }

    /// Sum over the distinct branches of `trace` of their uncovered group
    /// siblings. Ids out of range are skipped.
    pub fn undiscovered_neighbors(&self, trace: &[BranchId]) -> u64 {
        let mut distinct: Vec<BranchId> = trace.iter().copied().filter(|b| b.index() < self.len).collect();
        distinct.sort_unstable();
        distinct.dedup();
        distinct
            .into_iter()
            .map(|b| u64::from(self.uncovered_neighbors_of(b)))
            .sum()
    }

    pub fn covered_branches(&self) -> impl Iterator<Item = BranchId> + '_ {
        (0..self.len as u32).map(BranchId).filter(|b| self.is_covered(*b))
    }
}
