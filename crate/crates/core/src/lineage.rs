//! Seed lineage and descendant-tree labels.
//!
//! Every queue entry records its parent. Seeds chosen for concolic execution
//! become roots; the label of a root is the number of seeds in its
//! descendant tree (root included) created up to a cutoff tick. A seed
//! belongs to the tree of its nearest root ancestor only, so the trees form
//! a forest even when a descendant is itself selected later.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::program::BranchId;

pub type Tick = u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SeedId(pub u64);

impl fmt::Display for SeedId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "id:{:06}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    Initial,
    FuzzerMutation,
    ConcolicImport,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Seed {
    pub id: SeedId,
    pub parent: Option<SeedId>,
    pub origin: Origin,
    pub size: u64,
    pub trace: Vec<BranchId>,
    pub first_new_cov: bool,
    pub created_at: Tick,
}

#[derive(Clone, Debug, Default)]
pub struct LineageIndex {
    parent: HashMap<SeedId, Option<SeedId>>,
    created: HashMap<SeedId, Tick>,
    children: HashMap<SeedId, Vec<SeedId>>,
    roots: BTreeSet<SeedId>,
}

impl LineageIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn record_seed(&mut self, seed: &Seed) -> Result<()> {
        if self.parent.contains_key(&seed.id) {
            return Err(Error::DuplicateSeed(seed.id));
        }
        let invalid = |reason: &str| Error::InvalidSeed {
            id: seed.id,
            reason: reason.to_string(),
        };
        match (seed.parent, seed.origin) {
            (None, Origin::Initial) => {}
            (None, _) => return Err(invalid("only initial seeds may lack a parent")),
            (Some(_), Origin::Initial) => return Err(invalid("initial seeds have no parent")),
            (Some(p), _) => {
                let born = *self.created.get(&p).ok_or(Error::UnknownParent {
                    child: seed.id,
                    parent: p,
                })?;
                if seed.created_at < born {
                    return Err(invalid("created before its parent"));
                }
                self.children.entry(p).or_default().push(seed.id);
            }
        }
        self.parent.insert(seed.id, seed.parent);
        self.created.insert(seed.id, seed.created_at);
        Ok(())
    }

    pub fn mark_root(&mut self, id: SeedId) -> Result<()> {
        if !self.parent.contains_key(&id) {
            return Err(Error::UnknownRoot(id));
        }
        self.roots.insert(id);
        Ok(())
    }

    pub fn is_root(&self, id: SeedId) -> bool {
        self.roots.contains(&id)
    }

    pub fn roots(&self) -> impl Iterator<Item = SeedId> + '_ {
        self.roots.iter().copied()
    }

    pub fn parent_of(&self, id: SeedId) -> Option<Option<SeedId>> {
        self.parent.get(&id).copied()
    }

    pub fn children(&self, id: SeedId) -> &[SeedId] {
        self.children.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Seeds in the descendant tree of `root` created at or before `cutoff`,
    /// the root included. Subtrees of other roots are not counted.
    pub fn descendant_tree_size(&self, root: SeedId, cutoff: Tick) -> Result<usize> {
        if !self.roots.contains(&root) {
            return Err(Error::UnknownRoot(root));
        }
        if self.created[&root] > cutoff {
            return Ok(0);
        }
        let mut count = 0;
        let mut stack = vec![root];
        while let Some(node) = stack.pop() {
            count += 1;
            for &c in self.children(node) {
                // Children are never older than their parents, so a child
                // past the cutoff has no counted descendants either.
                if self.created[&c] <= cutoff && !self.roots.contains(&c) {
                    stack.push(c);
                }
            }
        }
        Ok(count)
    }
}

/// A dispatched seed waiting for its descendant tree to grow.
#[derive(Clone, Debug, PartialEq)]
pub struct PendingLabel {
    pub root: SeedId,
    pub features_at_selection: FeatureVector,
    pub selected_at: Tick,
    pub matures_at: Tick,
}

impl PendingLabel {
    pub fn new(root: SeedId, features: FeatureVector, selected_at: Tick, window: Tick) -> Self {
        Self {
            root,
            features_at_selection: features,
            selected_at,
            matures_at: selected_at + window,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaturedLabel {
    pub root: SeedId,
    pub features: FeatureVector,
    pub label: f64,
    pub selected_at: Tick,
    pub matured_at: Tick,
}

/// Removes every entry with `matures_at <= now` from `pending` and labels it
/// with its descendant-tree size at `now`, in selection order.
pub fn mature_labels(pending: &mut Vec<PendingLabel>, index: &LineageIndex, now: Tick) -> Result<Vec<MaturedLabel>> {
    let mut out = Vec::new();
    let mut kept = Vec::with_capacity(pending.len());
    for p in pending.drain(..) {
        if p.matures_at <= now {
            let size = index.descendant_tree_size(p.root, now)?;
            out.push(MaturedLabel {
                root: p.root,
                features: p.features_at_selection,
                label: size as f64,
                selected_at: p.selected_at,
                matured_at: now,
            });
        } else {
            kept.push(p);
        }
    }
    *pending = kept;
    Ok(out)
}
