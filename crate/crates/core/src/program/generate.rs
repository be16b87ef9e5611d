//! Deterministic generators for synthetic programs, and the named presets.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BranchAnnotation, BranchId, ConditionalGroup, Hardness, ProgramModel};
use crate::error::{Error, Result};

/// Inclusive ranges and rates for the per-branch static annotations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotationRanges {
    pub cmp_count: (u32, u32),
    /// Probability that a branch carries any external calls.
    pub external_rate: f64,
    pub external_calls: (u32, u32),
    pub indirect_rate: f64,
    pub indirect_calls: (u32, u32),
    /// Sanitizer checks placed on a labeled branch.
    pub labels_per_site: (u32, u32),
    pub magic_width: (u8, u8),
}

impl Default for AnnotationRanges {
    fn default() -> Self {
        Self {
            cmp_count: (0, 4),
            external_rate: 0.15,
            external_calls: (1, 2),
            indirect_rate: 0.1,
            indirect_calls: (1, 2),
            labels_per_site: (1, 3),
            magic_width: (16, 32),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Layout {
    /// Conditionals attached as a random recursive tree, plus forward
    /// cross edges.
    Tree,
    /// The entry splits into a shallow region without sanitizer checks,
    /// whose Hard branches are dead ends, and a labeled region behind a
    /// straight-line chain of `chain_len` blocks. Only long (and therefore
    /// large) inputs get there.
    SizeMisleading { chain_len: usize, shallow_fraction: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenParams {
    pub name: String,
    pub branch_count: usize,
    /// Inclusive bounds on conditional-group sizes.
    pub group_size_range: (usize, usize),
    pub hard_fraction: f64,
    /// Probability that an unguarded branch carries sanitizer checks.
    pub label_density: f64,
    /// Multiplier on `label_density` for branches behind a Hard branch.
    pub guarded_label_bias: f64,
    /// Probability that a block attaches below one of the most recently
    /// placed branches instead of a uniformly chosen open one.
    pub attach_recent: f64,
    /// Probability that a leaf branch jumps forward to a later conditional.
    pub cross_edge_rate: f64,
    pub annotations: AnnotationRanges,
    pub layout: Layout,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            name: "synthetic".into(),
            branch_count: 1000,
            group_size_range: (2, 4),
            hard_fraction: 0.3,
            label_density: 0.05,
            guarded_label_bias: 1.0,
            attach_recent: 0.3,
            cross_edge_rate: 0.1,
            annotations: AnnotationRanges::default(),
            layout: Layout::Tree,
        }
    }
}

impl GenParams {
    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.branch_count < 4 {
            return bad(format!("branch_count must be at least 4, got {}", self.branch_count));
        }
        if self.branch_count > u32::MAX as usize / 2 {
            return bad("branch_count too large".into());
        }
        let (lo, hi) = self.group_size_range;
        if lo > hi || hi < 2 {
            return bad(format!("empty group_size_range ({lo}, {hi})"));
        }
        let probs = [
            ("hard_fraction", self.hard_fraction),
            ("label_density", self.label_density),
            ("attach_recent", self.attach_recent),
            ("cross_edge_rate", self.cross_edge_rate),
            ("external_rate", self.annotations.external_rate),
            ("indirect_rate", self.annotations.indirect_rate),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if !(self.guarded_label_bias >= 0.0 && self.guarded_label_bias.is_finite()) {
            return bad("guarded_label_bias must be finite and non-negative".into());
        }
        let a = &self.annotations;
        let ranges = [
            ("cmp_count", a.cmp_count),
            ("external_calls", a.external_calls),
            ("indirect_calls", a.indirect_calls),
            ("labels_per_site", a.labels_per_site),
        ];
        for (name, (lo, hi)) in ranges {
            if lo > hi {
                return bad(format!("empty {name} range ({lo}, {hi})"));
            }
        }
        let (wlo, whi) = a.magic_width;
        if wlo == 0 || wlo > whi || whi > 64 {
            return bad(format!("magic_width range ({wlo}, {whi}) must lie in [1, 64]"));
        }
        if let Layout::SizeMisleading {
            chain_len,
            shallow_fraction,
        } = self.layout
        {
            if !(0.0..=1.0).contains(&shallow_fraction) {
                return bad("shallow_fraction must lie in [0, 1]".into());
            }
            if chain_len + 3 > self.branch_count {
                return bad(format!(
                    "chain_len {chain_len} leaves no room in {} branches",
                    self.branch_count
                ));
            }
        }
        Ok(())
    }
}

struct Unit {
    members: Vec<BranchId>,
}

struct Builder<'a> {
    params: &'a GenParams,
    rng: ChaCha8Rng,
    succ: Vec<Vec<BranchId>>,
    hard: Vec<bool>,
    groups: Vec<ConditionalGroup>,
    /// Fixed branches that must stay Easy (entry, chain, root split).
    pinned: Vec<bool>,
    label_weight: Vec<f64>,
}

impl Builder<'_> {
    fn units(&mut self, start: u32, end: u32) -> Vec<Unit> {
        let (lo, hi) = self.params.group_size_range;
        let lo = lo.max(2);
        let mut units = Vec::new();
        let mut next = start;
        while next < end {
            let left = (end - next) as usize;
            let mut size = self.rng.gen_range(lo..=hi).min(left);
            if left - size == 1 && size < hi {
                size += 1;
            }
            let members: Vec<BranchId> = (next..next + size as u32).map(BranchId).collect();
            if members.len() >= 2 {
                self.groups.push(ConditionalGroup {
                    members: members.clone(),
                });
            }
            next += size as u32;
            units.push(Unit { members });
        }
        units
    }

    fn choose_hard(&mut self, target: usize) {
        let mut primary = Vec::new();
        let mut secondary = Vec::new();
        for g in &self.groups {
            for (pos, &m) in g.members.iter().enumerate() {
                if self.pinned[m.index()] {
                    continue;
                }
                if pos == 0 {
                    secondary.push(m);
                } else {
                    primary.push(m);
                }
            }
        }
        primary.shuffle(&mut self.rng);
        secondary.shuffle(&mut self.rng);
        for b in primary.into_iter().chain(secondary).take(target) {
            self.hard[b.index()] = true;
        }
    }

    /// Hangs each unit below an open (successor-less) branch of the units
    /// placed before it.
    fn attach(&mut self, units: &[Unit], roots: &[BranchId], hard_parents: bool) {
        let mut open: Vec<BranchId> = roots.to_vec();
        let mut reserve: Vec<BranchId> = Vec::new();
        for unit in units {
            if open.is_empty() {
                std::mem::swap(&mut open, &mut reserve);
            }
            let pick = if self.rng.gen_bool(self.params.attach_recent) {
                let recent = open.len().min(4);
                open.len() - 1 - self.rng.gen_range(0..recent)
            } else {
                self.rng.gen_range(0..open.len())
            };
            let parent = open.remove(pick);
            self.succ[parent.index()] = unit.members.clone();
            for &m in &unit.members {
                if hard_parents || !self.hard[m.index()] {
                    open.push(m);
                } else {
                    reserve.push(m);
                }
            }
        }

        if self.params.cross_edge_rate == 0.0 {
            return;
        }
        for (ui, unit) in units.iter().enumerate() {
            if ui + 1 >= units.len() {
                break;
            }
            for &m in &unit.members {
                if !self.succ[m.index()].is_empty() || (!hard_parents && self.hard[m.index()]) {
                    continue;
                }
                if self.rng.gen_bool(self.params.cross_edge_rate) {
                    let target = self.rng.gen_range(ui + 1..units.len());
                    self.succ[m.index()] = units[target].members.clone();
                }
            }
        }
    }
}

/// Builds a connected synthetic program. Identical `(params, rng_seed)`
/// always produce identical models.
pub fn generate_program(params: &GenParams, rng_seed: u64) -> Result<ProgramModel> {
    params.validate()?;
    let n = params.branch_count;
    let mut b = Builder {
        params,
        rng: ChaCha8Rng::seed_from_u64(rng_seed),
        succ: vec![Vec::new(); n],
        hard: vec![false; n],
        groups: Vec::new(),
        pinned: vec![false; n],
        label_weight: vec![1.0; n],
    };
    b.pinned[0] = true;
    let target_hard = (params.hard_fraction * n as f64).round() as usize;

    match params.layout {
        Layout::Tree => {
            let units = b.units(1, n as u32);
            b.choose_hard(target_hard);
            b.attach(&units, &[BranchId(0)], true);
        }
        Layout::SizeMisleading {
            chain_len,
            shallow_fraction,
        } => {
            let (shallow, deep) = (BranchId(1), BranchId(2));
            b.groups.push(ConditionalGroup {
                members: vec![shallow, deep],
            });
            b.succ[0] = vec![shallow, deep];
            let chain_start = 3u32;
            let chain_end = chain_start + chain_len as u32;
            let mut tail = deep;
            for c in chain_start..chain_end {
                b.succ[tail.index()] = vec![BranchId(c)];
                tail = BranchId(c);
            }
            for p in 0..chain_end as usize {
                b.pinned[p] = true;
            }
            let rest = n - chain_end as usize;
            let shallow_count = (rest as f64 * shallow_fraction).round() as usize;
            let split = chain_end + shallow_count as u32;
            let shallow_units = b.units(chain_end, split);
            let deep_units = b.units(split, n as u32);
            b.choose_hard(target_hard);
            b.attach(&shallow_units, &[shallow], false);
            b.attach(&deep_units, &[tail], true);
            // Sanitizer checks only past the chain.
            for w in &mut b.label_weight[..split as usize] {
                *w = 0.0;
            }
        }
    }

    let branches = annotate(&mut b);
    ProgramModel::new(params.name.clone(), rng_seed, branches, b.groups, b.succ, BranchId(0))
}

fn annotate(b: &mut Builder<'_>) -> Vec<BranchAnnotation> {
    let n = b.succ.len();
    let a = &b.params.annotations;
    let guarded = {
        let mut open = vec![false; n];
        let mut work = vec![0usize];
        open[0] = true;
        while let Some(x) = work.pop() {
            for s in &b.succ[x] {
                let s = s.index();
                if !open[s] && !b.hard[s] {
                    open[s] = true;
                    work.push(s);
                }
            }
        }
        open.into_iter().map(|o| !o).collect::<Vec<_>>()
    };

    let mut out = Vec::with_capacity(n);
    for (i, &g) in guarded.iter().enumerate() {
        let rng = &mut b.rng;
        let hardness = if b.hard[i] {
            Hardness::Hard {
                magic_width: rng.gen_range(a.magic_width.0..=a.magic_width.1),
            }
        } else {
            Hardness::Easy
        };
        let bias = if g { b.params.guarded_label_bias } else { 1.0 };
        let p = (b.params.label_density * bias * b.label_weight[i]).clamp(0.0, 1.0);
        let local_labels = if rng.gen_bool(p) {
            rng.gen_range(a.labels_per_site.0..=a.labels_per_site.1)
        } else {
            0
        };
        let cmp_count = rng.gen_range(a.cmp_count.0..=a.cmp_count.1);
        let external_calls = if rng.gen_bool(a.external_rate) {
            rng.gen_range(a.external_calls.0..=a.external_calls.1)
        } else {
            0
        };
        let indirect_calls = if rng.gen_bool(a.indirect_rate) {
            rng.gen_range(a.indirect_calls.0..=a.indirect_calls.1)
        } else {
            0
        };
        out.push(BranchAnnotation {
            reachable_labels: 0,
            local_labels,
            cmp_count,
            external_calls,
            indirect_calls,
            hardness,
        });
    }
    out
}

pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub seed: u64,
    build: fn() -> GenParams,
}

impl Preset {
    pub fn params(&self) -> GenParams {
        GenParams {
            name: self.name.to_string(),
            ..(self.build)()
        }
    }

    pub fn generate(&self) -> Result<ProgramModel> {
        generate_program(&self.params(), self.seed)
    }
}

pub static PRESETS: &[Preset] = &[
    Preset {
        name: "learnable",
        description: "1000 branches, 30% hard; sanitizer checks concentrated behind hard branches",
        seed: 0x5eed_0001,
        build: || GenParams {
            guarded_label_bias: 4.0,
            ..GenParams::default()
        },
    },
    Preset {
        name: "size-misleading",
        description: "labeled region reachable only through a long chain, i.e. by large inputs",
        seed: 0x5eed_0002,
        build: || GenParams {
            label_density: 0.08,
            layout: Layout::SizeMisleading {
                chain_len: 40,
                shallow_fraction: 0.45,
            },
            ..GenParams::default()
        },
    },
    Preset {
        name: "wide",
        description: "600 branches, broad shallow switch-heavy tree",
        seed: 0x5eed_0003,
        build: || GenParams {
            branch_count: 600,
            group_size_range: (3, 6),
            attach_recent: 0.0,
            guarded_label_bias: 2.0,
            ..GenParams::default()
        },
    },
    Preset {
        name: "deep",
        description: "600 branches of two-way conditionals nested deeply",
        seed: 0x5eed_0004,
        build: || GenParams {
            branch_count: 600,
            group_size_range: (2, 2),
            attach_recent: 0.8,
            guarded_label_bias: 2.0,
            ..GenParams::default()
        },
    },
    Preset {
        name: "hard-heavy",
        description: "800 branches, half of them magic-value comparisons",
        seed: 0x5eed_0005,
        build: || GenParams {
            branch_count: 800,
            hard_fraction: 0.5,
            ..GenParams::default()
        },
    },
    Preset {
        name: "label-sparse",
        description: "800 branches with very few sanitizer checks",
        seed: 0x5eed_0006,
        build: || GenParams {
            branch_count: 800,
            label_density: 0.01,
            ..GenParams::default()
        },
    },
    Preset {
        name: "cmp-heavy",
        description: "800 branches with expensive path constraints",
        seed: 0x5eed_0007,
        build: || GenParams {
            branch_count: 800,
            annotations: AnnotationRanges {
                cmp_count: (2, 12),
                ..AnnotationRanges::default()
            },
            ..GenParams::default()
        },
    },
    Preset {
        name: "indirect-heavy",
        description: "800 branches with frequent indirect calls",
        seed: 0x5eed_0008,
        build: || GenParams {
            branch_count: 800,
            annotations: AnnotationRanges {
                indirect_rate: 0.4,
                ..AnnotationRanges::default()
            },
            ..GenParams::default()
        },
    },
    Preset {
        name: "extcall-heavy",
        description: "800 branches with frequent external library calls",
        seed: 0x5eed_0009,
        build: || GenParams {
            branch_count: 800,
            annotations: AnnotationRanges {
                external_rate: 0.4,
                ..AnnotationRanges::default()
            },
            ..GenParams::default()
        },
    },
    Preset {
        name: "tiny",
        description: "64-branch smoke-test program",
        seed: 0x5eed_000a,
        build: || GenParams {
            branch_count: 64,
            label_density: 0.15,
            ..GenParams::default()
        },
    },
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.name).collect()
}

pub fn preset(name: &str) -> Result<&'static Preset> {
    PRESETS
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::UnknownPreset {
            name: name.to_string(),
            available: preset_names().join(", "),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize, hard: f64) -> GenParams {
        GenParams {
            branch_count: n,
            hard_fraction: hard,
            ..GenParams::default()
        }
    }

    fn hard_count(m: &ProgramModel) -> usize {
        m.branches().iter().filter(|a| a.hardness.is_hard()).count()
    }

    #[test]
    fn four_branches_all_easy() {
        let m = generate_program(&params(4, 0.0), 7).unwrap();
        assert_eq!(m.branch_count(), 4);
        assert_eq!(hard_count(&m), 0);
        assert!(!m.groups().is_empty());
    }

    #[test]
    fn hard_fraction_is_respected() {
        let m = generate_program(&params(100, 0.3), 1).unwrap();
        let hard = hard_count(&m);
        assert!((29..=31).contains(&hard), "{hard} hard branches");
    }

    #[test]
    fn generation_is_deterministic() {
        let p = params(300, 0.3);
        assert_eq!(generate_program(&p, 9).unwrap(), generate_program(&p, 9).unwrap());
        assert_ne!(generate_program(&p, 9).unwrap(), generate_program(&p, 10).unwrap());
    }

    #[test]
    fn rejects_bad_params() {
        assert!(matches!(
            generate_program(&params(3, 0.0), 0),
            Err(Error::InvalidParams(_))
        ));
        let mut p = params(10, 0.0);
        p.group_size_range = (4, 3);
        assert!(matches!(generate_program(&p, 0), Err(Error::InvalidParams(_))));
        p.group_size_range = (1, 1);
        assert!(matches!(generate_program(&p, 0), Err(Error::InvalidParams(_))));
        let p = params(10, 1.5);
        assert!(matches!(generate_program(&p, 0), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn all_presets_generate() {
        for p in PRESETS {
            let m = p.generate().unwrap();
            assert_eq!(m.name(), p.name);
            let params = p.params();
            let expect = (params.hard_fraction * params.branch_count as f64).round() as i64;
            assert!((hard_count(&m) as i64 - expect).abs() <= 1, "{}", p.name);
        }
    }

    #[test]
    fn size_misleading_labels_only_behind_chain() {
        let m = preset("size-misleading").unwrap().generate().unwrap();
        let Layout::SizeMisleading {
            chain_len,
            shallow_fraction,
        } = m_params_layout()
        else {
            unreachable!()
        };
        let chain_end = 3 + chain_len;
        let rest = m.branch_count() - chain_end;
        let split = chain_end + (rest as f64 * shallow_fraction).round() as usize;
        assert!(m.branches()[..split].iter().all(|a| a.local_labels == 0));
        assert!(m.summary().guarded_labels > 0);
        // Shallow-region hard branches are dead ends.
        for i in chain_end..split {
            if m.branches()[i].hardness.is_hard() {
                assert!(m.successors(BranchId(i as u32)).is_empty());
            }
        }
    }

    fn m_params_layout() -> Layout {
        preset("size-misleading").unwrap().params().layout
    }

    #[test]
    fn unknown_preset_lists_available() {
        let err = preset("nope").err().unwrap().to_string();
        assert!(err.contains("learnable") && err.contains("size-misleading"));
    }
}
