//! Independent reference implementations shared by the integration and
//! acceptance tests. None of these call into the code they check.

#![allow(dead_code)]

use std::collections::{HashMap, HashSet, VecDeque};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use seedsched::lineage::{Origin, Seed, SeedId};
use seedsched::program::{generate_program, BranchId, GenParams, ProgramModel};
use seedsched::FeatureVector;

/// `(Σ x xᵀ + λI)⁻¹ (Σ x y + λ w₀)`, the regularized least-squares solution
/// shrunk toward `w₀`. With `w₀ = 0` this is plain ridge regression.
pub fn ridge(xs: &[Vec<f64>], ys: &[f64], lambda: f64, w0: &[f64]) -> DVector<f64> {
    let d = w0.len();
    let mut a = DMatrix::<f64>::identity(d, d) * lambda;
    let mut b = DVector::from_column_slice(w0) * lambda;
    for (x, y) in xs.iter().zip(ys) {
        let v = DVector::from_column_slice(x);
        a += &v * v.transpose();
        b += v * *y;
    }
    a.lu().solve(&b).expect("regularized Gram matrix is invertible")
}

pub fn gram(xs: &[Vec<f64>], lambda: f64, d: usize) -> DMatrix<f64> {
    let mut a = DMatrix::<f64>::identity(d, d) * lambda;
    for x in xs {
        let v = DVector::from_column_slice(x);
        a += &v * v.transpose();
    }
    a
}

pub fn random_program<R: Rng>(rng: &mut R, max_branches: usize) -> ProgramModel {
    let params = GenParams {
        branch_count: rng.gen_range(4..=max_branches),
        group_size_range: (2, rng.gen_range(2..=5)),
        hard_fraction: rng.gen_range(0.0..0.6),
        label_density: rng.gen_range(0.0..0.5),
        guarded_label_bias: rng.gen_range(0.5..4.0),
        attach_recent: rng.gen_range(0.0..1.0),
        cross_edge_rate: rng.gen_range(0.0..0.4),
        ..GenParams::default()
    };
    generate_program(&params, rng.gen()).expect("valid generator parameters")
}

/// Labels reachable from each branch, itself included, by explicit DFS.
pub fn reachable_labels(model: &ProgramModel) -> Vec<u64> {
    (0..model.branch_count())
        .map(|start| {
            let mut seen = HashSet::new();
            let mut stack = vec![BranchId(start as u32)];
            let mut total = 0u64;
            while let Some(b) = stack.pop() {
                if !seen.insert(b) {
                    continue;
                }
                total += u64::from(model.branches()[b.index()].local_labels);
                stack.extend(model.successors(b).iter().copied());
            }
            total
        })
        .collect()
}

/// Feature recount from first principles: DFS reachability, a scan over
/// every group, raw sums along the trace.
pub fn features(seed: &Seed, model: &ProgramModel, covered: &[bool], queue_size: usize) -> FeatureVector {
    let reach = reachable_labels(model);
    let distinct: HashSet<BranchId> = seed.trace.iter().copied().collect();
    let mut v = FeatureVector {
        path_length: seed.trace.len() as u64,
        input_size: seed.size,
        first_new_cov: seed.first_new_cov,
        queue_size: queue_size as u64,
        ..FeatureVector::default()
    };
    for b in &seed.trace {
        let a = &model.branches()[b.index()];
        v.external_calls += u64::from(a.external_calls);
        v.cmp_count += u64::from(a.cmp_count);
        v.indirect_calls += u64::from(a.indirect_calls);
    }
    for b in &distinct {
        v.reachable_labels += reach[b.index()];
        v.reached_labels += u64::from(model.branches()[b.index()].local_labels);
        for g in model.groups() {
            if g.members.contains(b) {
                v.undiscovered_neighbors += g.members.iter().filter(|m| *m != b && !covered[m.index()]).count() as u64;
            }
        }
    }
    v
}

/// Any sequence of valid branch ids, biased toward successor steps.
pub fn random_trace<R: Rng>(model: &ProgramModel, rng: &mut R) -> Vec<BranchId> {
    let len = rng.gen_range(1..=model.branch_count().min(40));
    let mut t = vec![model.entry()];
    while t.len() < len {
        let last = *t.last().unwrap();
        let next = match model.successors(last).choose(rng) {
            Some(s) if rng.gen_bool(0.8) => *s,
            _ => BranchId(rng.gen_range(0..model.branch_count() as u32)),
        };
        t.push(next);
    }
    t
}

pub fn seed(id: u64, parent: Option<u64>, created_at: u64) -> Seed {
    Seed {
        id: SeedId(id),
        parent: parent.map(SeedId),
        origin: if parent.is_some() {
            Origin::FuzzerMutation
        } else {
            Origin::Initial
        },
        size: 1,
        trace: vec![BranchId(0)],
        first_new_cov: false,
        created_at,
    }
}

/// A random lineage: a few initial seeds, then children attached to any
/// earlier seed, creation ticks nondecreasing along parent links.
pub fn random_lineage<R: Rng>(rng: &mut R, n: usize) -> Vec<Seed> {
    let initial = rng.gen_range(1..=3.min(n));
    let mut out: Vec<Seed> = (0..initial as u64).map(|i| seed(i, None, 0)).collect();
    for id in initial as u64..n as u64 {
        let parent = rng.gen_range(0..id);
        let born = out[parent as usize].created_at + rng.gen_range(0..3);
        out.push(seed(id, Some(parent), born));
    }
    out
}

/// Size of the tree of `root`: nodes created by `cutoff` whose nearest root
/// ancestor, counting the node itself, is `root`. Found by BFS from every
/// root over child links, claiming each node for the first root that
/// reaches it without crossing another root.
pub fn tree_size(seeds: &[Seed], roots: &HashSet<SeedId>, root: SeedId, cutoff: u64) -> usize {
    let mut children: HashMap<SeedId, Vec<&Seed>> = HashMap::new();
    for s in seeds {
        if let Some(p) = s.parent {
            children.entry(p).or_default().push(s);
        }
    }
    let by_id: HashMap<SeedId, &Seed> = seeds.iter().map(|s| (s.id, s)).collect();
    if by_id[&root].created_at > cutoff {
        return 0;
    }
    let mut count = 0;
    let mut queue = VecDeque::from([root]);
    while let Some(x) = queue.pop_front() {
        count += 1;
        for c in children.get(&x).into_iter().flatten() {
            if !roots.contains(&c.id) && c.created_at <= cutoff {
                queue.push_back(c.id);
            }
        }
    }
    count
}

/// Every root's tree size in one BFS seeded from all roots at once.
pub fn all_tree_sizes(seeds: &[Seed], roots: &HashSet<SeedId>, cutoff: u64) -> HashMap<SeedId, usize> {
    let mut children: HashMap<SeedId, Vec<&Seed>> = HashMap::new();
    for s in seeds {
        if let Some(p) = s.parent {
            children.entry(p).or_default().push(s);
        }
    }
    let mut sizes = HashMap::new();
    let mut queue = VecDeque::new();
    for s in seeds.iter().filter(|s| roots.contains(&s.id)) {
        sizes.insert(s.id, 0);
        if s.created_at <= cutoff {
            queue.push_back((s.id, s.id));
        }
    }
    while let Some((root, x)) = queue.pop_front() {
        *sizes.get_mut(&root).unwrap() += 1;
        for c in children.get(&x).into_iter().flatten() {
            if !roots.contains(&c.id) && c.created_at <= cutoff {
                queue.push_back((root, c.id));
            }
        }
    }
    sizes
}

/// The same count by walking parent links up from every node.
pub fn tree_size_by_ancestry(seeds: &[Seed], roots: &HashSet<SeedId>, root: SeedId, cutoff: u64) -> usize {
    let by_id: HashMap<SeedId, &Seed> = seeds.iter().map(|s| (s.id, s)).collect();
    seeds
        .iter()
        .filter(|s| s.created_at <= cutoff)
        .filter(|s| {
            let mut cur = s.id;
            loop {
                if roots.contains(&cur) {
                    return cur == root;
                }
                match by_id[&cur].parent {
                    Some(p) => cur = p,
                    None => return false,
                }
            }
        })
        .count()
}

/// U statistic by direct pairwise comparison.
pub fn pairwise_u(a: &[f64], b: &[f64]) -> f64 {
    let mut u = 0.0;
    for x in a {
        for y in b {
            if x > y {
                u += 1.0;
            } else if x == y {
                u += 0.5;
            }
        }
    }
    u
}
